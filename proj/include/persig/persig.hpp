#pragma once

// Umbrella header: extraction of additive perturbation signatures from a
// 1-bit class-equality oracle, plus the decoder that reconstructs inputs
// from them.

#include "persig/binio.hpp"
#include "persig/classifier.hpp"
#include "persig/config.hpp"
#include "persig/decoder.hpp"
#include "persig/error.hpp"
#include "persig/evaluation.hpp"
#include "persig/extractor.hpp"
#include "persig/grad_check.hpp"
#include "persig/layers.hpp"
#include "persig/loss.hpp"
#include "persig/mnist.hpp"
#include "persig/network.hpp"
#include "persig/optim.hpp"
#include "persig/oracle.hpp"
#include "persig/pipeline.hpp"
#include "persig/rng.hpp"
#include "persig/signature_dataset.hpp"
#include "persig/tensor.hpp"
#include "persig/wire.hpp"

#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "persig/network.hpp"

namespace persig {

enum class OptimizerKind { sgd_momentum, adam };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adam;
    float lr = 1e-3f;
    float momentum = 0.9f; // sgd
    float beta1 = 0.9f;    // adam
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

struct OptimizerState {
    ParamBundle m; // momentum / first moment
    ParamBundle v; // second moment (adam)
    int64_t step = 0;

    static OptimizerState make(const ParamBundle& params) {
        OptimizerState s;
        s.m = zeros_like(params);
        s.v = zeros_like(params);
        return s;
    }
};

inline void optimizer_step(ParamBundle& params, const Gradients& grads, OptimizerState& state,
                           const OptimizerConfig& cfg) {
    if (!params.congruent_with(grads) || !params.congruent_with(state.m))
        throw Error(Errc::shape_mismatch, "optimizer step: bundle shapes disagree");
    state.step += 1;
    if (cfg.kind == OptimizerKind::sgd_momentum) {
        for (size_t t = 0; t < params.tensors.size(); ++t) {
            auto& p = params.tensors[t].tensor.data;
            const auto& g = grads.tensors[t].tensor.data;
            auto& m = state.m.tensors[t].tensor.data;
            for (size_t i = 0; i < p.size(); ++i) {
                m[i] = cfg.momentum * m[i] + g[i];
                p[i] -= cfg.lr * m[i];
            }
        }
        return;
    }
    // adam with bias correction
    const double bc1 = 1.0 - std::pow(static_cast<double>(cfg.beta1), static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(static_cast<double>(cfg.beta2), static_cast<double>(state.step));
    for (size_t t = 0; t < params.tensors.size(); ++t) {
        auto& p = params.tensors[t].tensor.data;
        const auto& g = grads.tensors[t].tensor.data;
        auto& m = state.m.tensors[t].tensor.data;
        auto& v = state.v.tensors[t].tensor.data;
        for (size_t i = 0; i < p.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0f - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0f - cfg.beta2) * g[i] * g[i];
            float mhat = static_cast<float>(m[i] / bc1);
            float vhat = static_cast<float>(v[i] / bc2);
            p[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

} // namespace persig

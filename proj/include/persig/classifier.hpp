#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "persig/loss.hpp"
#include "persig/mnist.hpp"
#include "persig/network.hpp"
#include "persig/optim.hpp"
#include "persig/rng.hpp"

namespace persig {

// The target model M: a small strided-conv CNN over 1x28x28 producing 10
// logits. Downsampling is by stride, no pooling.
struct ClassifierModel {
    std::vector<LayerSpec> specs;
    ParamBundle params;
    uint64_t seed = 0;
    int epochs = 0;
    float accuracy = 0.0f;
};

inline std::vector<LayerSpec> default_classifier_specs() {
    return {
        LayerSpec::conv2d(1, 16, 5, 1, 2),  LayerSpec::relu(),
        LayerSpec::conv2d(16, 32, 5, 2, 2), LayerSpec::relu(),
        LayerSpec::conv2d(32, 32, 3, 2, 1), LayerSpec::relu(),
        LayerSpec::flatten(),
        LayerSpec::dense(32 * 7 * 7, 128),  LayerSpec::relu(),
        LayerSpec::dense(128, 10),
    };
}

inline ClassifierModel build_default_classifier(uint64_t seed) {
    ClassifierModel m;
    m.specs = default_classifier_specs();
    m.params = init_params(m.specs, seed);
    m.seed = seed;
    return m;
}

// Batched top-1: argmax per row, ties broken by lowest class index.
inline std::vector<int> predict_top1_batch(const ClassifierModel& model, const Tensor& images) {
    if (images.shape.size() != 3 || images.shape[1] != 28 || images.shape[2] != 28)
        throw Error(Errc::shape_mismatch, "expected (B,28,28), got " + shape_str(images.shape));
    const int batch = images.shape[0];
    Tensor input = images.reshaped({batch, 1, 28, 28});
    Tensor logits = forward(model.specs, model.params, input);
    if (!logits.all_finite()) throw Error(Errc::non_finite_value, "classifier logits");
    std::vector<int> out(static_cast<size_t>(batch));
    for (int r = 0; r < batch; ++r) {
        const float* row = logits.data.data() + static_cast<size_t>(r) * 10;
        out[static_cast<size_t>(r)] =
            static_cast<int>(std::max_element(row, row + 10) - row); // first max wins
    }
    return out;
}

inline int predict_top1(const ClassifierModel& model, const Tensor& image) {
    if (image.shape != std::vector<int>{28, 28})
        throw Error(Errc::shape_mismatch, "expected (28,28), got " + shape_str(image.shape));
    return predict_top1_batch(model, image.reshaped({1, 28, 28}))[0];
}

inline float classifier_accuracy(const ClassifierModel& model, const ImageSet& set,
                                 int batch = 256) {
    if (set.count() == 0) throw Error(Errc::empty_dataset, "accuracy over empty set");
    size_t correct = 0;
    for (size_t off = 0; off < set.count(); off += static_cast<size_t>(batch)) {
        size_t n = std::min(static_cast<size_t>(batch), set.count() - off);
        Tensor chunk({static_cast<int>(n), 28, 28});
        std::copy(set.pixels.begin() + static_cast<ptrdiff_t>(off * 784),
                  set.pixels.begin() + static_cast<ptrdiff_t>((off + n) * 784),
                  chunk.data.begin());
        std::vector<int> pred = predict_top1_batch(model, chunk);
        for (size_t i = 0; i < n; ++i)
            if (pred[i] == static_cast<int>(set.labels[off + i])) ++correct;
    }
    return static_cast<float>(correct) / static_cast<float>(set.count());
}

struct ClassifierTrainConfig {
    int epochs = 3;
    int batch = 64;
    float lr = 1e-3f;
    uint64_t shuffle_seed = 0;
};

// Adam training, deterministic for fixed seeds at thread count 1. Returns
// per-epoch mean training loss. If eval is non-null the final accuracy on it
// is stored in the model metadata.
inline std::vector<float> train_classifier(ClassifierModel& model, const ImageSet& train,
                                           const ImageSet* eval, const ClassifierTrainConfig& cfg,
                                           std::ostream* log = nullptr) {
    if (train.count() == 0) throw Error(Errc::empty_dataset, "classifier training set");
    OptimizerConfig opt;
    opt.kind = OptimizerKind::adam;
    opt.lr = cfg.lr;
    OptimizerState state = OptimizerState::make(model.params);

    const size_t n = train.count();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::vector<float> epoch_losses;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng rng(cfg.shuffle_seed + static_cast<uint64_t>(epoch));
        std::iota(order.begin(), order.end(), size_t{0});
        rng.shuffle(order);

        double loss_sum = 0.0;
        size_t seen = 0;
        for (size_t off = 0; off < n; off += static_cast<size_t>(cfg.batch)) {
            size_t b = std::min(static_cast<size_t>(cfg.batch), n - off);
            Tensor input({static_cast<int>(b), 1, 28, 28});
            std::vector<int> labels(b);
            for (size_t i = 0; i < b; ++i) {
                size_t src = order[off + i];
                std::copy(train.pixels.begin() + static_cast<ptrdiff_t>(src * 784),
                          train.pixels.begin() + static_cast<ptrdiff_t>((src + 1) * 784),
                          input.data.begin() + static_cast<ptrdiff_t>(i * 784));
                labels[i] = train.labels[src];
            }
            ForwardTrace<float> trace;
            Tensor logits = forward(model.specs, model.params, input, &trace);
            Tensor dlogits;
            float loss = cross_entropy_batch(logits, labels, &dlogits);
            if (!std::isfinite(loss)) throw Error(Errc::non_finite_value, "training loss");
            Gradients grads;
            backward(model.specs, model.params, trace, dlogits, grads);
            optimizer_step(model.params, grads, state, opt);
            loss_sum += static_cast<double>(loss) * static_cast<double>(b);
            seen += b;
        }
        epoch_losses.push_back(static_cast<float>(loss_sum / static_cast<double>(seen)));
        if (log)
            *log << "epoch " << (epoch + 1) << "/" << cfg.epochs
                 << " train loss " << epoch_losses.back() << "\n";
    }
    model.epochs = cfg.epochs;
    if (eval && eval->count() > 0) {
        model.accuracy = classifier_accuracy(model, *eval);
        if (log) *log << "test accuracy " << model.accuracy << "\n";
    }
    return epoch_losses;
}

// key=value sidecar helpers shared by the model artifacts
inline std::string format_float(float v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
    return buf;
}

inline void write_kv_file(const std::string& path,
                          const std::vector<std::pair<std::string, std::string>>& kv) {
    std::ofstream f(path);
    if (!f) throw Error(Errc::io_failure, "cannot open " + path + " for write");
    for (const auto& [k, v] : kv) f << k << "=" << v << "\n";
    if (!f) throw Error(Errc::io_failure, "write failed: " + path);
}

inline std::map<std::string, std::string> read_kv_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error(Errc::io_failure, "cannot open " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#') continue;
        auto pos = line.find('=');
        if (pos == std::string::npos) continue;
        kv[line.substr(0, pos)] = line.substr(pos + 1);
    }
    return kv;
}

inline void save_classifier(const ClassifierModel& model, const std::string& params_path,
                            const std::string& meta_path) {
    save_params(model.params, params_path);
    write_kv_file(meta_path, {
                                 {"seed", std::to_string(model.seed)},
                                 {"epochs", std::to_string(model.epochs)},
                                 {"accuracy", format_float(model.accuracy)},
                             });
}

inline ClassifierModel load_classifier(const std::string& params_path,
                                       const std::string& meta_path) {
    ClassifierModel m;
    m.specs = default_classifier_specs();
    m.params = load_params(params_path);
    ParamBundle expect = init_params(m.specs, 0);
    if (!m.params.congruent_with(expect))
        throw Error(Errc::shape_mismatch, "loaded parameters do not fit the classifier");
    auto kv = read_kv_file(meta_path);
    if (auto it = kv.find("seed"); it != kv.end()) m.seed = std::stoull(it->second);
    if (auto it = kv.find("epochs"); it != kv.end()) m.epochs = std::stoi(it->second);
    if (auto it = kv.find("accuracy"); it != kv.end()) m.accuracy = std::stof(it->second);
    return m;
}

} // namespace persig

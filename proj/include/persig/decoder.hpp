#pragma once

#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "persig/classifier.hpp"
#include "persig/network.hpp"
#include "persig/optim.hpp"
#include "persig/signature_dataset.hpp"

namespace persig {

// Generator-style reconstruction network: the signature is projected to a
// 64x7x7 tensor and upsampled twice by stride-2 transpose convolutions to a
// sigmoid 28x28 image. Valid only for the direction set and normalization it
// was trained with, so both are bound into the model.
struct DecoderModel {
    std::vector<LayerSpec> specs;
    ParamBundle params;
    int input_dim = 100;
    uint64_t seed = 0;

    uint64_t direction_seed = 0;
    std::vector<float> stat_mean;
    std::vector<float> stat_std;

    int epochs = 0;
    float final_train_loss = 0.0f;
    float final_val_loss = 0.0f;

    bool bound() const {
        return stat_mean.size() == static_cast<size_t>(input_dim) &&
               stat_std.size() == static_cast<size_t>(input_dim);
    }
};

inline std::vector<LayerSpec> default_decoder_specs(int input_dim) {
    return {
        LayerSpec::dense(input_dim, 64 * 7 * 7),
        LayerSpec::leakyrelu(0.2f),
        LayerSpec::reshape(64, 7, 7),
        LayerSpec::convtranspose2d(64, 32, 4, 2, 1),
        LayerSpec::leakyrelu(0.2f),
        LayerSpec::convtranspose2d(32, 1, 4, 2, 1),
        LayerSpec::sigmoid(),
    };
}

inline DecoderModel build_default_decoder(uint64_t seed, int input_dim = 100) {
    if (input_dim < 1) throw Error(Errc::bad_config, "decoder input_dim must be >= 1");
    DecoderModel m;
    m.specs = default_decoder_specs(input_dim);
    m.params = init_params(m.specs, seed);
    m.input_dim = input_dim;
    m.seed = seed;
    return m;
}

struct DecoderTrainConfig {
    int epochs = 30;
    int batch = 64;
    float lr = 1e-3f;
    float validation_fraction = 0.1f;
    uint64_t shuffle_seed = 0;
};

struct DecoderTrainLog {
    std::vector<float> train_loss; // per epoch
    std::vector<float> val_loss;
};

// L2 training on (normalized signature, image) pairs. Binds the dataset's
// direction seed and stats into the model. Deterministic for fixed seeds at
// thread count 1.
inline DecoderTrainLog train_decoder(DecoderModel& model, const SignatureDataset& dataset,
                                     const DecoderTrainConfig& cfg, std::ostream* log = nullptr) {
    if (dataset.records.size() < 10)
        throw Error(Errc::dataset_too_small,
                    std::to_string(dataset.records.size()) + " records, need >= 10");
    if (!dataset.has_stats()) throw Error(Errc::stats_missing, "dataset has no epsilon stats");
    if (dataset.direction_count != model.input_dim)
        throw Error(Errc::length_mismatch, "dataset dimensions vs decoder input");

    model.direction_seed = dataset.direction_seed;
    model.stat_mean = dataset.stat_mean;
    model.stat_std = dataset.stat_std;

    const size_t n = dataset.records.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    Rng split_rng(cfg.shuffle_seed);
    split_rng.shuffle(order);
    const size_t val_n = static_cast<size_t>(
        std::lround(static_cast<double>(cfg.validation_fraction) * static_cast<double>(n)));
    std::vector<size_t> val_idx(order.end() - static_cast<ptrdiff_t>(val_n), order.end());
    std::vector<size_t> train_idx(order.begin(), order.end() - static_cast<ptrdiff_t>(val_n));
    if (train_idx.empty()) throw Error(Errc::dataset_too_small, "validation split leaves no training records");

    const int dim = model.input_dim;
    auto fill_batch = [&](const std::vector<size_t>& idx, size_t off, size_t b, Tensor& in,
                          Tensor& target) {
        in = Tensor({static_cast<int>(b), dim});
        target = Tensor({static_cast<int>(b), 1, 28, 28});
        for (size_t i = 0; i < b; ++i) {
            const auto& rec = dataset.records[idx[off + i]];
            std::vector<float> norm =
                normalize_signature(rec.signature, model.stat_mean, model.stat_std);
            std::copy(norm.begin(), norm.end(),
                      in.data.begin() + static_cast<ptrdiff_t>(i * static_cast<size_t>(dim)));
            std::copy(rec.image.data.begin(), rec.image.data.end(),
                      target.data.begin() + static_cast<ptrdiff_t>(i * 784));
        }
    };

    auto eval_loss = [&](const std::vector<size_t>& idx) -> float {
        if (idx.empty()) return 0.0f;
        double total = 0.0;
        for (size_t off = 0; off < idx.size(); off += static_cast<size_t>(cfg.batch)) {
            size_t b = std::min(static_cast<size_t>(cfg.batch), idx.size() - off);
            Tensor in, target;
            fill_batch(idx, off, b, in, target);
            Tensor out = forward(model.specs, model.params, in);
            total += static_cast<double>(mse_loss(out, target)) * static_cast<double>(b);
        }
        return static_cast<float>(total / static_cast<double>(idx.size()));
    };

    OptimizerConfig opt;
    opt.kind = OptimizerKind::adam;
    opt.lr = cfg.lr;
    OptimizerState state = OptimizerState::make(model.params);

    DecoderTrainLog history;
    std::vector<size_t> epoch_order = train_idx;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng rng(cfg.shuffle_seed + 1 + static_cast<uint64_t>(epoch));
        epoch_order = train_idx;
        rng.shuffle(epoch_order);

        double loss_sum = 0.0;
        for (size_t off = 0; off < epoch_order.size(); off += static_cast<size_t>(cfg.batch)) {
            size_t b = std::min(static_cast<size_t>(cfg.batch), epoch_order.size() - off);
            Tensor in, target;
            fill_batch(epoch_order, off, b, in, target);
            ForwardTrace<float> trace;
            Tensor out = forward(model.specs, model.params, in, &trace);
            Tensor dout;
            float loss = mse_loss(out, target, &dout);
            if (!std::isfinite(loss)) throw Error(Errc::non_finite_value, "decoder loss");
            Gradients grads;
            backward(model.specs, model.params, trace, dout, grads);
            optimizer_step(model.params, grads, state, opt);
            loss_sum += static_cast<double>(loss) * static_cast<double>(b);
        }
        history.train_loss.push_back(
            static_cast<float>(loss_sum / static_cast<double>(epoch_order.size())));
        history.val_loss.push_back(eval_loss(val_idx));
        if (log)
            *log << "epoch " << (epoch + 1) << "/" << cfg.epochs << " train mse "
                 << history.train_loss.back() << " val mse " << history.val_loss.back() << "\n";
    }

    model.epochs = cfg.epochs;
    if (!history.train_loss.empty()) {
        model.final_train_loss = history.train_loss.back();
        model.final_val_loss = history.val_loss.back();
    }
    return history;
}

inline Tensor reconstruct(const DecoderModel& model, const Signature& signature) {
    if (!model.bound()) throw Error(Errc::stats_missing, "decoder has no bound stats");
    if (signature.size() != model.input_dim)
        throw Error(Errc::length_mismatch, std::to_string(signature.size()) + " vs input_dim " +
                                               std::to_string(model.input_dim));
    if (signature.direction_seed != model.direction_seed)
        throw Error(Errc::direction_set_mismatch,
                    "signature produced under direction seed " +
                        std::to_string(signature.direction_seed) + ", decoder bound to " +
                        std::to_string(model.direction_seed));
    std::vector<float> norm = normalize_signature(signature, model.stat_mean, model.stat_std);
    Tensor in({1, model.input_dim});
    std::copy(norm.begin(), norm.end(), in.data.begin());
    Tensor out = forward(model.specs, model.params, in);
    return out.reshaped({28, 28});
}

namespace detail {

inline std::string floats_to_csv(const std::vector<float>& v) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += format_float(v[i]);
    }
    return out;
}

inline std::vector<float> csv_to_floats(const std::string& s) {
    std::vector<float> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ','))
        if (!tok.empty()) out.push_back(std::stof(tok));
    return out;
}

} // namespace detail

inline void save_decoder(const DecoderModel& model, const std::string& params_path,
                         const std::string& meta_path) {
    save_params(model.params, params_path);
    write_kv_file(meta_path, {
                                 {"seed", std::to_string(model.seed)},
                                 {"input_dim", std::to_string(model.input_dim)},
                                 {"direction_seed", std::to_string(model.direction_seed)},
                                 {"epochs", std::to_string(model.epochs)},
                                 {"final_train_loss", format_float(model.final_train_loss)},
                                 {"final_val_loss", format_float(model.final_val_loss)},
                                 {"stat_mean", detail::floats_to_csv(model.stat_mean)},
                                 {"stat_std", detail::floats_to_csv(model.stat_std)},
                             });
}

inline DecoderModel load_decoder(const std::string& params_path, const std::string& meta_path) {
    auto kv = read_kv_file(meta_path);
    auto need = [&](const char* key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end())
            throw Error(Errc::stats_missing, std::string("decoder meta lacks ") + key);
        return it->second;
    };
    DecoderModel m;
    m.input_dim = std::stoi(need("input_dim"));
    m.specs = default_decoder_specs(m.input_dim);
    m.params = load_params(params_path);
    ParamBundle expect = init_params(m.specs, 0);
    if (!m.params.congruent_with(expect))
        throw Error(Errc::shape_mismatch, "loaded parameters do not fit the decoder");
    m.seed = std::stoull(need("seed"));
    m.direction_seed = std::stoull(need("direction_seed"));
    m.epochs = std::stoi(need("epochs"));
    m.final_train_loss = std::stof(need("final_train_loss"));
    m.final_val_loss = std::stof(need("final_val_loss"));
    m.stat_mean = detail::csv_to_floats(need("stat_mean"));
    m.stat_std = detail::csv_to_floats(need("stat_std"));
    if (!m.bound()) throw Error(Errc::stats_missing, "decoder meta stats have wrong length");
    return m;
}

} // namespace persig

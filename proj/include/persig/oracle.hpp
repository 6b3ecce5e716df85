#pragma once

#include <atomic>
#include <cstdint>
#include <vector>

#include "persig/classifier.hpp"
#include "persig/tensor.hpp"

namespace persig {

struct OracleStats {
    uint64_t queries = 0;
    uint64_t flips = 0;
};

// The adversary's only capability: one bit per additive perturbation, telling
// whether the top-1 class of X + N still equals the top-1 class of X. The
// secret image, its class, and all logits stay inside. Perturbed inputs are
// deliberately NOT clipped to [0,1] (the additive setting places no box
// constraint on X + N, and clipping would change epsilon semantics).
class OracleSession {
public:
    OracleSession(const ClassifierModel& model, const Tensor& secret)
        : model_(model), secret_(secret) {
        if (secret_.shape != std::vector<int>{28, 28})
            throw Error(Errc::shape_mismatch, "secret must be (28,28)");
        if (!secret_.all_finite()) throw Error(Errc::non_finite_value, "secret image");
        base_class_ = predict_top1(model_, secret_);
    }

    OracleSession(const OracleSession&) = delete;
    OracleSession& operator=(const OracleSession&) = delete;

    bool query(const Tensor& perturbation) {
        if (perturbation.shape != std::vector<int>{28, 28})
            throw Error(Errc::shape_mismatch, "perturbation must be (28,28)");
        return query_batch(perturbation.reshaped({1, 28, 28}))[0];
    }

    // One forward pass per element; answers[k] == query(perturbations[k]).
    std::vector<bool> query_batch(const Tensor& perturbations) {
        if (perturbations.shape.size() != 3 || perturbations.shape[1] != 28 ||
            perturbations.shape[2] != 28)
            throw Error(Errc::shape_mismatch,
                        "expected (B,28,28), got " + shape_str(perturbations.shape));
        const int batch = perturbations.shape[0];
        if (batch < 1) throw Error(Errc::empty_batch, "query batch must hold >= 1 perturbation");
        if (!perturbations.all_finite()) throw Error(Errc::non_finite_value, "perturbation");

        Tensor probes({batch, 28, 28});
        for (int b = 0; b < batch; ++b) {
            const float* n = perturbations.data.data() + static_cast<size_t>(b) * 784;
            float* p = probes.data.data() + static_cast<size_t>(b) * 784;
            for (int i = 0; i < 784; ++i) p[i] = secret_.data[static_cast<size_t>(i)] + n[i];
        }
        std::vector<int> classes = predict_top1_batch(model_, probes);

        std::vector<bool> equal(static_cast<size_t>(batch));
        uint64_t flips = 0;
        for (int b = 0; b < batch; ++b) {
            bool eq = classes[static_cast<size_t>(b)] == base_class_;
            equal[static_cast<size_t>(b)] = eq;
            if (!eq) ++flips;
        }
        queries_.fetch_add(static_cast<uint64_t>(batch), std::memory_order_relaxed);
        flips_.fetch_add(flips, std::memory_order_relaxed);
        return equal;
    }

    OracleStats stats() const {
        return {queries_.load(std::memory_order_relaxed), flips_.load(std::memory_order_relaxed)};
    }

private:
    const ClassifierModel& model_;
    Tensor secret_;
    int base_class_;
    std::atomic<uint64_t> queries_{0};
    std::atomic<uint64_t> flips_{0};
};

inline OracleSession open_session(const ClassifierModel& model, const Tensor& secret) {
    return OracleSession(model, secret);
}

} // namespace persig

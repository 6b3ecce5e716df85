#pragma once

#include <cmath>
#include <vector>

#include "persig/tensor.hpp"

namespace persig {

// Row-wise softmax with max subtraction. Accepts (B, classes) or (classes).
template <class T>
TensorT<T> softmax(const TensorT<T>& logits) {
    if (logits.shape.empty()) throw Error(Errc::shape_mismatch, "softmax needs rank >= 1");
    if (!logits.all_finite()) throw Error(Errc::non_finite_value, "softmax input");
    const int classes = logits.shape.back();
    const int rows = static_cast<int>(logits.numel()) / classes;
    TensorT<T> out = logits;
    for (int r = 0; r < rows; ++r) {
        T* p = out.data.data() + static_cast<size_t>(r) * classes;
        T mx = p[0];
        for (int c = 1; c < classes; ++c) mx = std::max(mx, p[c]);
        T sum = T(0);
        for (int c = 0; c < classes; ++c) {
            p[c] = std::exp(p[c] - mx);
            sum += p[c];
        }
        for (int c = 0; c < classes; ++c) p[c] /= sum;
    }
    return out;
}

// Single-sample cross entropy on softmax probabilities:
// loss = -log(max(p[label], 1e-12)), d loss / d logits = p - onehot(label).
template <class T>
T cross_entropy_loss(const TensorT<T>& probs, int label, TensorT<T>* dlogits = nullptr) {
    const int classes = static_cast<int>(probs.numel());
    if (label < 0 || label >= classes)
        throw Error(Errc::label_out_of_range, "label " + std::to_string(label));
    T p = std::max(probs.data[static_cast<size_t>(label)], T(1e-12));
    if (dlogits) {
        *dlogits = probs;
        dlogits->data[static_cast<size_t>(label)] -= T(1);
    }
    return -std::log(p);
}

// Batch form over logits (B, classes): mean loss, gradient scaled by 1/B.
template <class T>
T cross_entropy_batch(const TensorT<T>& logits, const std::vector<int>& labels,
                      TensorT<T>* dlogits = nullptr) {
    const int classes = logits.shape.back();
    const int batch = logits.shape[0];
    if (static_cast<int>(labels.size()) != batch)
        throw Error(Errc::count_mismatch, "labels vs batch");
    TensorT<T> probs = softmax(logits);
    if (dlogits) *dlogits = probs;
    T total = T(0);
    for (int r = 0; r < batch; ++r) {
        int label = labels[static_cast<size_t>(r)];
        if (label < 0 || label >= classes)
            throw Error(Errc::label_out_of_range, "label " + std::to_string(label));
        T p = std::max(probs.data[static_cast<size_t>(r) * classes + label], T(1e-12));
        total -= std::log(p);
        if (dlogits) dlogits->data[static_cast<size_t>(r) * classes + label] -= T(1);
    }
    if (dlogits)
        for (auto& v : dlogits->data) v /= static_cast<T>(batch);
    return total / static_cast<T>(batch);
}

// Mean of squared differences over every element; gradient 2*(pred-target)/n.
template <class T>
T mse_loss(const TensorT<T>& pred, const TensorT<T>& target, TensorT<T>* dpred = nullptr) {
    if (!pred.same_shape(target))
        throw Error(Errc::shape_mismatch,
                    "mse " + shape_str(pred.shape) + " vs " + shape_str(target.shape));
    const size_t n = pred.data.size();
    T total = T(0);
    if (dpred) *dpred = TensorT<T>(pred.shape);
    for (size_t i = 0; i < n; ++i) {
        T d = pred.data[i] - target.data[i];
        total += d * d;
        if (dpred) dpred->data[i] = T(2) * d / static_cast<T>(n);
    }
    return total / static_cast<T>(n);
}

} // namespace persig

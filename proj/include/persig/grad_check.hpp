#pragma once

#include <vector>

#include "persig/loss.hpp"
#include "persig/network.hpp"

namespace persig {

// Loss head for the finite-difference checker.
struct GradCheckLoss {
    enum class Kind { softmax_ce, mse } kind = Kind::mse;
    std::vector<int> labels;     // softmax_ce, one per batch row
    TensorT<double> target;      // mse

    static GradCheckLoss ce(std::vector<int> labels) {
        GradCheckLoss l;
        l.kind = Kind::softmax_ce;
        l.labels = std::move(labels);
        return l;
    }
    static GradCheckLoss mse(TensorT<double> target) {
        GradCheckLoss l;
        l.kind = Kind::mse;
        l.target = std::move(target);
        return l;
    }
};

namespace detail {

inline double loss_value(const GradCheckLoss& loss, const TensorT<double>& out,
                         TensorT<double>* dout = nullptr) {
    if (loss.kind == GradCheckLoss::Kind::softmax_ce)
        return cross_entropy_batch(out, loss.labels, dout);
    return mse_loss(out, loss.target, dout);
}

} // namespace detail

// Central-difference gradient check at double precision, step 1e-4.
// Compares the analytic parameter and input gradients against finite
// differences and returns the max relative error,
// |a - n| / max(1e-6, |a| + |n|). Small instances only.
inline double grad_check(const std::vector<LayerSpec>& specs, ParamBundleT<double> params,
                         TensorT<double> input, const GradCheckLoss& loss) {
    const double h = 1e-4;

    ForwardTrace<double> trace;
    TensorT<double> out = forward(specs, params, input, &trace);
    TensorT<double> dout;
    detail::loss_value(loss, out, &dout);
    ParamBundleT<double> analytic;
    TensorT<double> dinput = backward(specs, params, trace, dout, analytic);

    auto eval = [&]() { return detail::loss_value(loss, forward(specs, params, input)); };

    double max_rel = 0.0;
    auto update = [&](double a, double* scalar) {
        double keep = *scalar;
        *scalar = keep + h;
        double up = eval();
        *scalar = keep - h;
        double down = eval();
        *scalar = keep;
        double n = (up - down) / (2.0 * h);
        double rel = std::abs(a - n) / std::max(1e-6, std::abs(a) + std::abs(n));
        max_rel = std::max(max_rel, rel);
    };

    for (size_t t = 0; t < params.tensors.size(); ++t) {
        auto& data = params.tensors[t].tensor.data;
        for (size_t i = 0; i < data.size(); ++i)
            update(analytic.tensors[t].tensor.data[i], &data[i]);
    }
    for (size_t i = 0; i < input.data.size(); ++i) update(dinput.data[i], &input.data[i]);

    return max_rel;
}

} // namespace persig

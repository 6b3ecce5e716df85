#pragma once

#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "persig/binio.hpp"
#include "persig/layers.hpp"
#include "persig/rng.hpp"
#include "persig/tensor.hpp"

namespace persig {

template <class T>
struct NamedTensorT {
    std::string name;
    TensorT<T> tensor;
};

// Ordered list of named weight/bias tensors for a LayerSpec sequence.
// Gradients reuse the same structure.
template <class T>
struct ParamBundleT {
    std::vector<NamedTensorT<T>> tensors;

    int64_t total_scalars() const {
        int64_t n = 0;
        for (const auto& t : tensors) n += t.tensor.numel();
        return n;
    }

    bool congruent_with(const ParamBundleT& o) const {
        if (tensors.size() != o.tensors.size()) return false;
        for (size_t i = 0; i < tensors.size(); ++i)
            if (tensors[i].tensor.shape != o.tensors[i].tensor.shape) return false;
        return true;
    }

    template <class U>
    ParamBundleT<U> cast() const {
        ParamBundleT<U> out;
        out.tensors.reserve(tensors.size());
        for (const auto& t : tensors)
            out.tensors.push_back({t.name, t.tensor.template cast<U>()});
        return out;
    }
};

using ParamBundle = ParamBundleT<float>;
using Gradients = ParamBundle;

namespace detail {

inline std::vector<int> weight_shape(const LayerSpec& ls) {
    switch (ls.kind) {
        case LayerKind::dense: return {ls.out, ls.in};
        case LayerKind::conv2d: return {ls.out, ls.in, ls.kh, ls.kw};
        case LayerKind::convtranspose2d: return {ls.in, ls.out, ls.kh, ls.kw};
        default: return {};
    }
}

inline int fan_in(const LayerSpec& ls) {
    if (ls.kind == LayerKind::dense) return ls.in;
    return ls.in * ls.kh * ls.kw;
}

} // namespace detail

// Seeded uniform fan-in init: W, b ~ U(-1/sqrt(fan_in), +1/sqrt(fan_in)),
// drawn layer by layer, weight then bias, row-major.
template <class T = float>
ParamBundleT<T> init_params(const std::vector<LayerSpec>& specs, uint64_t seed) {
    ParamBundleT<T> params;
    Rng rng(seed);
    int idx = 0;
    for (const auto& ls : specs) {
        if (!ls.has_params()) {
            ++idx;
            continue;
        }
        double bound = 1.0 / std::sqrt(static_cast<double>(detail::fan_in(ls)));
        std::string prefix = "layer" + std::to_string(idx);
        TensorT<T> w(detail::weight_shape(ls));
        for (auto& v : w.data) v = static_cast<T>(rng.uniform(-bound, bound));
        TensorT<T> b({ls.out});
        for (auto& v : b.data) v = static_cast<T>(rng.uniform(-bound, bound));
        params.tensors.push_back({prefix + ".weight", std::move(w)});
        params.tensors.push_back({prefix + ".bias", std::move(b)});
        ++idx;
    }
    return params;
}

template <class T = float>
ParamBundleT<T> zeros_like(const ParamBundleT<T>& p) {
    ParamBundleT<T> out;
    out.tensors.reserve(p.tensors.size());
    for (const auto& t : p.tensors) {
        NamedTensorT<T> z{t.name, TensorT<T>(t.tensor.shape)};
        out.tensors.push_back(std::move(z));
    }
    return out;
}

// Retained per-layer inputs from a forward pass, consumed by backward.
template <class T>
struct ForwardTrace {
    std::vector<TensorT<T>> inputs;
    TensorT<T> output;
};

namespace detail {

template <class T>
void dense_forward(const LayerSpec& ls, const TensorT<T>& w, const TensorT<T>& b,
                   const TensorT<T>& x, int batch, TensorT<T>& y) {
    gemm(false, true, batch, ls.out, ls.in, T(1), x.data.data(), ls.in, w.data.data(), ls.in,
         T(0), y.data.data(), ls.out);
    for (int r = 0; r < batch; ++r) {
        T* yr = y.data.data() + static_cast<size_t>(r) * ls.out;
        for (int o = 0; o < ls.out; ++o) yr[o] += b.data[o];
    }
}

template <class T>
void conv2d_forward(const LayerSpec& ls, const TensorT<T>& w, const TensorT<T>& b,
                    const TensorT<T>& x, int batch, int H, int W, int oh, int ow, TensorT<T>& y,
                    std::vector<T>& cols) {
    const int K = ls.in * ls.kh * ls.kw;
    const int N = oh * ow;
    cols.resize(static_cast<size_t>(K) * N);
    const size_t in_stride = static_cast<size_t>(ls.in) * H * W;
    const size_t out_stride = static_cast<size_t>(ls.out) * N;
    for (int bi = 0; bi < batch; ++bi) {
        im2col(x.data.data() + bi * in_stride, ls.in, H, W, ls.kh, ls.kw, ls.stride, ls.pad, oh,
               ow, cols.data());
        T* yb = y.data.data() + bi * out_stride;
        gemm(false, false, ls.out, N, K, T(1), w.data.data(), K, cols.data(), N, T(0), yb, N);
        for (int m = 0; m < ls.out; ++m) {
            T bias = b.data[m];
            T* row = yb + static_cast<size_t>(m) * N;
            for (int n = 0; n < N; ++n) row[n] += bias;
        }
    }
}

template <class T>
void convtranspose2d_forward(const LayerSpec& ls, const TensorT<T>& w, const TensorT<T>& b,
                             const TensorT<T>& x, int batch, int ih, int iw, int oh, int ow,
                             TensorT<T>& y, std::vector<T>& cols) {
    const int K = ls.out * ls.kh * ls.kw; // weight is (in, out, kh, kw)
    const int N = ih * iw;
    cols.resize(static_cast<size_t>(K) * N);
    const size_t in_stride = static_cast<size_t>(ls.in) * N;
    const size_t out_stride = static_cast<size_t>(ls.out) * oh * ow;
    for (int bi = 0; bi < batch; ++bi) {
        const T* xb = x.data.data() + bi * in_stride;
        // cols = W^T @ x, then scatter-add into the output grid
        gemm(true, false, K, N, ls.in, T(1), w.data.data(), K, xb, N, T(0), cols.data(), N);
        T* yb = y.data.data() + bi * out_stride;
        std::fill(yb, yb + out_stride, T(0));
        col2im(cols.data(), ls.out, oh, ow, ls.kh, ls.kw, ls.stride, ls.pad, ih, iw, yb);
        for (int m = 0; m < ls.out; ++m) {
            T bias = b.data[m];
            T* row = yb + static_cast<size_t>(m) * oh * ow;
            for (int n = 0; n < oh * ow; ++n) row[n] += bias;
        }
    }
}

} // namespace detail

// Forward over the layer stack. Input carries a leading batch dimension:
// (B, C, H, W) for conv stacks, (B, F) for dense stacks. Pass a trace to
// retain activations for backward.
template <class T>
TensorT<T> forward(const std::vector<LayerSpec>& specs, const ParamBundleT<T>& params,
                   const TensorT<T>& input, ForwardTrace<T>* trace = nullptr) {
    if (input.shape.size() < 2)
        throw Error(Errc::shape_mismatch, "input must carry a batch dimension");
    const int batch = input.shape[0];

    TensorT<T> x = input;
    if (trace) {
        trace->inputs.clear();
        trace->inputs.reserve(specs.size());
    }

    size_t pi = 0;
    auto next_param = [&](const char* what) -> const TensorT<T>& {
        if (pi >= params.tensors.size())
            throw Error(Errc::shape_mismatch, std::string("missing ") + what + " tensor");
        return params.tensors[pi++].tensor;
    };

    for (const auto& ls : specs) {
        std::vector<int> sample_shape(x.shape.begin() + 1, x.shape.end());
        std::vector<int> out_sample = layer_out_shape(ls, sample_shape);
        std::vector<int> out_full;
        out_full.push_back(batch);
        out_full.insert(out_full.end(), out_sample.begin(), out_sample.end());

        if (trace) trace->inputs.push_back(x);

        TensorT<T> y;
        switch (ls.kind) {
            case LayerKind::dense: {
                const TensorT<T>& w = next_param("weight");
                const TensorT<T>& b = next_param("bias");
                if (w.shape != detail::weight_shape(ls) || b.shape != std::vector<int>{ls.out})
                    throw Error(Errc::shape_mismatch, "dense parameter shape");
                y = TensorT<T>(out_full);
                detail::dense_forward(ls, w, b, x, batch, y);
                break;
            }
            case LayerKind::conv2d: {
                const TensorT<T>& w = next_param("weight");
                const TensorT<T>& b = next_param("bias");
                if (w.shape != detail::weight_shape(ls) || b.shape != std::vector<int>{ls.out})
                    throw Error(Errc::shape_mismatch, "conv2d parameter shape");
                y = TensorT<T>(out_full);
                std::vector<T> cols;
                detail::conv2d_forward(ls, w, b, x, batch, sample_shape[1], sample_shape[2],
                                       out_sample[1], out_sample[2], y, cols);
                break;
            }
            case LayerKind::convtranspose2d: {
                const TensorT<T>& w = next_param("weight");
                const TensorT<T>& b = next_param("bias");
                if (w.shape != detail::weight_shape(ls) || b.shape != std::vector<int>{ls.out})
                    throw Error(Errc::shape_mismatch, "convtranspose2d parameter shape");
                y = TensorT<T>(out_full);
                std::vector<T> cols;
                detail::convtranspose2d_forward(ls, w, b, x, batch, sample_shape[1],
                                                sample_shape[2], out_sample[1], out_sample[2], y,
                                                cols);
                break;
            }
            case LayerKind::relu: {
                y = x;
                for (auto& v : y.data) v = v > T(0) ? v : T(0);
                break;
            }
            case LayerKind::leakyrelu: {
                y = x;
                const T slope = static_cast<T>(ls.slope);
                for (auto& v : y.data) v = v > T(0) ? v : slope * v;
                break;
            }
            case LayerKind::sigmoid: {
                y = x;
                for (auto& v : y.data) v = T(1) / (T(1) + std::exp(-v));
                break;
            }
            case LayerKind::flatten:
            case LayerKind::reshape: {
                y = x.reshaped(out_full);
                break;
            }
        }
        x = std::move(y);
    }
    if (pi != params.tensors.size())
        throw Error(Errc::shape_mismatch, "parameter bundle has extra tensors");
    if (trace) trace->output = x;
    return x;
}

// Backward over the stack; returns the input gradient and fills `grads`
// (shape-congruent with params, zero-initialized here).
template <class T>
TensorT<T> backward(const std::vector<LayerSpec>& specs, const ParamBundleT<T>& params,
                    const ForwardTrace<T>& trace, const TensorT<T>& upstream,
                    ParamBundleT<T>& grads) {
    if (trace.inputs.size() != specs.size())
        throw Error(Errc::missing_activations, "forward trace does not cover the layer stack");
    grads = zeros_like(params);

    // param index of the last tensor, walked backwards
    int pi = static_cast<int>(params.tensors.size());
    TensorT<T> dy = upstream;

    for (int li = static_cast<int>(specs.size()) - 1; li >= 0; --li) {
        const LayerSpec& ls = specs[li];
        const TensorT<T>& x = trace.inputs[static_cast<size_t>(li)];
        const int batch = x.shape[0];

        switch (ls.kind) {
            case LayerKind::dense: {
                pi -= 2;
                const TensorT<T>& w = params.tensors[pi].tensor;
                TensorT<T>& dw = grads.tensors[pi].tensor;
                TensorT<T>& db = grads.tensors[pi + 1].tensor;
                if (dy.shape != std::vector<int>{batch, ls.out})
                    throw Error(Errc::shape_mismatch, "dense upstream gradient shape");
                // dW = dY^T @ X, dX = dY @ W, db = colsum(dY)
                gemm(true, false, ls.out, ls.in, batch, T(1), dy.data.data(), ls.out,
                     x.data.data(), ls.in, T(0), dw.data.data(), ls.in);
                TensorT<T> dx({batch, ls.in});
                gemm(false, false, batch, ls.in, ls.out, T(1), dy.data.data(), ls.out,
                     w.data.data(), ls.in, T(0), dx.data.data(), ls.in);
                for (int r = 0; r < batch; ++r)
                    for (int o = 0; o < ls.out; ++o)
                        db.data[o] += dy.data[static_cast<size_t>(r) * ls.out + o];
                dy = std::move(dx);
                break;
            }
            case LayerKind::conv2d: {
                pi -= 2;
                const TensorT<T>& w = params.tensors[pi].tensor;
                TensorT<T>& dw = grads.tensors[pi].tensor;
                TensorT<T>& db = grads.tensors[pi + 1].tensor;
                const int H = x.shape[2], W = x.shape[3];
                const int oh = dy.shape[2], ow = dy.shape[3];
                const int K = ls.in * ls.kh * ls.kw;
                const int N = oh * ow;
                std::vector<T> cols(static_cast<size_t>(K) * N);
                std::vector<T> dcols(static_cast<size_t>(K) * N);
                TensorT<T> dx(x.shape);
                const size_t in_stride = static_cast<size_t>(ls.in) * H * W;
                const size_t out_stride = static_cast<size_t>(ls.out) * N;
                for (int bi = 0; bi < batch; ++bi) {
                    const T* xb = x.data.data() + bi * in_stride;
                    const T* dyb = dy.data.data() + bi * out_stride;
                    im2col(xb, ls.in, H, W, ls.kh, ls.kw, ls.stride, ls.pad, oh, ow, cols.data());
                    // dW += dY @ cols^T
                    gemm(false, true, ls.out, K, N, T(1), dyb, N, cols.data(), N, T(1),
                         dw.data.data(), K);
                    // dcols = W^T @ dY, scatter back to dX
                    gemm(true, false, K, N, ls.out, T(1), w.data.data(), K, dyb, N, T(0),
                         dcols.data(), N);
                    col2im(dcols.data(), ls.in, H, W, ls.kh, ls.kw, ls.stride, ls.pad, oh, ow,
                           dx.data.data() + bi * in_stride);
                    for (int m = 0; m < ls.out; ++m) {
                        const T* row = dyb + static_cast<size_t>(m) * N;
                        T s = T(0);
                        for (int n = 0; n < N; ++n) s += row[n];
                        db.data[m] += s;
                    }
                }
                dy = std::move(dx);
                break;
            }
            case LayerKind::convtranspose2d: {
                pi -= 2;
                const TensorT<T>& w = params.tensors[pi].tensor;
                TensorT<T>& dw = grads.tensors[pi].tensor;
                TensorT<T>& db = grads.tensors[pi + 1].tensor;
                const int ih = x.shape[2], iw = x.shape[3];
                const int oh = dy.shape[2], ow = dy.shape[3];
                const int K = ls.out * ls.kh * ls.kw;
                const int N = ih * iw;
                std::vector<T> dcols(static_cast<size_t>(K) * N);
                TensorT<T> dx(x.shape);
                const size_t in_stride = static_cast<size_t>(ls.in) * N;
                const size_t out_stride = static_cast<size_t>(ls.out) * oh * ow;
                for (int bi = 0; bi < batch; ++bi) {
                    const T* xb = x.data.data() + bi * in_stride;
                    const T* dyb = dy.data.data() + bi * out_stride;
                    // gather output-grid gradients into column form
                    im2col(dyb, ls.out, oh, ow, ls.kh, ls.kw, ls.stride, ls.pad, ih, iw,
                           dcols.data());
                    // dX = W @ dcols
                    gemm(false, false, ls.in, N, K, T(1), w.data.data(), K, dcols.data(), N, T(0),
                         dx.data.data() + bi * in_stride, N);
                    // dW += X @ dcols^T
                    gemm(false, true, ls.in, K, N, T(1), xb, N, dcols.data(), N, T(1),
                         dw.data.data(), K);
                    for (int m = 0; m < ls.out; ++m) {
                        const T* row = dyb + static_cast<size_t>(m) * oh * ow;
                        T s = T(0);
                        for (int n = 0; n < oh * ow; ++n) s += row[n];
                        db.data[m] += s;
                    }
                }
                dy = std::move(dx);
                break;
            }
            case LayerKind::relu: {
                TensorT<T> dx = dy;
                for (size_t i = 0; i < dx.data.size(); ++i)
                    dx.data[i] = x.data[i] > T(0) ? dy.data[i] : T(0);
                dx.shape = x.shape;
                dy = std::move(dx);
                break;
            }
            case LayerKind::leakyrelu: {
                const T slope = static_cast<T>(ls.slope);
                TensorT<T> dx = dy;
                for (size_t i = 0; i < dx.data.size(); ++i)
                    dx.data[i] = x.data[i] > T(0) ? dy.data[i] : slope * dy.data[i];
                dx.shape = x.shape;
                dy = std::move(dx);
                break;
            }
            case LayerKind::sigmoid: {
                TensorT<T> dx = dy;
                for (size_t i = 0; i < dx.data.size(); ++i) {
                    T s = T(1) / (T(1) + std::exp(-x.data[i]));
                    dx.data[i] = dy.data[i] * s * (T(1) - s);
                }
                dx.shape = x.shape;
                dy = std::move(dx);
                break;
            }
            case LayerKind::flatten:
            case LayerKind::reshape: {
                dy = dy.reshaped(x.shape);
                break;
            }
        }
    }
    return dy;
}

// ---------------------------------------------------------------------------
// ParamBundle file format, bit-exact:
//   magic "PSIG-NN1"
//   per tensor: u32 name length | name bytes | u32 rank | u32 extents[rank] |
//               f32 values (little-endian), until end of file
// ---------------------------------------------------------------------------

inline void save_params(const ParamBundle& params, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error(Errc::io_failure, "cannot open " + path + " for write");
    write_magic(f, "PSIG-NN1");
    for (const auto& nt : params.tensors) {
        write_le<uint32_t>(f, static_cast<uint32_t>(nt.name.size()));
        write_bytes(f, nt.name.data(), nt.name.size());
        write_le<uint32_t>(f, static_cast<uint32_t>(nt.tensor.shape.size()));
        for (int e : nt.tensor.shape) write_le<uint32_t>(f, static_cast<uint32_t>(e));
        write_f32_array(f, nt.tensor.data.data(), nt.tensor.data.size());
    }
    if (!f) throw Error(Errc::io_failure, "write failed: " + path);
}

inline ParamBundle load_params(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(Errc::io_failure, "cannot open " + path);
    expect_magic(f, "PSIG-NN1", "parameter bundle");
    ParamBundle params;
    while (true) {
        int c = f.peek();
        if (c == EOF) break;
        uint32_t name_len = read_le<uint32_t>(f);
        std::string name(name_len, '\0');
        read_bytes(f, name.data(), name_len);
        uint32_t rank = read_le<uint32_t>(f);
        std::vector<int> shape(rank);
        for (uint32_t i = 0; i < rank; ++i) shape[i] = static_cast<int>(read_le<uint32_t>(f));
        TensorT<float> t(shape);
        read_f32_array(f, t.data.data(), t.data.size());
        params.tensors.push_back({std::move(name), std::move(t)});
    }
    return params;
}

} // namespace persig

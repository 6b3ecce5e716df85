#pragma once

#include <vector>

#include "persig/gemm.hpp"
#include "persig/tensor.hpp"

namespace persig {

enum class LayerKind { dense, conv2d, convtranspose2d, relu, leakyrelu, sigmoid, flatten, reshape };

inline const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::dense: return "dense";
        case LayerKind::conv2d: return "conv2d";
        case LayerKind::convtranspose2d: return "convtranspose2d";
        case LayerKind::relu: return "relu";
        case LayerKind::leakyrelu: return "leakyrelu";
        case LayerKind::sigmoid: return "sigmoid";
        case LayerKind::flatten: return "flatten";
        case LayerKind::reshape: return "reshape";
    }
    return "?";
}

struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    int in = 0, out = 0; // features (dense) or channels (conv kinds)
    int kh = 0, kw = 0;
    int stride = 1, pad = 0;
    float slope = 0.2f;
    int target_c = 0, target_h = 0, target_w = 0;

    static LayerSpec dense(int in, int out) {
        LayerSpec s;
        s.kind = LayerKind::dense;
        s.in = in;
        s.out = out;
        return s;
    }
    static LayerSpec conv2d(int in_ch, int out_ch, int k, int stride, int pad) {
        LayerSpec s;
        s.kind = LayerKind::conv2d;
        s.in = in_ch;
        s.out = out_ch;
        s.kh = s.kw = k;
        s.stride = stride;
        s.pad = pad;
        return s;
    }
    static LayerSpec convtranspose2d(int in_ch, int out_ch, int k, int stride, int pad) {
        LayerSpec s = conv2d(in_ch, out_ch, k, stride, pad);
        s.kind = LayerKind::convtranspose2d;
        return s;
    }
    static LayerSpec relu() { return LayerSpec{LayerKind::relu}; }
    static LayerSpec leakyrelu(float slope = 0.2f) {
        LayerSpec s;
        s.kind = LayerKind::leakyrelu;
        s.slope = slope;
        return s;
    }
    static LayerSpec sigmoid() { return LayerSpec{LayerKind::sigmoid}; }
    static LayerSpec flatten() { return LayerSpec{LayerKind::flatten}; }
    static LayerSpec reshape(int c, int h, int w) {
        LayerSpec s;
        s.kind = LayerKind::reshape;
        s.target_c = c;
        s.target_h = h;
        s.target_w = w;
        return s;
    }

    bool has_params() const {
        return kind == LayerKind::dense || kind == LayerKind::conv2d ||
               kind == LayerKind::convtranspose2d;
    }
};

inline int conv_out_extent(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

inline int convtranspose_out_extent(int in, int k, int stride, int pad) {
    return (in - 1) * stride - 2 * pad + k;
}

// Per-sample shape rule (batch dimension excluded).
inline std::vector<int> layer_out_shape(const LayerSpec& ls, const std::vector<int>& in) {
    auto require = [&](bool ok) {
        if (!ok)
            throw Error(Errc::shape_mismatch, std::string(layer_kind_name(ls.kind)) +
                                                  " cannot accept input " + shape_str(in));
    };
    switch (ls.kind) {
        case LayerKind::dense:
            require(in.size() == 1 && in[0] == ls.in);
            return {ls.out};
        case LayerKind::conv2d: {
            require(in.size() == 3 && in[0] == ls.in);
            int oh = conv_out_extent(in[1], ls.kh, ls.stride, ls.pad);
            int ow = conv_out_extent(in[2], ls.kw, ls.stride, ls.pad);
            require(oh >= 1 && ow >= 1);
            return {ls.out, oh, ow};
        }
        case LayerKind::convtranspose2d: {
            require(in.size() == 3 && in[0] == ls.in);
            int oh = convtranspose_out_extent(in[1], ls.kh, ls.stride, ls.pad);
            int ow = convtranspose_out_extent(in[2], ls.kw, ls.stride, ls.pad);
            require(oh >= 1 && ow >= 1);
            return {ls.out, oh, ow};
        }
        case LayerKind::relu:
        case LayerKind::leakyrelu:
        case LayerKind::sigmoid:
            return in;
        case LayerKind::flatten: {
            require(!in.empty());
            int n = 1;
            for (int e : in) n *= e;
            return {n};
        }
        case LayerKind::reshape: {
            require(in.size() == 1 && in[0] == ls.target_c * ls.target_h * ls.target_w);
            return {ls.target_c, ls.target_h, ls.target_w};
        }
    }
    throw Error(Errc::shape_mismatch, "unknown layer kind");
}

// ---------------------------------------------------------------------------
// im2col / col2im. cols is (C*kh*kw) x (oh*ow), row-major. col2im is the
// scatter-add adjoint and expects a zeroed destination.
// ---------------------------------------------------------------------------

template <class T>
void im2col(const T* x, int C, int H, int W, int kh, int kw, int stride, int pad, int oh, int ow,
            T* cols) {
    for (int c = 0; c < C; ++c) {
        for (int di = 0; di < kh; ++di) {
            for (int dj = 0; dj < kw; ++dj) {
                T* row = cols + (static_cast<size_t>(c * kh + di) * kw + dj) *
                                    (static_cast<size_t>(oh) * ow);
                for (int i = 0; i < oh; ++i) {
                    int si = i * stride - pad + di;
                    if (si < 0 || si >= H) {
                        for (int j = 0; j < ow; ++j) row[static_cast<size_t>(i) * ow + j] = T(0);
                        continue;
                    }
                    const T* xr = x + (static_cast<size_t>(c) * H + si) * W;
                    for (int j = 0; j < ow; ++j) {
                        int sj = j * stride - pad + dj;
                        row[static_cast<size_t>(i) * ow + j] =
                            (sj >= 0 && sj < W) ? xr[sj] : T(0);
                    }
                }
            }
        }
    }
}

template <class T>
void col2im(const T* cols, int C, int H, int W, int kh, int kw, int stride, int pad, int oh,
            int ow, T* x) {
    for (int c = 0; c < C; ++c) {
        for (int di = 0; di < kh; ++di) {
            for (int dj = 0; dj < kw; ++dj) {
                const T* row = cols + (static_cast<size_t>(c * kh + di) * kw + dj) *
                                          (static_cast<size_t>(oh) * ow);
                for (int i = 0; i < oh; ++i) {
                    int si = i * stride - pad + di;
                    if (si < 0 || si >= H) continue;
                    T* xr = x + (static_cast<size_t>(c) * H + si) * W;
                    for (int j = 0; j < ow; ++j) {
                        int sj = j * stride - pad + dj;
                        if (sj >= 0 && sj < W) xr[sj] += row[static_cast<size_t>(i) * ow + j];
                    }
                }
            }
        }
    }
}

} // namespace persig

#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "ntc/tensor.hpp"

// Layer primitives as free functions over Tensor<S>, forward kernels plus the
// explicit adjoints used by the autodiff tape. Convolutions go through
// im2col + Eigen GEMM; the transpose convolution is the adjoint of the
// strided convolution with "same-odd" padding, which makes its output extent
// exactly stride * input extent.

namespace ntc::ops {

inline int same_odd_pad(int k) {
    if (k < 1 || k % 2 == 0) throw UsageError("same-odd padding requires an odd kernel");
    return (k - 1) / 2;
}

inline int conv_out_extent(int in, int k, int stride, int pad) {
    int num = in + 2 * pad - k;
    if (num < 0) throw UsageError("conv: kernel larger than padded input");
    return num / stride + 1;
}

namespace detail {

// Column r = (ci*kh + ki)*kw + kj, position p = oi*Wo + oj.
template <typename S>
void im2col(const Tensor<S>& x, int n, int kh, int kw, int stride, int pad,
            int Ho, int Wo, MatR<S>& col) {
    const int Ci = x.extent(1), H = x.extent(2), W = x.extent(3);
    col.resize(Ci * kh * kw, Ho * Wo);
    for (int ci = 0; ci < Ci; ++ci) {
        for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj) {
                S* row = col.data() + static_cast<std::int64_t>((ci * kh + ki) * kw + kj) * (Ho * Wo);
                for (int oi = 0; oi < Ho; ++oi) {
                    const int i = oi * stride - pad + ki;
                    for (int oj = 0; oj < Wo; ++oj) {
                        const int j = oj * stride - pad + kj;
                        row[oi * Wo + oj] = (i >= 0 && i < H && j >= 0 && j < W)
                                                ? x.at(n, ci, i, j)
                                                : S(0);
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatter-add columns back onto the input canvas.
template <typename S>
void col2im_add(const MatR<S>& col, int n, int kh, int kw, int stride, int pad,
                int Ho, int Wo, Tensor<S>& x) {
    const int Ci = x.extent(1), H = x.extent(2), W = x.extent(3);
    for (int ci = 0; ci < Ci; ++ci) {
        for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj) {
                const S* row = col.data() + static_cast<std::int64_t>((ci * kh + ki) * kw + kj) * (Ho * Wo);
                for (int oi = 0; oi < Ho; ++oi) {
                    const int i = oi * stride - pad + ki;
                    if (i < 0 || i >= H) continue;
                    for (int oj = 0; oj < Wo; ++oj) {
                        const int j = oj * stride - pad + kj;
                        if (j >= 0 && j < W) x.at(n, ci, i, j) += row[oi * Wo + oj];
                    }
                }
            }
        }
    }
}

template <typename S>
Eigen::Map<const MatR<S>> as_mat(const Tensor<S>& t, int rows, int cols, std::int64_t offset = 0) {
    return Eigen::Map<const MatR<S>>(t.data() + offset, rows, cols);
}
template <typename S>
Eigen::Map<MatR<S>> as_mat(Tensor<S>& t, int rows, int cols, std::int64_t offset = 0) {
    return Eigen::Map<MatR<S>>(t.data() + offset, rows, cols);
}

}  // namespace detail

/// Strided cross-correlation with zero padding. x:[N,Ci,H,W], w:[Co,Ci,kh,kw],
/// b:[Co] -> [N,Co,Ho,Wo].
template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b,
                 int stride, int pad) {
    if (x.rank() != 4 || w.rank() != 4) throw UsageError("conv2d: operands must be rank 4");
    if (x.extent(1) != w.extent(1))
        throw ConfigError("conv2d: input channels " + std::to_string(x.extent(1)) +
                          " do not match kernel Cin " + std::to_string(w.extent(1)));
    const int N = x.extent(0), Co = w.extent(0), Ci = w.extent(1);
    const int kh = w.extent(2), kw = w.extent(3);
    if (b.size() != Co) throw ConfigError("conv2d: bias length does not match Cout");
    const int Ho = conv_out_extent(x.extent(2), kh, stride, pad);
    const int Wo = conv_out_extent(x.extent(3), kw, stride, pad);

    Tensor<S> y({N, Co, Ho, Wo});
    auto wmat = detail::as_mat(w, Co, Ci * kh * kw);
    MatR<S> col;
    for (int n = 0; n < N; ++n) {
        detail::im2col(x, n, kh, kw, stride, pad, Ho, Wo, col);
        auto ymat = detail::as_mat(y, Co, Ho * Wo, static_cast<std::int64_t>(n) * Co * Ho * Wo);
        ymat.noalias() = wmat * col;
        for (int co = 0; co < Co; ++co) ymat.row(co).array() += b[co];
    }
    return y;
}

/// d(conv2d)/dx applied to gy; also the forward map of conv2d_transpose.
template <typename S>
Tensor<S> conv2d_input_grad(const Tensor<S>& gy, const Tensor<S>& w, int stride,
                            int pad, int H, int W) {
    const int N = gy.extent(0), Co = w.extent(0), Ci = w.extent(1);
    const int kh = w.extent(2), kw = w.extent(3);
    const int Ho = gy.extent(2), Wo = gy.extent(3);
    Tensor<S> gx({N, Ci, H, W});
    auto wmat = detail::as_mat(w, Co, Ci * kh * kw);
    MatR<S> col(Ci * kh * kw, Ho * Wo);
    for (int n = 0; n < N; ++n) {
        auto gymat = detail::as_mat(gy, Co, Ho * Wo, static_cast<std::int64_t>(n) * Co * Ho * Wo);
        col.noalias() = wmat.transpose() * gymat;
        detail::col2im_add(col, n, kh, kw, stride, pad, Ho, Wo, gx);
    }
    return gx;
}

/// d(conv2d)/dw as a function of the forward input and the output gradient.
template <typename S>
Tensor<S> conv2d_weight_grad(const Tensor<S>& x, const Tensor<S>& gy, int kh,
                             int kw, int stride, int pad) {
    const int N = x.extent(0), Ci = x.extent(1);
    const int Co = gy.extent(1), Ho = gy.extent(2), Wo = gy.extent(3);
    Tensor<S> gw({Co, Ci, kh, kw});
    auto gwmat = detail::as_mat(gw, Co, Ci * kh * kw);
    MatR<S> col;
    for (int n = 0; n < N; ++n) {
        detail::im2col(x, n, kh, kw, stride, pad, Ho, Wo, col);
        auto gymat = detail::as_mat(gy, Co, Ho * Wo, static_cast<std::int64_t>(n) * Co * Ho * Wo);
        gwmat.noalias() += gymat * col.transpose();
    }
    return gw;
}

/// Per-channel reduction of an output gradient; d(conv2d)/db.
template <typename S>
Tensor<S> channel_sum(const Tensor<S>& gy) {
    const int N = gy.extent(0), C = gy.extent(1);
    const std::int64_t plane = static_cast<std::int64_t>(gy.extent(2)) * gy.extent(3);
    Tensor<S> gb({C});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            Eigen::Map<const ArrX<S>> m(gy.data() + (static_cast<std::int64_t>(n) * C + c) * plane, plane);
            gb[c] += m.sum();
        }
    return gb;
}

/// Transposed strided convolution. x:[N,Ci,H,W], w:[Ci,Co,kh,kw], b:[Co]
/// -> [N,Co,stride*H,stride*W]. Defined as the adjoint of conv2d with
/// same-odd padding, plus bias.
template <typename S>
Tensor<S> conv2d_transpose(const Tensor<S>& x, const Tensor<S>& w,
                           const Tensor<S>& b, int stride) {
    if (x.rank() != 4 || w.rank() != 4) throw UsageError("conv2d_transpose: operands must be rank 4");
    if (x.extent(1) != w.extent(0))
        throw ConfigError("conv2d_transpose: input channels " + std::to_string(x.extent(1)) +
                          " do not match kernel Cin " + std::to_string(w.extent(0)));
    const int Ci = w.extent(0), Co = w.extent(1), kh = w.extent(2), kw = w.extent(3);
    if (b.size() != Co) throw ConfigError("conv2d_transpose: bias length does not match Cout");
    const int N = x.extent(0), H = x.extent(2), W = x.extent(3);
    const int pad = same_odd_pad(kh);

    // Viewed as conv weights, w maps Co feature channels to Ci: the adjoint
    // then maps x (living in the conv's output space) back to [Co, sH, sW].
    Tensor<S> y({N, Co, stride * H, stride * W});
    auto wmat = detail::as_mat(w, Ci, Co * kh * kw);
    MatR<S> col(Co * kh * kw, H * W);
    for (int n = 0; n < N; ++n) {
        auto xmat = detail::as_mat(x, Ci, H * W, static_cast<std::int64_t>(n) * Ci * H * W);
        col.noalias() = wmat.transpose() * xmat;
        detail::col2im_add(col, n, kh, kw, stride, pad, H, W, y);
    }
    const std::int64_t plane = static_cast<std::int64_t>(stride * H) * (stride * W);
    for (int n = 0; n < N; ++n)
        for (int co = 0; co < Co; ++co) {
            Eigen::Map<ArrX<S>> m(y.data() + (static_cast<std::int64_t>(n) * Co + co) * plane, plane);
            m += b[co];
        }
    return y;
}

/// Gradients of conv2d_transpose: the adjoint relationship swaps the roles of
/// input and output gradient in the conv kernels above.
template <typename S>
Tensor<S> conv2d_transpose_input_grad(const Tensor<S>& gy, const Tensor<S>& w, int stride) {
    Tensor<S> zero_b({w.extent(0)});
    return conv2d(gy, w, zero_b, stride, same_odd_pad(w.extent(2)));
}

template <typename S>
Tensor<S> conv2d_transpose_weight_grad(const Tensor<S>& x, const Tensor<S>& gy,
                                       int kh, int kw, int stride) {
    // Scatter form y[co, s*i-p+ki, ...] += x[ci,i,j] * w[ci,co,ki,kj] makes the
    // weight gradient a conv2d weight gradient with x and gy swapped.
    return conv2d_weight_grad(gy, x, kh, kw, stride, same_odd_pad(kh));
}

template <typename S>
struct BatchNormStats {
    Tensor<S> mean;  // [C]
    Tensor<S> var;   // [C], biased
};

/// Inference-mode batch normalization with frozen statistics.
template <typename S>
Tensor<S> batchnorm_infer(const Tensor<S>& x, const Tensor<S>& scale,
                          const Tensor<S>& shift, const Tensor<S>& mean,
                          const Tensor<S>& var, S eps) {
    if (eps <= S(0)) throw UsageError("batchnorm: eps must be > 0");
    const int N = x.extent(0), C = x.extent(1);
    const std::int64_t plane = static_cast<std::int64_t>(x.extent(2)) * x.extent(3);
    Tensor<S> y(x.shape());
    for (int c = 0; c < C; ++c) {
        if (var[c] < S(0)) throw DataError("batchnorm: negative variance at channel " + std::to_string(c));
        const S inv = S(1) / std::sqrt(var[c] + eps);
        for (int n = 0; n < N; ++n) {
            const std::int64_t off = (static_cast<std::int64_t>(n) * C + c) * plane;
            Eigen::Map<const ArrX<S>> xs(x.data() + off, plane);
            Eigen::Map<ArrX<S>> ys(y.data() + off, plane);
            ys = scale[c] * (xs - mean[c]) * inv + shift[c];
        }
    }
    return y;
}

/// Training-mode batch normalization; statistics over N,H,W per channel with
/// biased variance.
template <typename S>
Tensor<S> batchnorm_train(const Tensor<S>& x, const Tensor<S>& scale,
                          const Tensor<S>& shift, S eps, BatchNormStats<S>& stats) {
    if (eps <= S(0)) throw UsageError("batchnorm: eps must be > 0");
    const int N = x.extent(0), C = x.extent(1);
    const std::int64_t plane = static_cast<std::int64_t>(x.extent(2)) * x.extent(3);
    const std::int64_t m = static_cast<std::int64_t>(N) * plane;
    stats.mean = Tensor<S>({C});
    stats.var = Tensor<S>({C});
    Tensor<S> y(x.shape());
    for (int c = 0; c < C; ++c) {
        S sum = 0, sq = 0;
        for (int n = 0; n < N; ++n) {
            Eigen::Map<const ArrX<S>> xs(x.data() + (static_cast<std::int64_t>(n) * C + c) * plane, plane);
            sum += xs.sum();
            sq += xs.square().sum();
        }
        const S mu = sum / static_cast<S>(m);
        const S v = sq / static_cast<S>(m) - mu * mu;
        stats.mean[c] = mu;
        stats.var[c] = v < S(0) ? S(0) : v;  // clip tiny negative rounding
        const S inv = S(1) / std::sqrt(stats.var[c] + eps);
        for (int n = 0; n < N; ++n) {
            const std::int64_t off = (static_cast<std::int64_t>(n) * C + c) * plane;
            Eigen::Map<const ArrX<S>> xs(x.data() + off, plane);
            Eigen::Map<ArrX<S>> ys(y.data() + off, plane);
            ys = scale[c] * (xs - mu) * inv + shift[c];
        }
    }
    return y;
}

template <typename S>
Tensor<S> leaky_relu(const Tensor<S>& x, S slope) {
    if (slope < S(0) || slope >= S(1)) throw UsageError("leaky_relu: slope must be in [0,1)");
    Tensor<S> y(x.shape());
    y.raw() = (x.raw() >= S(0)).select(x.raw(), slope * x.raw());
    return y;
}

template <typename S>
Tensor<S> leaky_relu_grad(const Tensor<S>& x, const Tensor<S>& gy, S slope) {
    Tensor<S> gx(x.shape());
    gx.raw() = (x.raw() >= S(0)).select(gy.raw(), slope * gy.raw());
    return gx;
}

/// Channel concatenation: a occupies [0,Ca), b occupies [Ca,Ca+Cb).
template <typename S>
Tensor<S> concat_channels(const Tensor<S>& a, const Tensor<S>& b) {
    if (a.extent(0) != b.extent(0) || a.extent(2) != b.extent(2) || a.extent(3) != b.extent(3))
        throw ConfigError("concat_channels: spatial or batch extents differ");
    const int N = a.extent(0), Ca = a.extent(1), Cb = b.extent(1);
    const std::int64_t plane = static_cast<std::int64_t>(a.extent(2)) * a.extent(3);
    Tensor<S> y({N, Ca + Cb, a.extent(2), a.extent(3)});
    for (int n = 0; n < N; ++n) {
        std::copy(a.data() + n * Ca * plane, a.data() + (n + 1) * Ca * plane,
                  y.data() + static_cast<std::int64_t>(n) * (Ca + Cb) * plane);
        std::copy(b.data() + n * Cb * plane, b.data() + (n + 1) * Cb * plane,
                  y.data() + (static_cast<std::int64_t>(n) * (Ca + Cb) + Ca) * plane);
    }
    return y;
}

/// Channel slice [c0, c0+len) of a rank-4 tensor; inverse of concat_channels.
template <typename S>
Tensor<S> slice_channels(const Tensor<S>& x, int c0, int len) {
    const int N = x.extent(0), C = x.extent(1);
    if (c0 < 0 || len < 0 || c0 + len > C) throw UsageError("slice_channels: range out of bounds");
    const std::int64_t plane = static_cast<std::int64_t>(x.extent(2)) * x.extent(3);
    Tensor<S> y({N, len, x.extent(2), x.extent(3)});
    for (int n = 0; n < N; ++n)
        std::copy(x.data() + (static_cast<std::int64_t>(n) * C + c0) * plane,
                  x.data() + (static_cast<std::int64_t>(n) * C + c0 + len) * plane,
                  y.data() + static_cast<std::int64_t>(n) * len * plane);
    return y;
}

template <typename S>
Tensor<S> clamp01(const Tensor<S>& x) {
    Tensor<S> y(x.shape());
    y.raw() = x.raw().cwiseMax(S(0)).cwiseMin(S(1));
    return y;
}

template <typename S>
Tensor<S> clamp01_grad(const Tensor<S>& x, const Tensor<S>& gy) {
    Tensor<S> gx(x.shape());
    gx.raw() = (x.raw() >= S(0) && x.raw() <= S(1)).select(gy.raw(), ArrX<S>::Zero(x.size()));
    return gx;
}

}  // namespace ntc::ops

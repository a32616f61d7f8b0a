// Copyright 2026 The vidprobe Authors
// SPDX-License-Identifier: Apache-2.0

#include "vidprobe/nn.hpp"

#include <algorithm>
#include <cmath>

namespace vidprobe::nn {

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kPositiveFloor = 1e-4;

struct Tap {
    int i0;
    int i1;
    double w0;
    double w1;
};

std::vector<Tap> upsample_taps(int n) {
    std::vector<Tap> taps(2 * n);
    for (int o = 0; o < 2 * n; ++o) {
        const double src = (o + 0.5) * 0.5 - 0.5;
        const int lo = static_cast<int>(std::floor(src));
        const double frac = src - lo;
        taps[o] = {std::clamp(lo, 0, n - 1), std::clamp(lo + 1, 0, n - 1), 1.0 - frac, frac};
    }
    return taps;
}

}  // namespace

template <class T>
Matrix<T> linear_forward(const Matrix<T>& x, const Linear<T>& p) {
    Matrix<T> y(x.rows(), p.weight.cols());
    y.noalias() = x * p.weight;
    y.rowwise() += p.bias.row(0);
    return y;
}

template <class T>
Matrix<T> linear_backward(const Matrix<T>& x, const Linear<T>& p, const Matrix<T>& dy, Linear<T>& grad) {
    grad.weight.noalias() += x.transpose() * dy;
    grad.bias += dy.colwise().sum();
    Matrix<T> dx(dy.rows(), p.weight.rows());
    dx.noalias() = dy * p.weight.transpose();
    return dx;
}

template <class T>
Matrix<T> layer_norm_forward(const Matrix<T>& x, const LayerNorm<T>& p, LayerNormCache<T>& cache) {
    const auto rows = x.rows();
    const auto d = x.cols();
    cache.normalized.resize(rows, d);
    cache.inv_std.resize(rows);
    Matrix<T> y(rows, d);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const T mean = x.row(r).mean();
        const T var = (x.row(r).array() - mean).square().mean();
        const T inv = T(1) / std::sqrt(var + T(kLayerNormEps));
        cache.inv_std[r] = inv;
        cache.normalized.row(r) = (x.row(r).array() - mean) * inv;
        y.row(r) = cache.normalized.row(r).cwiseProduct(p.gain.row(0)) + p.bias.row(0);
    }
    return y;
}

template <class T>
Matrix<T> layer_norm_backward(const LayerNormCache<T>& cache, const LayerNorm<T>& p, const Matrix<T>& dy,
                              LayerNorm<T>& grad) {
    const auto rows = dy.rows();
    const auto d = dy.cols();
    grad.gain += dy.cwiseProduct(cache.normalized).colwise().sum();
    grad.bias += dy.colwise().sum();
    Matrix<T> dx(rows, d);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto dxhat = (dy.row(r).cwiseProduct(p.gain.row(0))).eval();
        const T mean_d = dxhat.mean();
        const T mean_dx = dxhat.cwiseProduct(cache.normalized.row(r)).mean();
        dx.row(r) = (dxhat.array() - mean_d - cache.normalized.row(r).array() * mean_dx) * cache.inv_std[r];
    }
    return dx;
}

template <class T>
Matrix<T> gelu_forward(const Matrix<T>& x) {
    const T k = T(0.7978845608028654);
    const auto a = x.array();
    const auto t = (k * (a + T(0.044715) * a.cube())).tanh();
    Matrix<T> y = (T(0.5) * a * (T(1) + t)).matrix();
    return y;
}

template <class T>
Matrix<T> gelu_backward(const Matrix<T>& x, const Matrix<T>& dy) {
    const T k = T(0.7978845608028654);
    const auto a = x.array();
    const auto t = (k * (a + T(0.044715) * a.cube())).tanh().eval();
    const auto dt = (T(1) - t.square()) * k * (T(1) + T(3 * 0.044715) * a.square());
    Matrix<T> dx = (dy.array() * (T(0.5) * (T(1) + t) + T(0.5) * a * dt)).matrix();
    return dx;
}

template <class T>
T positive_map(T x) {
    const T sp = x > T(20) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    return sp + T(kPositiveFloor);
}

template <class T>
T positive_map_grad(T x) {
    return x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
}

template <class T>
Matrix<T> attention_forward(const Matrix<T>& x, const Attention<T>& p, int heads, int group_size,
                            AttentionCache<T>& cache) {
    const auto n = x.rows();
    const auto d = x.cols();
    const auto dh = d / heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));
    const auto groups = n / group_size;
    cache.input = x;
    cache.qkv = linear_forward(x, p.qkv);
    cache.context.resize(n, d);
    cache.probs.resize(static_cast<std::size_t>(groups * heads));
    for (Eigen::Index g = 0; g < groups; ++g) {
        const Eigen::Index r0 = g * group_size;
        for (int h = 0; h < heads; ++h) {
            const auto q = cache.qkv.block(r0, h * dh, group_size, dh);
            const auto k = cache.qkv.block(r0, d + h * dh, group_size, dh);
            const auto v = cache.qkv.block(r0, 2 * d + h * dh, group_size, dh);
            Matrix<T>& prob = cache.probs[static_cast<std::size_t>(g * heads + h)];
            prob.resize(group_size, group_size);
            prob.noalias() = q * k.transpose();
            prob *= scale;
            for (Eigen::Index r = 0; r < group_size; ++r) {
                const T m = prob.row(r).maxCoeff();
                prob.row(r) = (prob.row(r).array() - m).exp();
                prob.row(r) /= prob.row(r).sum();
            }
            cache.context.block(r0, h * dh, group_size, dh).noalias() = prob * v;
        }
    }
    return linear_forward(cache.context, p.out);
}

template <class T>
Matrix<T> attention_backward(const AttentionCache<T>& cache, const Attention<T>& p, int heads, int group_size,
                             const Matrix<T>& dy, Attention<T>& grad) {
    const auto n = cache.input.rows();
    const auto d = cache.input.cols();
    const auto dh = d / heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));
    const auto groups = n / group_size;
    const Matrix<T> dctx = linear_backward(cache.context, p.out, dy, grad.out);
    Matrix<T> dqkv(n, 3 * d);
    Matrix<T> dprob(group_size, group_size);
    for (Eigen::Index g = 0; g < groups; ++g) {
        const Eigen::Index r0 = g * group_size;
        for (int h = 0; h < heads; ++h) {
            const auto q = cache.qkv.block(r0, h * dh, group_size, dh);
            const auto k = cache.qkv.block(r0, d + h * dh, group_size, dh);
            const auto v = cache.qkv.block(r0, 2 * d + h * dh, group_size, dh);
            const auto dc = dctx.block(r0, h * dh, group_size, dh);
            const Matrix<T>& prob = cache.probs[static_cast<std::size_t>(g * heads + h)];
            dprob.noalias() = dc * v.transpose();
            dqkv.block(r0, 2 * d + h * dh, group_size, dh).noalias() = prob.transpose() * dc;
            for (Eigen::Index r = 0; r < group_size; ++r) {
                const T dot = dprob.row(r).dot(prob.row(r));
                dprob.row(r) = prob.row(r).cwiseProduct((dprob.row(r).array() - dot).matrix());
            }
            dprob *= scale;
            dqkv.block(r0, h * dh, group_size, dh).noalias() = dprob * k;
            dqkv.block(r0, d + h * dh, group_size, dh).noalias() = dprob.transpose() * q;
        }
    }
    return linear_backward(cache.input, p.qkv, dqkv, grad.qkv);
}

template <class T>
Matrix<T> feed_forward_forward(const Matrix<T>& x, const FeedForward<T>& p, FeedForwardCache<T>& cache) {
    cache.input = x;
    cache.hidden_pre = linear_forward(x, p.fc1);
    cache.hidden = gelu_forward(cache.hidden_pre);
    return linear_forward(cache.hidden, p.fc2);
}

template <class T>
Matrix<T> feed_forward_backward(const FeedForwardCache<T>& cache, const FeedForward<T>& p, const Matrix<T>& dy,
                                FeedForward<T>& grad) {
    const Matrix<T> dh = linear_backward(cache.hidden, p.fc2, dy, grad.fc2);
    return linear_backward(cache.input, p.fc1, gelu_backward(cache.hidden_pre, dh), grad.fc1);
}

template <class T>
Matrix<T> im2col3x3(const Matrix<T>& x, int height, int width) {
    const auto c = x.cols();
    Matrix<T> cols = Matrix<T>::Zero(static_cast<Eigen::Index>(height) * width, 9 * c);
    for (int r = 0; r < height; ++r) {
        for (int q = 0; q < width; ++q) {
            const Eigen::Index row = static_cast<Eigen::Index>(r) * width + q;
            for (int dr = -1; dr <= 1; ++dr) {
                const int rr = r + dr;
                if (rr < 0 || rr >= height) continue;
                for (int dq = -1; dq <= 1; ++dq) {
                    const int qq = q + dq;
                    if (qq < 0 || qq >= width) continue;
                    const int tap = (dr + 1) * 3 + (dq + 1);
                    cols.block(row, tap * c, 1, c) = x.row(static_cast<Eigen::Index>(rr) * width + qq);
                }
            }
        }
    }
    return cols;
}

template <class T>
Matrix<T> conv3x3_forward(const Matrix<T>& x, int height, int width, const Conv3x3<T>& p, Matrix<T>& cols) {
    cols = im2col3x3(x, height, width);
    Matrix<T> y(cols.rows(), p.weight.cols());
    y.noalias() = cols * p.weight;
    y.rowwise() += p.bias.row(0);
    return y;
}

template <class T>
Matrix<T> conv3x3_backward(const Matrix<T>& cols, int height, int width, const Conv3x3<T>& p, const Matrix<T>& dy,
                           Conv3x3<T>& grad) {
    grad.weight.noalias() += cols.transpose() * dy;
    grad.bias += dy.colwise().sum();
    Matrix<T> dcols(dy.rows(), p.weight.rows());
    dcols.noalias() = dy * p.weight.transpose();
    const auto c = p.weight.rows() / 9;
    Matrix<T> dx = Matrix<T>::Zero(static_cast<Eigen::Index>(height) * width, c);
    for (int r = 0; r < height; ++r) {
        for (int q = 0; q < width; ++q) {
            const Eigen::Index row = static_cast<Eigen::Index>(r) * width + q;
            for (int dr = -1; dr <= 1; ++dr) {
                const int rr = r + dr;
                if (rr < 0 || rr >= height) continue;
                for (int dq = -1; dq <= 1; ++dq) {
                    const int qq = q + dq;
                    if (qq < 0 || qq >= width) continue;
                    const int tap = (dr + 1) * 3 + (dq + 1);
                    dx.row(static_cast<Eigen::Index>(rr) * width + qq) += dcols.block(row, tap * c, 1, c);
                }
            }
        }
    }
    return dx;
}

template <class T>
Matrix<T> upsample2x_forward(const Matrix<T>& x, int height, int width) {
    const auto c = x.cols();
    const auto rows = upsample_taps(height);
    const auto cols = upsample_taps(width);
    Matrix<T> tmp(static_cast<Eigen::Index>(2 * height) * width, c);
    for (int o = 0; o < 2 * height; ++o) {
        const auto& t = rows[o];
        for (int q = 0; q < width; ++q) {
            tmp.row(static_cast<Eigen::Index>(o) * width + q) =
                T(t.w0) * x.row(static_cast<Eigen::Index>(t.i0) * width + q) +
                T(t.w1) * x.row(static_cast<Eigen::Index>(t.i1) * width + q);
        }
    }
    Matrix<T> y(static_cast<Eigen::Index>(4) * height * width, c);
    for (int r = 0; r < 2 * height; ++r) {
        for (int o = 0; o < 2 * width; ++o) {
            const auto& t = cols[o];
            y.row(static_cast<Eigen::Index>(r) * 2 * width + o) =
                T(t.w0) * tmp.row(static_cast<Eigen::Index>(r) * width + t.i0) +
                T(t.w1) * tmp.row(static_cast<Eigen::Index>(r) * width + t.i1);
        }
    }
    return y;
}

template <class T>
Matrix<T> upsample2x_backward(const Matrix<T>& dy, int height, int width) {
    const auto c = dy.cols();
    const auto rows = upsample_taps(height);
    const auto cols = upsample_taps(width);
    Matrix<T> dtmp = Matrix<T>::Zero(static_cast<Eigen::Index>(2 * height) * width, c);
    for (int r = 0; r < 2 * height; ++r) {
        for (int o = 0; o < 2 * width; ++o) {
            const auto& t = cols[o];
            const auto g = dy.row(static_cast<Eigen::Index>(r) * 2 * width + o);
            dtmp.row(static_cast<Eigen::Index>(r) * width + t.i0) += T(t.w0) * g;
            dtmp.row(static_cast<Eigen::Index>(r) * width + t.i1) += T(t.w1) * g;
        }
    }
    Matrix<T> dx = Matrix<T>::Zero(static_cast<Eigen::Index>(height) * width, c);
    for (int o = 0; o < 2 * height; ++o) {
        const auto& t = rows[o];
        for (int q = 0; q < width; ++q) {
            const auto g = dtmp.row(static_cast<Eigen::Index>(o) * width + q);
            dx.row(static_cast<Eigen::Index>(t.i0) * width + q) += T(t.w0) * g;
            dx.row(static_cast<Eigen::Index>(t.i1) * width + q) += T(t.w1) * g;
        }
    }
    return dx;
}

#define VIDPROBE_INSTANTIATE(T)                                                                                  \
    template Matrix<T> linear_forward(const Matrix<T>&, const Linear<T>&);                                      \
    template Matrix<T> linear_backward(const Matrix<T>&, const Linear<T>&, const Matrix<T>&, Linear<T>&);       \
    template Matrix<T> layer_norm_forward(const Matrix<T>&, const LayerNorm<T>&, LayerNormCache<T>&);           \
    template Matrix<T> layer_norm_backward(const LayerNormCache<T>&, const LayerNorm<T>&, const Matrix<T>&,     \
                                           LayerNorm<T>&);                                                      \
    template Matrix<T> gelu_forward(const Matrix<T>&);                                                          \
    template Matrix<T> gelu_backward(const Matrix<T>&, const Matrix<T>&);                                       \
    template T positive_map(T);                                                                                 \
    template T positive_map_grad(T);                                                                            \
    template Matrix<T> attention_forward(const Matrix<T>&, const Attention<T>&, int, int, AttentionCache<T>&);  \
    template Matrix<T> attention_backward(const AttentionCache<T>&, const Attention<T>&, int, int,              \
                                          const Matrix<T>&, Attention<T>&);                                     \
    template Matrix<T> feed_forward_forward(const Matrix<T>&, const FeedForward<T>&, FeedForwardCache<T>&);     \
    template Matrix<T> feed_forward_backward(const FeedForwardCache<T>&, const FeedForward<T>&,                 \
                                             const Matrix<T>&, FeedForward<T>&);                                \
    template Matrix<T> im2col3x3(const Matrix<T>&, int, int);                                                   \
    template Matrix<T> conv3x3_forward(const Matrix<T>&, int, int, const Conv3x3<T>&, Matrix<T>&);              \
    template Matrix<T> conv3x3_backward(const Matrix<T>&, int, int, const Conv3x3<T>&, const Matrix<T>&,        \
                                        Conv3x3<T>&);                                                           \
    template Matrix<T> upsample2x_forward(const Matrix<T>&, int, int);                                          \
    template Matrix<T> upsample2x_backward(const Matrix<T>&, int, int);

VIDPROBE_INSTANTIATE(float)
VIDPROBE_INSTANTIATE(double)

#undef VIDPROBE_INSTANTIATE

}  // namespace vidprobe::nn

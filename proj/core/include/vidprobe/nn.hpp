// Copyright 2026 The vidprobe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Layer primitives with explicit backward passes. Activations are row-major
// matrices with one token (or one pixel) per row. Each *_backward takes the
// forward cache, accumulates into the parameter gradient and returns the
// gradient with respect to the layer input. Instantiated for float and double.

#include <vector>

#include <Eigen/Core>

namespace vidprobe::nn {

template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
struct Linear {
    Matrix<T> weight;  // in x out
    Matrix<T> bias;    // 1 x out
};

template <class T>
struct LayerNorm {
    Matrix<T> gain;  // 1 x d
    Matrix<T> bias;  // 1 x d
};

template <class T>
struct Attention {
    Linear<T> qkv;  // d -> 3d
    Linear<T> out;  // d -> d
};

template <class T>
struct FeedForward {
    Linear<T> fc1;
    Linear<T> fc2;
};

/// 3x3 convolution, stride 1, zero padding 1, channels-last images.
template <class T>
struct Conv3x3 {
    Matrix<T> weight;  // (9 * in) x out; row = tap * in + channel
    Matrix<T> bias;    // 1 x out
};

// --- linear ---------------------------------------------------------------

template <class T>
Matrix<T> linear_forward(const Matrix<T>& x, const Linear<T>& p);

template <class T>
Matrix<T> linear_backward(const Matrix<T>& x, const Linear<T>& p, const Matrix<T>& dy, Linear<T>& grad);

// --- layer norm -------------------------------------------------------------

template <class T>
struct LayerNormCache {
    Matrix<T> normalized;
    std::vector<T> inv_std;
};

template <class T>
Matrix<T> layer_norm_forward(const Matrix<T>& x, const LayerNorm<T>& p, LayerNormCache<T>& cache);

template <class T>
Matrix<T> layer_norm_backward(const LayerNormCache<T>& cache, const LayerNorm<T>& p, const Matrix<T>& dy,
                              LayerNorm<T>& grad);

// --- activations ------------------------------------------------------------

/// tanh-approximated GELU.
template <class T>
Matrix<T> gelu_forward(const Matrix<T>& x);

template <class T>
Matrix<T> gelu_backward(const Matrix<T>& x, const Matrix<T>& dy);

/// softplus(x) + floor; strictly positive for every finite x.
template <class T>
T positive_map(T x);

template <class T>
T positive_map_grad(T x);

// --- attention --------------------------------------------------------------

/// Multi-head self-attention restricted to consecutive row groups of
/// `group_size` tokens. group_size == rows gives global attention.
template <class T>
struct AttentionCache {
    Matrix<T> input;
    Matrix<T> qkv;
    std::vector<Matrix<T>> probs;  // one per (group, head)
    Matrix<T> context;
};

template <class T>
Matrix<T> attention_forward(const Matrix<T>& x, const Attention<T>& p, int heads, int group_size,
                            AttentionCache<T>& cache);

template <class T>
Matrix<T> attention_backward(const AttentionCache<T>& cache, const Attention<T>& p, int heads, int group_size,
                             const Matrix<T>& dy, Attention<T>& grad);

// --- feed-forward -------------------------------------------------------------

template <class T>
struct FeedForwardCache {
    Matrix<T> input;
    Matrix<T> hidden_pre;
    Matrix<T> hidden;
};

template <class T>
Matrix<T> feed_forward_forward(const Matrix<T>& x, const FeedForward<T>& p, FeedForwardCache<T>& cache);

template <class T>
Matrix<T> feed_forward_backward(const FeedForwardCache<T>& cache, const FeedForward<T>& p, const Matrix<T>& dy,
                                FeedForward<T>& grad);

// --- convolution and resampling ---------------------------------------------------

template <class T>
Matrix<T> im2col3x3(const Matrix<T>& x, int height, int width);

template <class T>
Matrix<T> conv3x3_forward(const Matrix<T>& x, int height, int width, const Conv3x3<T>& p, Matrix<T>& cols);

template <class T>
Matrix<T> conv3x3_backward(const Matrix<T>& cols, int height, int width, const Conv3x3<T>& p, const Matrix<T>& dy,
                           Conv3x3<T>& grad);

/// Bilinear 2x upsampling (half-pixel centers, edge clamped).
template <class T>
Matrix<T> upsample2x_forward(const Matrix<T>& x, int height, int width);

template <class T>
Matrix<T> upsample2x_backward(const Matrix<T>& dy, int height, int width);

}  // namespace vidprobe::nn

// Copyright 2026 The vidprobe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vidprobe/kv_text.hpp"
#include "vidprobe/nn.hpp"

namespace vidprobe {

using nn::Matrix;

enum class RotationParameterization { kQuaternion };

/// Shape of the probe. Token layout per frame: one camera token followed by
/// grid_h * grid_w spatial tokens in row-major order.
struct ProbeConfig {
    int width = 1024;
    int blocks = 4;
    int heads = 8;
    int mlp_ratio = 4;
    int in_channels = 0;
    int grid_h = 0;
    int grid_w = 0;
    int frames = 4;
    bool reference_indicator = false;
    int out_h = 0;
    int out_w = 0;
    int head_features = 64;
    RotationParameterization rotation = RotationParameterization::kQuaternion;

    void validate() const;

    int grid_cells() const { return grid_h * grid_w; }
    int tokens_per_frame() const { return 1 + grid_cells(); }
    int total_tokens() const { return frames * tokens_per_frame(); }
    int out_pixels() const { return out_h * out_w; }
    /// Number of 2x steps from the token grid to the output grid.
    int upsample_steps() const;
    /// 1-based block indices whose outputs feed the dense heads.
    int mid_tap() const { return blocks / 2 > 0 ? blocks / 2 : 1; }
    int last_tap() const { return blocks; }

    void to_record(KvRecord& record, const std::string& prefix = "probe.") const;
    static ProbeConfig from_record(const KvRecord& record, const std::string& prefix = "probe.");

    bool operator==(const ProbeConfig&) const = default;
};

/// FNV-1a 64 over text, as 16 hex digits.
std::string fnv1a_hex(std::string_view text);

template <class T>
struct BlockParams {
    nn::LayerNorm<T> norm1;
    nn::Attention<T> frame_attn;
    nn::LayerNorm<T> norm2;
    nn::FeedForward<T> ff1;
    nn::LayerNorm<T> norm3;
    nn::Attention<T> global_attn;
    nn::LayerNorm<T> norm4;
    nn::FeedForward<T> ff2;
};

template <class T>
struct ResidualConvUnit {
    nn::Conv3x3<T> conv1;
    nn::Conv3x3<T> conv2;
};

/// Two token taps reassembled to grids, fused through residual conv units
/// and 2x upsampling up to the output resolution.
template <class T>
struct DenseHeadParams {
    nn::LayerNorm<T> norm_mid;
    nn::LayerNorm<T> norm_last;
    nn::Linear<T> proj_mid;
    nn::Linear<T> proj_last;
    ResidualConvUnit<T> rcu_last;
    ResidualConvUnit<T> rcu_mid;
    ResidualConvUnit<T> rcu_fused;
    std::vector<nn::Conv3x3<T>> refine;  // one per extra 2x step
    nn::Conv3x3<T> out;
};

template <class T>
struct CameraHeadParams {
    nn::LayerNorm<T> norm;
    nn::Linear<T> proj;  // d -> 7
};

template <class T>
struct ParameterSet {
    nn::Linear<T> input_proj;
    Matrix<T> frame_embed;      // S x d
    Matrix<T> pos_embed;        // (H_f W_f) x d
    Matrix<T> camera_token;     // 1 x d
    Matrix<T> reference_embed;  // 1 x d
    std::vector<BlockParams<T>> blocks;
    DenseHeadParams<T> point_head;
    DenseHeadParams<T> depth_head;
    CameraHeadParams<T> camera_head;

    /// f(name, matrix) over every tensor in a fixed order.
    template <class F>
    void visit(F&& f);
    template <class F>
    void visit(F&& f) const;

    std::size_t count() const;
    void set_zero();
};

template <class T>
struct ProbeOutputs {
    std::vector<Matrix<T>> points;  // per frame, (H_v W_v) x 3
    std::vector<Matrix<T>> depth;   // per frame, (H_v W_v) x 1
    Matrix<T> pose;                 // (S-1) x 7: qw qx qy qz tx ty tz

    static ProbeOutputs zeros(const ProbeConfig& config);
};

template <class T>
ParameterSet<T> init_parameters(const ProbeConfig& config, std::uint64_t seed);

template <class T>
ParameterSet<T> zeros_like(const ParameterSet<T>& params);

template <class U, class T>
ParameterSet<U> cast_parameters(const ParameterSet<T>& params);

// --- forward caches ---------------------------------------------------------------

template <class T>
struct BlockCache {
    nn::LayerNormCache<T> ln1, ln2, ln3, ln4;
    nn::AttentionCache<T> frame_attn, global_attn;
    nn::FeedForwardCache<T> ff1, ff2;
};

template <class T>
struct RcuCache {
    Matrix<T> input;
    Matrix<T> cols1;
    Matrix<T> pre_mid;  // conv1 output
    Matrix<T> cols2;
};

template <class T>
struct DenseFrameCache {
    RcuCache<T> rcu_last, rcu_mid, rcu_fused;
    Matrix<T> mid_up;  // upsampled mid projection
    std::vector<RcuCache<T>> refine;
    Matrix<T> out_cols;
    Matrix<T> out_pre;
};

template <class T>
struct DenseHeadCache {
    Matrix<T> mid_in, last_in;  // spatial tokens of each tap
    nn::LayerNormCache<T> ln_mid, ln_last;
    Matrix<T> mid_norm, last_norm;
    std::vector<DenseFrameCache<T>> frames;
};

template <class T>
struct CameraHeadCache {
    Matrix<T> tokens;
    nn::LayerNormCache<T> ln;
    Matrix<T> normed;
    Matrix<T> raw;
};

template <class T>
struct ProbeTape {
    Matrix<T> patch_features;  // (S H_f W_f) x C
    std::vector<BlockCache<T>> blocks;
    Matrix<T> tap_mid;
    Matrix<T> tap_last;
    DenseHeadCache<T> point;
    DenseHeadCache<T> depth;
    CameraHeadCache<T> camera;
};

enum class DenseTarget { kPoint, kDepth };

/// Forward/backward of the alternating-attention probe. Stateless apart
/// from the configuration; parameters are passed explicitly.
template <class T>
class ProbeModel {
public:
    explicit ProbeModel(ProbeConfig config);

    const ProbeConfig& config() const { return config_; }

    /// `features` is S x C x H_f x W_f, frame-major, channel-first.
    Matrix<T> tokenize(std::span<const float> features, const ParameterSet<T>& params,
                       Matrix<T>* patch_features = nullptr) const;

    Matrix<T> block_forward(const Matrix<T>& tokens, const BlockParams<T>& block, BlockCache<T>* cache = nullptr) const;

    /// Only the first residual sublayer (frame attention) of a block.
    Matrix<T> frame_attention_sublayer(const Matrix<T>& tokens, const BlockParams<T>& block) const;

    std::vector<Matrix<T>> dense_head_forward(const Matrix<T>& tap_mid, const Matrix<T>& tap_last,
                                              const DenseHeadParams<T>& head, DenseTarget target,
                                              DenseHeadCache<T>* cache = nullptr) const;

    Matrix<T> camera_head_forward(const Matrix<T>& tokens, const CameraHeadParams<T>& head,
                                  CameraHeadCache<T>* cache = nullptr) const;

    ProbeOutputs<T> forward(std::span<const float> features, const ParameterSet<T>& params,
                            ProbeTape<T>* tape = nullptr) const;

    /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(outputs).
    void backward(const ProbeTape<T>& tape, const ParameterSet<T>& params, const ProbeOutputs<T>& d_outputs,
                  ParameterSet<T>& grad) const;

private:
    Matrix<T> dense_head_backward(const DenseHeadCache<T>& cache, const DenseHeadParams<T>& head, DenseTarget target,
                                  const std::vector<Matrix<T>>& d_out, DenseHeadParams<T>& grad,
                                  Matrix<T>& d_tap_mid) const;
    Matrix<T> camera_head_backward(const CameraHeadCache<T>& cache, const CameraHeadParams<T>& head,
                                   const Matrix<T>& d_pose, CameraHeadParams<T>& grad) const;
    Matrix<T> block_backward(const BlockCache<T>& cache, const BlockParams<T>& block, const Matrix<T>& dy,
                             BlockParams<T>& grad) const;
    void tokenize_backward(const Matrix<T>& patch_features, const Matrix<T>& d_tokens, const ParameterSet<T>& params,
                           ParameterSet<T>& grad) const;

    ProbeConfig config_;
};

// --- parameter visiting -------------------------------------------------------------

namespace detail {

template <class L, class F>
void visit_linear(const std::string& name, L& layer, F& f) {
    f(name + ".weight", layer.weight);
    f(name + ".bias", layer.bias);
}

template <class L, class F>
void visit_norm(const std::string& name, L& layer, F& f) {
    f(name + ".gain", layer.gain);
    f(name + ".bias", layer.bias);
}

template <class H, class F>
void visit_dense_head(const std::string& name, H& head, F& f) {
    visit_norm(name + ".norm_mid", head.norm_mid, f);
    visit_norm(name + ".norm_last", head.norm_last, f);
    visit_linear(name + ".proj_mid", head.proj_mid, f);
    visit_linear(name + ".proj_last", head.proj_last, f);
    visit_linear(name + ".rcu_last.conv1", head.rcu_last.conv1, f);
    visit_linear(name + ".rcu_last.conv2", head.rcu_last.conv2, f);
    visit_linear(name + ".rcu_mid.conv1", head.rcu_mid.conv1, f);
    visit_linear(name + ".rcu_mid.conv2", head.rcu_mid.conv2, f);
    visit_linear(name + ".rcu_fused.conv1", head.rcu_fused.conv1, f);
    visit_linear(name + ".rcu_fused.conv2", head.rcu_fused.conv2, f);
    for (std::size_t k = 0; k < head.refine.size(); ++k) {
        visit_linear(name + ".refine." + std::to_string(k), head.refine[k], f);
    }
    visit_linear(name + ".out", head.out, f);
}

template <class PS, class F>
void visit_parameters(PS& ps, F& f) {
    visit_linear("input_proj", ps.input_proj, f);
    f(std::string("frame_embed"), ps.frame_embed);
    f(std::string("pos_embed"), ps.pos_embed);
    f(std::string("camera_token"), ps.camera_token);
    f(std::string("reference_embed"), ps.reference_embed);
    for (std::size_t i = 0; i < ps.blocks.size(); ++i) {
        auto& b = ps.blocks[i];
        const std::string p = "blocks." + std::to_string(i);
        visit_norm(p + ".norm1", b.norm1, f);
        visit_linear(p + ".frame_attn.qkv", b.frame_attn.qkv, f);
        visit_linear(p + ".frame_attn.out", b.frame_attn.out, f);
        visit_norm(p + ".norm2", b.norm2, f);
        visit_linear(p + ".ff1.fc1", b.ff1.fc1, f);
        visit_linear(p + ".ff1.fc2", b.ff1.fc2, f);
        visit_norm(p + ".norm3", b.norm3, f);
        visit_linear(p + ".global_attn.qkv", b.global_attn.qkv, f);
        visit_linear(p + ".global_attn.out", b.global_attn.out, f);
        visit_norm(p + ".norm4", b.norm4, f);
        visit_linear(p + ".ff2.fc1", b.ff2.fc1, f);
        visit_linear(p + ".ff2.fc2", b.ff2.fc2, f);
    }
    visit_dense_head("point_head", ps.point_head, f);
    visit_dense_head("depth_head", ps.depth_head, f);
    visit_norm("camera_head.norm", ps.camera_head.norm, f);
    visit_linear("camera_head.proj", ps.camera_head.proj, f);
}

}  // namespace detail

template <class T>
template <class F>
void ParameterSet<T>::visit(F&& f) {
    detail::visit_parameters(*this, f);
}

template <class T>
template <class F>
void ParameterSet<T>::visit(F&& f) const {
    detail::visit_parameters(*this, f);
}

template <class T>
std::size_t ParameterSet<T>::count() const {
    std::size_t n = 0;
    visit([&n](const std::string&, const Matrix<T>& m) { n += static_cast<std::size_t>(m.size()); });
    return n;
}

template <class T>
void ParameterSet<T>::set_zero() {
    visit([](const std::string&, Matrix<T>& m) { m.setZero(); });
}

template <class T>
ParameterSet<T> zeros_like(const ParameterSet<T>& params) {
    ParameterSet<T> out = params;
    out.set_zero();
    return out;
}

template <class U, class T>
ParameterSet<U> cast_parameters(const ParameterSet<T>& params) {
    ParameterSet<U> out;
    out.blocks.resize(params.blocks.size());
    out.point_head.refine.resize(params.point_head.refine.size());
    out.depth_head.refine.resize(params.depth_head.refine.size());
    std::vector<const Matrix<T>*> src;
    params.visit([&src](const std::string&, const Matrix<T>& m) { src.push_back(&m); });
    std::size_t i = 0;
    out.visit([&](const std::string&, Matrix<U>& m) { m = src[i++]->template cast<U>(); });
    return out;
}

// --- quaternion helpers used by the camera head and loss ------------------------------

/// Normalizes raw[0:4] to a unit quaternion with non-negative scalar part.
template <class T>
void normalize_pose_row(const T* raw, T* out);

}  // namespace vidprobe

// Copyright 2026 The vidprobe Authors
// SPDX-License-Identifier: Apache-2.0

#include "vidprobe/probe_model.hpp"

#include <cmath>
#include <cstdio>
#include <string>

#include "vidprobe/error.hpp"
#include "vidprobe/random.hpp"

namespace vidprobe {

namespace {

bool ends_with(const std::string& s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

template <class T>
void shape_linear(nn::Linear<T>& l, int in, int out) {
    l.weight.resize(in, out);
    l.bias.resize(1, out);
}

template <class T>
void shape_norm(nn::LayerNorm<T>& n, int d) {
    n.gain.resize(1, d);
    n.bias.resize(1, d);
}

template <class T>
void shape_conv(nn::Conv3x3<T>& c, int in, int out) {
    c.weight.resize(9 * in, out);
    c.bias.resize(1, out);
}

template <class T>
void shape_dense_head(DenseHeadParams<T>& h, const ProbeConfig& c, int out_channels) {
    const int d = c.width;
    const int f = c.head_features;
    shape_norm(h.norm_mid, d);
    shape_norm(h.norm_last, d);
    shape_linear(h.proj_mid, d, f);
    shape_linear(h.proj_last, d, f);
    for (auto* rcu : {&h.rcu_last, &h.rcu_mid, &h.rcu_fused}) {
        shape_conv(rcu->conv1, f, f);
        shape_conv(rcu->conv2, f, f);
    }
    h.refine.resize(static_cast<std::size_t>(c.upsample_steps() - 1));
    for (auto& r : h.refine) shape_conv(r, f, f);
    shape_conv(h.out, f, out_channels);
}

template <class T>
ParameterSet<T> shaped_parameters(const ProbeConfig& c) {
    const int d = c.width;
    const int hidden = c.mlp_ratio * d;
    ParameterSet<T> p;
    shape_linear(p.input_proj, c.in_channels, d);
    p.frame_embed.resize(c.frames, d);
    p.pos_embed.resize(c.grid_cells(), d);
    p.camera_token.resize(1, d);
    p.reference_embed.resize(1, d);
    p.blocks.resize(static_cast<std::size_t>(c.blocks));
    for (auto& b : p.blocks) {
        for (auto* n : {&b.norm1, &b.norm2, &b.norm3, &b.norm4}) shape_norm(*n, d);
        for (auto* a : {&b.frame_attn, &b.global_attn}) {
            shape_linear(a->qkv, d, 3 * d);
            shape_linear(a->out, d, d);
        }
        for (auto* ff : {&b.ff1, &b.ff2}) {
            shape_linear(ff->fc1, d, hidden);
            shape_linear(ff->fc2, hidden, d);
        }
    }
    shape_dense_head(p.point_head, c, 3);
    shape_dense_head(p.depth_head, c, 1);
    shape_norm(p.camera_head.norm, d);
    shape_linear(p.camera_head.proj, d, 7);
    return p;
}

// Rows [frame * per + offset, +count) of every frame, stacked.
template <class T>
Matrix<T> gather_rows(const Matrix<T>& x, int frames, int per, int offset, int count) {
    Matrix<T> out(static_cast<Eigen::Index>(frames) * count, x.cols());
    for (int i = 0; i < frames; ++i) out.middleRows(i * count, count) = x.middleRows(i * per + offset, count);
    return out;
}

template <class T>
Matrix<T> rcu_forward(const Matrix<T>& x, int h, int w, const ResidualConvUnit<T>& p, RcuCache<T>& c) {
    c.input = x;
    c.pre_mid = nn::conv3x3_forward(nn::gelu_forward(x), h, w, p.conv1, c.cols1);
    Matrix<T> y = nn::conv3x3_forward(nn::gelu_forward(c.pre_mid), h, w, p.conv2, c.cols2);
    y += x;
    return y;
}

template <class T>
Matrix<T> rcu_backward(const RcuCache<T>& c, int h, int w, const ResidualConvUnit<T>& p, const Matrix<T>& dy,
                       ResidualConvUnit<T>& g) {
    const Matrix<T> d_act2 = nn::conv3x3_backward(c.cols2, h, w, p.conv2, dy, g.conv2);
    const Matrix<T> d_act1 = nn::conv3x3_backward(c.cols1, h, w, p.conv1, nn::gelu_backward(c.pre_mid, d_act2), g.conv1);
    Matrix<T> dx = nn::gelu_backward(c.input, d_act1);
    dx += dy;
    return dx;
}

}  // namespace

// ---------------------------------------------------------------------------

void ProbeConfig::validate() const {
    auto fail = [](const std::string& msg) { throw Error(ErrorCode::kConfig, "probe config: " + msg); };
    if (width <= 0 || heads <= 0 || width % heads != 0) fail("width must be a positive multiple of heads");
    if (blocks < 1) fail("need at least one block");
    if (mlp_ratio < 1) fail("mlp_ratio must be >= 1");
    if (frames < 2) fail("frames per sample must be >= 2");
    if (in_channels <= 0) fail("in_channels must be positive");
    if (grid_h <= 0 || grid_w <= 0) fail("token grid must be positive");
    if (head_features <= 0) fail("head_features must be positive");
    upsample_steps();
}

int ProbeConfig::upsample_steps() const {
    for (int k = 1; k <= 8; ++k) {
        if (out_h == grid_h << k && out_w == grid_w << k) return k;
    }
    throw Error(ErrorCode::kConfig, "probe config: output " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                                        " must be the token grid " + std::to_string(grid_h) + "x" +
                                        std::to_string(grid_w) + " times 2^k, k >= 1");
}

void ProbeConfig::to_record(KvRecord& r, const std::string& prefix) const {
    r.set(prefix + "width", width)
        .set(prefix + "blocks", blocks)
        .set(prefix + "heads", heads)
        .set(prefix + "mlp_ratio", mlp_ratio)
        .set(prefix + "in_channels", in_channels)
        .set(prefix + "grid_h", grid_h)
        .set(prefix + "grid_w", grid_w)
        .set(prefix + "frames", frames)
        .set(prefix + "reference_indicator", reference_indicator ? 1 : 0)
        .set(prefix + "out_h", out_h)
        .set(prefix + "out_w", out_w)
        .set(prefix + "head_features", head_features)
        .set(prefix + "rotation", std::string("quaternion"));
}

ProbeConfig ProbeConfig::from_record(const KvRecord& r, const std::string& prefix) {
    ProbeConfig c;
    auto get = [&](const char* key, int& field) {
        if (const auto* v = r.find(prefix + key)) field = static_cast<int>(parse_int(*v));
    };
    get("width", c.width);
    get("blocks", c.blocks);
    get("heads", c.heads);
    get("mlp_ratio", c.mlp_ratio);
    get("in_channels", c.in_channels);
    get("grid_h", c.grid_h);
    get("grid_w", c.grid_w);
    get("frames", c.frames);
    int ref = c.reference_indicator ? 1 : 0;
    get("reference_indicator", ref);
    c.reference_indicator = ref != 0;
    get("out_h", c.out_h);
    get("out_w", c.out_w);
    get("head_features", c.head_features);
    if (const auto* v = r.find(prefix + "rotation"); v && *v != "quaternion") {
        throw Error(ErrorCode::kConfig, "unsupported rotation parameterization '" + *v + "'");
    }
    return c;
}

std::string fnv1a_hex(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

template <class T>
ProbeOutputs<T> ProbeOutputs<T>::zeros(const ProbeConfig& c) {
    ProbeOutputs<T> o;
    o.points.assign(static_cast<std::size_t>(c.frames), Matrix<T>::Zero(c.out_pixels(), 3));
    o.depth.assign(static_cast<std::size_t>(c.frames), Matrix<T>::Zero(c.out_pixels(), 1));
    o.pose = Matrix<T>::Zero(c.frames - 1, 7);
    return o;
}

template <class T>
ParameterSet<T> init_parameters(const ProbeConfig& config, std::uint64_t seed) {
    config.validate();
    ParameterSet<T> p = shaped_parameters<T>(config);
    Rng rng(seed);
    p.visit([&rng](const std::string& name, Matrix<T>& m) {
        if (ends_with(name, ".gain")) {
            m.setOnes();
        } else if (ends_with(name, ".bias")) {
            m.setZero();
        } else if (ends_with(name, ".weight")) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(m.rows()));
            for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(rng.uniform(-bound, bound));
        } else {
            for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(rng.normal(0.0, 0.02));
        }
    });
    return p;
}

template <class T>
void normalize_pose_row(const T* raw, T* out) {
    T norm = std::sqrt(raw[0] * raw[0] + raw[1] * raw[1] + raw[2] * raw[2] + raw[3] * raw[3]);
    if (norm < T(1e-12)) norm = T(1e-12);
    const T s = raw[0] < T(0) ? T(-1) : T(1);
    for (int k = 0; k < 4; ++k) out[k] = s * raw[k] / norm;
    for (int k = 4; k < 7; ++k) out[k] = raw[k];
}

// ---------------------------------------------------------------------------

template <class T>
ProbeModel<T>::ProbeModel(ProbeConfig config) : config_(config) {
    config_.validate();
}

template <class T>
Matrix<T> ProbeModel<T>::tokenize(std::span<const float> features, const ParameterSet<T>& params,
                                  Matrix<T>* patch_features) const {
    const int s = config_.frames;
    const int c = config_.in_channels;
    const int g = config_.grid_cells();
    const int per = config_.tokens_per_frame();
    const std::size_t expected = static_cast<std::size_t>(s) * c * g;
    if (features.size() != expected) {
        const std::size_t per_channel = static_cast<std::size_t>(s) * g;
        if (features.size() % per_channel == 0) {
            throw Error(ErrorCode::kShape, "tokenize: expected C=" + std::to_string(c) + ", got C=" +
                                               std::to_string(features.size() / per_channel));
        }
        throw Error(ErrorCode::kShape, "tokenize: expected " + std::to_string(expected) + " feature values, got " +
                                           std::to_string(features.size()));
    }
    Matrix<T> f(static_cast<Eigen::Index>(s) * g, c);
    for (int i = 0; i < s; ++i) {
        for (int ch = 0; ch < c; ++ch) {
            const float* src = features.data() + (static_cast<std::size_t>(i) * c + ch) * g;
            for (int site = 0; site < g; ++site) f(i * g + site, ch) = static_cast<T>(src[site]);
        }
    }
    const Matrix<T> patches = nn::linear_forward(f, params.input_proj);
    Matrix<T> tokens(static_cast<Eigen::Index>(s) * per, config_.width);
    for (int i = 0; i < s; ++i) {
        tokens.row(i * per) = params.camera_token.row(0) + params.frame_embed.row(i);
        auto block = tokens.middleRows(i * per + 1, g);
        block = patches.middleRows(i * g, g) + params.pos_embed;
        block.rowwise() += params.frame_embed.row(i);
    }
    if (config_.reference_indicator) tokens.topRows(per).rowwise() += params.reference_embed.row(0);
    if (patch_features) *patch_features = std::move(f);
    return tokens;
}

template <class T>
void ProbeModel<T>::tokenize_backward(const Matrix<T>& patch_features, const Matrix<T>& d_tokens,
                                      const ParameterSet<T>& params, ParameterSet<T>& grad) const {
    const int s = config_.frames;
    const int g = config_.grid_cells();
    const int per = config_.tokens_per_frame();
    Matrix<T> d_patch(static_cast<Eigen::Index>(s) * g, config_.width);
    for (int i = 0; i < s; ++i) {
        grad.frame_embed.row(i) += d_tokens.middleRows(i * per, per).colwise().sum();
        grad.camera_token.row(0) += d_tokens.row(i * per);
        d_patch.middleRows(i * g, g) = d_tokens.middleRows(i * per + 1, g);
        grad.pos_embed += d_tokens.middleRows(i * per + 1, g);
    }
    if (config_.reference_indicator) grad.reference_embed.row(0) += d_tokens.topRows(per).colwise().sum();
    nn::linear_backward(patch_features, params.input_proj, d_patch, grad.input_proj);
}

template <class T>
Matrix<T> ProbeModel<T>::block_forward(const Matrix<T>& tokens, const BlockParams<T>& b, BlockCache<T>* cache) const {
    BlockCache<T> local;
    BlockCache<T>& c = cache ? *cache : local;
    const int per = config_.tokens_per_frame();
    const int all = config_.total_tokens();
    Matrix<T> h = tokens;
    h += nn::attention_forward(nn::layer_norm_forward(h, b.norm1, c.ln1), b.frame_attn, config_.heads, per,
                               c.frame_attn);
    h += nn::feed_forward_forward(nn::layer_norm_forward(h, b.norm2, c.ln2), b.ff1, c.ff1);
    h += nn::attention_forward(nn::layer_norm_forward(h, b.norm3, c.ln3), b.global_attn, config_.heads, all,
                               c.global_attn);
    h += nn::feed_forward_forward(nn::layer_norm_forward(h, b.norm4, c.ln4), b.ff2, c.ff2);
    return h;
}

template <class T>
Matrix<T> ProbeModel<T>::frame_attention_sublayer(const Matrix<T>& tokens, const BlockParams<T>& b) const {
    nn::LayerNormCache<T> ln;
    nn::AttentionCache<T> attn;
    Matrix<T> h = tokens;
    h += nn::attention_forward(nn::layer_norm_forward(h, b.norm1, ln), b.frame_attn, config_.heads,
                               config_.tokens_per_frame(), attn);
    return h;
}

template <class T>
Matrix<T> ProbeModel<T>::block_backward(const BlockCache<T>& c, const BlockParams<T>& b, const Matrix<T>& dy,
                                        BlockParams<T>& g) const {
    const int per = config_.tokens_per_frame();
    const int all = config_.total_tokens();
    Matrix<T> dh = dy;
    dh += nn::layer_norm_backward(c.ln4, b.norm4, nn::feed_forward_backward(c.ff2, b.ff2, dh, g.ff2), g.norm4);
    dh += nn::layer_norm_backward(
        c.ln3, b.norm3, nn::attention_backward(c.global_attn, b.global_attn, config_.heads, all, dh, g.global_attn),
        g.norm3);
    dh += nn::layer_norm_backward(c.ln2, b.norm2, nn::feed_forward_backward(c.ff1, b.ff1, dh, g.ff1), g.norm2);
    dh += nn::layer_norm_backward(
        c.ln1, b.norm1, nn::attention_backward(c.frame_attn, b.frame_attn, config_.heads, per, dh, g.frame_attn),
        g.norm1);
    return dh;
}

template <class T>
std::vector<Matrix<T>> ProbeModel<T>::dense_head_forward(const Matrix<T>& tap_mid, const Matrix<T>& tap_last,
                                                         const DenseHeadParams<T>& head, DenseTarget target,
                                                         DenseHeadCache<T>* cache) const {
    DenseHeadCache<T> local;
    DenseHeadCache<T>& c = cache ? *cache : local;
    const int s = config_.frames;
    const int g = config_.grid_cells();
    const int per = config_.tokens_per_frame();
    const int gh = config_.grid_h;
    const int gw = config_.grid_w;

    c.mid_in = gather_rows(tap_mid, s, per, 1, g);
    c.last_in = gather_rows(tap_last, s, per, 1, g);
    c.mid_norm = nn::layer_norm_forward(c.mid_in, head.norm_mid, c.ln_mid);
    c.last_norm = nn::layer_norm_forward(c.last_in, head.norm_last, c.ln_last);
    const Matrix<T> mid_proj = nn::linear_forward(c.mid_norm, head.proj_mid);
    const Matrix<T> last_proj = nn::linear_forward(c.last_norm, head.proj_last);

    c.frames.resize(static_cast<std::size_t>(s));
    std::vector<Matrix<T>> out(static_cast<std::size_t>(s));
    for (int i = 0; i < s; ++i) {
        auto& fc = c.frames[static_cast<std::size_t>(i)];
        const Matrix<T> a = last_proj.middleRows(i * g, g);
        const Matrix<T> b = mid_proj.middleRows(i * g, g);
        Matrix<T> y = nn::upsample2x_forward(rcu_forward(a, gh, gw, head.rcu_last, fc.rcu_last), gh, gw);
        fc.mid_up = nn::upsample2x_forward(b, gh, gw);
        int h = 2 * gh;
        int w = 2 * gw;
        y += rcu_forward(fc.mid_up, h, w, head.rcu_mid, fc.rcu_mid);
        y = rcu_forward(y, h, w, head.rcu_fused, fc.rcu_fused);
        fc.refine.resize(head.refine.size());
        for (std::size_t k = 0; k < head.refine.size(); ++k) {
            Matrix<T> u = nn::upsample2x_forward(y, h, w);
            h *= 2;
            w *= 2;
            auto& rc = fc.refine[k];
            rc.input = u;
            y = nn::conv3x3_forward(nn::gelu_forward(u), h, w, head.refine[k], rc.cols1);
            y += u;
        }
        fc.out_pre = nn::conv3x3_forward(y, h, w, head.out, fc.out_cols);
        out[static_cast<std::size_t>(i)] =
            target == DenseTarget::kDepth ? Matrix<T>(fc.out_pre.unaryExpr([](T v) { return nn::positive_map(v); }))
                                          : fc.out_pre;
    }
    return out;
}

template <class T>
Matrix<T> ProbeModel<T>::dense_head_backward(const DenseHeadCache<T>& c, const DenseHeadParams<T>& head,
                                             DenseTarget target, const std::vector<Matrix<T>>& d_out,
                                             DenseHeadParams<T>& grad, Matrix<T>& d_tap_mid) const {
    const int s = config_.frames;
    const int g = config_.grid_cells();
    const int per = config_.tokens_per_frame();
    const int gh = config_.grid_h;
    const int gw = config_.grid_w;
    const int f = config_.head_features;
    Matrix<T> d_mid_proj(static_cast<Eigen::Index>(s) * g, f);
    Matrix<T> d_last_proj(static_cast<Eigen::Index>(s) * g, f);
    for (int i = 0; i < s; ++i) {
        const auto& fc = c.frames[static_cast<std::size_t>(i)];
        Matrix<T> d_pre = d_out[static_cast<std::size_t>(i)];
        if (target == DenseTarget::kDepth) {
            d_pre = d_pre.cwiseProduct(fc.out_pre.unaryExpr([](T v) { return nn::positive_map_grad(v); }));
        }
        int h = config_.out_h;
        int w = config_.out_w;
        Matrix<T> dy = nn::conv3x3_backward(fc.out_cols, h, w, head.out, d_pre, grad.out);
        for (std::size_t k = head.refine.size(); k-- > 0;) {
            const auto& rc = fc.refine[k];
            Matrix<T> du =
                nn::gelu_backward(rc.input, nn::conv3x3_backward(rc.cols1, h, w, head.refine[k], dy, grad.refine[k]));
            du += dy;
            h /= 2;
            w /= 2;
            dy = nn::upsample2x_backward(du, h, w);
        }
        const Matrix<T> dz = rcu_backward(fc.rcu_fused, h, w, head.rcu_fused, dy, grad.rcu_fused);
        const Matrix<T> d_mid_up = rcu_backward(fc.rcu_mid, h, w, head.rcu_mid, dz, grad.rcu_mid);
        d_mid_proj.middleRows(i * g, g) = nn::upsample2x_backward(d_mid_up, gh, gw);
        d_last_proj.middleRows(i * g, g) =
            rcu_backward(fc.rcu_last, gh, gw, head.rcu_last, nn::upsample2x_backward(dz, gh, gw), grad.rcu_last);
    }
    const Matrix<T> d_mid_in = nn::layer_norm_backward(
        c.ln_mid, head.norm_mid, nn::linear_backward(c.mid_norm, head.proj_mid, d_mid_proj, grad.proj_mid),
        grad.norm_mid);
    const Matrix<T> d_last_in = nn::layer_norm_backward(
        c.ln_last, head.norm_last, nn::linear_backward(c.last_norm, head.proj_last, d_last_proj, grad.proj_last),
        grad.norm_last);
    Matrix<T> d_tap_last = Matrix<T>::Zero(config_.total_tokens(), config_.width);
    for (int i = 0; i < s; ++i) {
        d_tap_mid.middleRows(i * per + 1, g) += d_mid_in.middleRows(i * g, g);
        d_tap_last.middleRows(i * per + 1, g) = d_last_in.middleRows(i * g, g);
    }
    return d_tap_last;
}

template <class T>
Matrix<T> ProbeModel<T>::camera_head_forward(const Matrix<T>& tokens, const CameraHeadParams<T>& head,
                                             CameraHeadCache<T>* cache) const {
    CameraHeadCache<T> local;
    CameraHeadCache<T>& c = cache ? *cache : local;
    const int s = config_.frames;
    const int per = config_.tokens_per_frame();
    c.tokens.resize(s - 1, config_.width);
    for (int i = 1; i < s; ++i) c.tokens.row(i - 1) = tokens.row(i * per);
    c.normed = nn::layer_norm_forward(c.tokens, head.norm, c.ln);
    c.raw = nn::linear_forward(c.normed, head.proj);
    Matrix<T> pose(s - 1, 7);
    for (int r = 0; r < s - 1; ++r) normalize_pose_row(c.raw.row(r).data(), pose.row(r).data());
    return pose;
}

template <class T>
Matrix<T> ProbeModel<T>::camera_head_backward(const CameraHeadCache<T>& c, const CameraHeadParams<T>& head,
                                              const Matrix<T>& d_pose, CameraHeadParams<T>& grad) const {
    const int s = config_.frames;
    const int per = config_.tokens_per_frame();
    Matrix<T> d_raw = d_pose;
    for (int r = 0; r < s - 1; ++r) {
        Eigen::Matrix<T, 4, 1> q;
        for (int k = 0; k < 4; ++k) q(k) = c.raw(r, k);
        T norm = q.norm();
        if (norm < T(1e-12)) norm = T(1e-12);
        const T sign = c.raw(r, 0) < T(0) ? T(-1) : T(1);
        const Eigen::Matrix<T, 4, 1> n = q / norm;
        Eigen::Matrix<T, 4, 1> dq;
        for (int k = 0; k < 4; ++k) dq(k) = d_pose(r, k);
        const Eigen::Matrix<T, 4, 1> dr = sign * (dq - n * n.dot(dq)) / norm;
        for (int k = 0; k < 4; ++k) d_raw(r, k) = dr(k);
    }
    const Matrix<T> d_tokens = nn::layer_norm_backward(
        c.ln, head.norm, nn::linear_backward(c.normed, head.proj, d_raw, grad.proj), grad.norm);
    Matrix<T> d_tap = Matrix<T>::Zero(config_.total_tokens(), config_.width);
    for (int i = 1; i < s; ++i) d_tap.row(i * per) = d_tokens.row(i - 1);
    return d_tap;
}

template <class T>
ProbeOutputs<T> ProbeModel<T>::forward(std::span<const float> features, const ParameterSet<T>& params,
                                       ProbeTape<T>* tape) const {
    ProbeTape<T> local;
    ProbeTape<T>& t = tape ? *tape : local;
    Matrix<T> h = tokenize(features, params, &t.patch_features);
    t.blocks.resize(params.blocks.size());
    for (int b = 0; b < config_.blocks; ++b) {
        h = block_forward(h, params.blocks[static_cast<std::size_t>(b)], &t.blocks[static_cast<std::size_t>(b)]);
        if (b + 1 == config_.mid_tap()) t.tap_mid = h;
    }
    t.tap_last = std::move(h);
    ProbeOutputs<T> out;
    out.points = dense_head_forward(t.tap_mid, t.tap_last, params.point_head, DenseTarget::kPoint, &t.point);
    out.depth = dense_head_forward(t.tap_mid, t.tap_last, params.depth_head, DenseTarget::kDepth, &t.depth);
    out.pose = camera_head_forward(t.tap_last, params.camera_head, &t.camera);
    return out;
}

template <class T>
void ProbeModel<T>::backward(const ProbeTape<T>& tape, const ParameterSet<T>& params, const ProbeOutputs<T>& d_out,
                             ParameterSet<T>& grad) const {
    Matrix<T> d_mid = Matrix<T>::Zero(config_.total_tokens(), config_.width);
    Matrix<T> dh = dense_head_backward(tape.point, params.point_head, DenseTarget::kPoint, d_out.points,
                                       grad.point_head, d_mid);
    dh += dense_head_backward(tape.depth, params.depth_head, DenseTarget::kDepth, d_out.depth, grad.depth_head, d_mid);
    dh += camera_head_backward(tape.camera, params.camera_head, d_out.pose, grad.camera_head);
    for (int b = config_.blocks - 1; b >= 0; --b) {
        if (b + 1 == config_.mid_tap()) dh += d_mid;
        dh = block_backward(tape.blocks[static_cast<std::size_t>(b)], params.blocks[static_cast<std::size_t>(b)], dh,
                            grad.blocks[static_cast<std::size_t>(b)]);
    }
    tokenize_backward(tape.patch_features, dh, params, grad);
}

template struct ProbeOutputs<float>;
template struct ProbeOutputs<double>;
template ParameterSet<float> init_parameters<float>(const ProbeConfig&, std::uint64_t);
template ParameterSet<double> init_parameters<double>(const ProbeConfig&, std::uint64_t);
template void normalize_pose_row<float>(const float*, float*);
template void normalize_pose_row<double>(const double*, double*);
template class ProbeModel<float>;
template class ProbeModel<double>;

}  // namespace vidprobe

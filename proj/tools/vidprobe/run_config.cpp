// Copyright 2026 The vidprobe Authors
// SPDX-License-Identifier: Apache-2.0

#include "run_config.hpp"

#include <sstream>

#include "vidprobe/error.hpp"

namespace vidprobe::cli {

namespace {

void metrics_to_record(const MetricsConfig& m, KvRecord& r) {
    r.set("thetas", format_thetas(m.thetas))
        .set("umeyama_scale", m.umeyama_scale ? 1 : 0)
        .set("correspondence", m.correspondence ? 1 : 0)
        .set("n_anchors", m.n_anchors)
        .set("occlusion_tolerance", m.occlusion_tolerance)
        .set("nn_metric", std::string(m.nn_metric == NnMetric::kCosine ? "cosine" : "euclidean"))
        .set("seed", m.seed);
}

MetricsConfig metrics_from_record(const KvRecord& r) {
    MetricsConfig m;
    if (const auto* v = r.find("thetas")) m.thetas = parse_thetas(*v);
    if (const auto* v = r.find("umeyama_scale")) m.umeyama_scale = parse_int(*v) != 0;
    if (const auto* v = r.find("correspondence")) m.correspondence = parse_int(*v) != 0;
    if (const auto* v = r.find("n_anchors")) m.n_anchors = static_cast<int>(parse_int(*v));
    if (const auto* v = r.find("occlusion_tolerance")) m.occlusion_tolerance = parse_double(*v);
    if (const auto* v = r.find("nn_metric")) {
        if (*v == "cosine") {
            m.nn_metric = NnMetric::kCosine;
        } else if (*v == "euclidean") {
            m.nn_metric = NnMetric::kEuclidean;
        } else {
            throw Error(ErrorCode::kConfig, "unknown nn_metric '" + *v + "'");
        }
    }
    if (const auto* v = r.find("seed")) m.seed = parse_uint(*v);
    return m;
}

}  // namespace

RunConfig::RunConfig() {
    probe.width = 256;
    train.steps = 2000;
    train.warmup_steps = 100;
    train.learning_rate = 3e-4;
}

std::vector<double> parse_thetas(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        const double v = parse_double(item);
        if (!(v > 0)) throw Error(ErrorCode::kConfig, "theta must be positive, got '" + item + "'");
        out.push_back(v);
    }
    if (out.empty()) throw Error(ErrorCode::kConfig, "no thresholds in '" + text + "'");
    return out;
}

std::string format_thetas(const std::vector<double>& thetas) {
    std::string out;
    for (std::size_t i = 0; i < thetas.size(); ++i) {
        if (i) out += ',';
        out += format_double(thetas[i]);
    }
    return out;
}

std::vector<KvRecord> to_records(const RunConfig& c) {
    std::vector<KvRecord> out;
    KvRecord run{"run", {}};
    run.set("data_root", c.data_root)
        .set("backbone", c.backbone)
        .set("scenes", c.scenes)
        .set("train_ratio", c.train_ratio)
        .set("eval_split", c.eval_split)
        .set("point_display_x10", c.point_display_x10 ? 1 : 0);
    // Unset paths are omitted.
    for (const auto& [key, value] : {std::pair{"out", &c.out}, {"checkpoint", &c.checkpoint}, {"manifest", &c.manifest}}) {
        if (!value->empty()) run.set(key, *value);
    }
    out.push_back(run);
    KvRecord oracle{"oracle", {}};
    c.oracle.to_record(oracle, "");
    out.push_back(oracle);
    KvRecord probe{"probe", {}};
    c.probe.to_record(probe, "");
    out.push_back(probe);
    KvRecord train{"train", {}};
    c.train.to_record(train, "");
    out.push_back(train);
    KvRecord metrics{"metrics", {}};
    metrics_to_record(c.metrics, metrics);
    out.push_back(metrics);
    return out;
}

RunConfig from_records(const std::vector<KvRecord>& records) {
    RunConfig c;
    for (const auto& r : records) {
        if (r.kind == "run") {
            if (const auto* v = r.find("data_root")) c.data_root = *v;
            if (const auto* v = r.find("backbone")) c.backbone = *v;
            if (const auto* v = r.find("out")) c.out = *v;
            if (const auto* v = r.find("scenes")) c.scenes = static_cast<int>(parse_int(*v));
            if (const auto* v = r.find("train_ratio")) c.train_ratio = parse_double(*v);
            if (const auto* v = r.find("checkpoint")) c.checkpoint = *v;
            if (const auto* v = r.find("manifest")) c.manifest = *v;
            if (const auto* v = r.find("eval_split")) c.eval_split = *v;
            if (const auto* v = r.find("point_display_x10")) c.point_display_x10 = parse_int(*v) != 0;
        } else if (r.kind == "oracle") {
            c.oracle = OracleConfig::from_record(r, "");
        } else if (r.kind == "probe") {
            c.probe = ProbeConfig::from_record(r, "");
        } else if (r.kind == "train") {
            c.train = TrainConfig::from_record(r, "");
        } else if (r.kind == "metrics") {
            c.metrics = metrics_from_record(r);
        } else {
            throw Error(ErrorCode::kConfig, "unknown config section '" + r.kind + "'");
        }
    }
    return c;
}

std::string format_run_config(const RunConfig& config) {
    std::string out;
    for (const auto& r : to_records(config)) out += format_record(r) + "\n";
    return out;
}

void write_run_config(const RunConfig& config, const std::filesystem::path& path) {
    write_records(path, to_records(config), "vidprobe run config");
}

RunConfig read_run_config(const std::filesystem::path& path) { return from_records(read_records(path)); }

std::string run_hash(const RunConfig& config) {
    RunConfig c = config;
    c.out.clear();
    return fnv1a_hex(format_run_config(c));
}

std::filesystem::path run_directory(const RunConfig& config, const std::string& command) {
    return std::filesystem::path(config.out) / (command + "-" + run_hash(config));
}

}  // namespace vidprobe::cli

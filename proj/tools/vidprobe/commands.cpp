// Copyright 2026 The vidprobe Authors
// SPDX-License-Identifier: Apache-2.0

#include "commands.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "vidprobe/checkpoint.hpp"
#include "vidprobe/dataset.hpp"
#include "vidprobe/error.hpp"

namespace vidprobe::cli {

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
    out << text;
    if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

std::filesystem::path manifest_path(const RunConfig& c, const std::string& split) {
    if (!c.manifest.empty() && split == "train") return c.manifest;
    return std::filesystem::path(c.data_root) / (split + ".manifest");
}

Manifest load_manifest(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw Error(ErrorCode::kIo, "manifest not found: " + path.string());
    return read_manifest(path);
}

// Probe shape follows the data: channels and grid from the clip, output size from the annotation.
ProbeConfig fit_probe(ProbeConfig probe, const SceneRecord& scene, int frames) {
    probe.in_channels = scene.clip.channels;
    probe.grid_h = scene.clip.grid_h;
    probe.grid_w = scene.clip.grid_w;
    probe.out_h = scene.annotation.height;
    probe.out_w = scene.annotation.width;
    probe.frames = frames;
    probe.validate();
    return probe;
}

MetricsConfig resolved_metrics(const RunConfig& c) {
    MetricsConfig m = c.metrics;
    m.frames = c.train.frames;
    m.gap = c.train.gap;
    return m;
}

struct TrainedProbe {
    ParameterSet<float> params;
    ProbeConfig probe;
    int scenes = 0;
};

TrainedProbe train_on(const RunConfig& c, const std::string& backbone, const std::filesystem::path& run_dir,
                      std::ostream& log) {
    const auto path = manifest_path(c, "train");
    const Manifest manifest = load_manifest(path);
    const auto scenes = load_split(manifest, c.data_root, backbone);
    const ProbeConfig probe = fit_probe(c.probe, scenes.front(), c.train.frames);
    TrainOutput output;
    output.dir = run_dir;
    output.backbone = backbone;
    const int every = std::max(1, c.train.steps / 10);
    output.on_step = [&log, every](const TrainLogEntry& e) {
        if (e.step % every == 0) log << "step " << e.step << " loss " << format_double(e.loss.total) << "\n";
    };
    TrainResult result = train_probe(scenes, probe, c.train, output);
    return {std::move(result.params), probe, static_cast<int>(result.scene_indices.size())};
}

}  // namespace

SynthResult cmd_synth(const RunConfig& c, std::ostream& log) {
    c.oracle.validate();
    if (c.scenes < 1) throw Error(ErrorCode::kConfig, "--scenes must be >= 1");
    const std::filesystem::path root = c.data_root;
    std::filesystem::create_directories(root);
    const OracleDataset ds = build_oracle_dataset(c.scenes, c.train_ratio, c.oracle, root, c.backbone);
    write_run_config(c, root / "synth.config");
    SynthResult r{ds.train_manifest, ds.test_manifest, static_cast<int>(ds.train.entries.size()),
                  static_cast<int>(ds.test.entries.size())};
    log << "train manifest " << r.train_manifest.string() << " (" << r.train_scenes << " scenes)\n";
    log << "test manifest " << r.test_manifest.string() << " (" << r.test_scenes << " scenes)\n";
    return r;
}

TrainRun cmd_train(const RunConfig& c, std::ostream& log) {
    c.train.validate();
    const auto run_dir = run_directory(c, "train");
    std::filesystem::create_directories(run_dir);
    write_run_config(c, run_dir / "run.config");
    const TrainedProbe t = train_on(c, c.backbone, run_dir, log);
    TrainRun r{run_dir, run_dir / checkpoint_name(c.backbone, c.train.steps), t.scenes};
    log << "trained on " << r.train_scenes << " scenes\n";
    log << "checkpoint " << r.checkpoint.string() << "\n";
    return r;
}

EvalRun cmd_eval(const RunConfig& c, std::ostream& log) {
    if (c.checkpoint.empty()) throw Error(ErrorCode::kConfig, "eval needs --checkpoint");
    const LoadedCheckpoint ckpt = load_checkpoint(c.checkpoint);
    const auto path = manifest_path(c, c.eval_split);
    const auto scenes = load_split(load_manifest(path), c.data_root, c.backbone);
    EvalRun r;
    r.run_dir = run_directory(c, "eval");
    std::filesystem::create_directories(r.run_dir);
    write_run_config(c, r.run_dir / "run.config");
    r.report = evaluate_probe(ckpt.params, ckpt.info.config, scenes, resolved_metrics(c), c.backbone);
    r.report.point_display_x10 = c.point_display_x10;
    write_text(r.run_dir / "report.json", report_to_json(r.report));
    const std::string table = report_to_table(r.report);
    write_text(r.run_dir / "report.txt", table);
    write_text(r.run_dir / "report.csv", report_to_csv(r.report));
    log << table;
    log << "report " << (r.run_dir / "report.json").string() << "\n";
    return r;
}

std::string sweep_grid_csv(const std::vector<SweepCell>& cells) {
    std::set<int> layers;
    std::set<int> steps;
    std::map<std::pair<int, int>, std::optional<double>> grid;
    for (const auto& cell : cells) {
        if (!cell.layer || !cell.timestep) continue;
        layers.insert(*cell.layer);
        steps.insert(*cell.timestep);
        grid[{*cell.layer, *cell.timestep}] = cell.point_err;
    }
    std::ostringstream out;
    out << "layer";
    for (int t : steps) out << ",t" << t;
    out << "\n";
    for (int l : layers) {
        out << l;
        for (int t : steps) {
            out << ',';
            const auto it = grid.find({l, t});
            if (it != grid.end() && it->second) out << format_double(*it->second);
        }
        out << "\n";
    }
    return out.str();
}

SweepRun cmd_sweep(const RunConfig& c, std::ostream& log) {
    const Manifest train = load_manifest(manifest_path(c, "train"));
    const Manifest test = load_manifest(manifest_path(c, c.eval_split));
    if (train.entries.empty()) throw Error(ErrorCode::kEmptySplit, "sweep: train manifest is empty");
    std::set<std::string> keys;
    for (const auto& e : train.entries) {
        for (const auto& [key, _] : e.clips) {
            if (key.rfind(c.backbone, 0) == 0) keys.insert(key);
        }
    }
    if (keys.empty()) throw Error(ErrorCode::kMissingBackbone, "sweep: no features with prefix '" + c.backbone + "'");

    SweepRun r;
    r.run_dir = run_directory(c, "sweep");
    std::filesystem::create_directories(r.run_dir);
    write_run_config(c, r.run_dir / "run.config");
    std::ostringstream cells_csv;
    cells_csv << "backbone,layer,timestep,point_err,depth_err\n";
    for (const auto& key : keys) {
        SweepCell cell;
        cell.backbone = key;
        const auto& first = train.entries.front();
        if (first.clips.contains(key)) {
            const FeatureClip clip = read_feature_clip(std::filesystem::path(c.data_root) / first.clips.at(key));
            cell.layer = clip.meta.layer;
            cell.timestep = clip.meta.timestep;
        }
        std::optional<double> depth;
        try {
            const TrainedProbe t = train_on(c, key, r.run_dir / key, log);
            const auto scenes = load_split(test, c.data_root, key);
            MetricsConfig m = resolved_metrics(c);
            m.correspondence = false;
            const MetricsReport rep = evaluate_probe(t.params, t.probe, scenes, m, key);
            cell.point_err = rep.mean_point_err;
            depth = rep.mean_depth_err;
            log << key << " point " << format_metric(rep.mean_point_err) << "\n";
        } catch (const Error& e) {
            if (e.code() != ErrorCode::kMissingBackbone) throw;
            log << key << " skipped: " << e.what() << "\n";
        }
        cells_csv << key << ',' << (cell.layer ? std::to_string(*cell.layer) : "") << ','
                  << (cell.timestep ? std::to_string(*cell.timestep) : "") << ','
                  << (cell.point_err ? format_double(*cell.point_err) : "") << ','
                  << (depth ? format_double(*depth) : "") << "\n";
        r.cells.push_back(cell);
    }
    r.grid_csv = sweep_grid_csv(r.cells);
    write_text(r.run_dir / "sweep_cells.csv", cells_csv.str());
    write_text(r.run_dir / "sweep_grid.csv", r.grid_csv);
    log << r.grid_csv;
    return r;
}

}  // namespace vidprobe::cli

// Copyright 2026 The vidprobe Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "commands.hpp"
#include "vidprobe/error.hpp"

namespace {

using vidprobe::cli::RunConfig;

struct Flags {
    std::string config;
    std::optional<std::string> data_root, out, backbone, kind, checkpoint, manifest, theta, split;
    std::optional<std::uint64_t> seed;
    std::optional<int> scenes, steps, batch, width, frames;
    std::optional<double> data_fraction, noise, decorrelation, dropout, lr;
    bool point_x10 = false;
};

void add_common(CLI::App* cmd, Flags& f) {
    cmd->add_option("--config", f.config, "Run config file; flags override its values");
    cmd->add_option("--data-root", f.data_root, "Dataset root directory");
    cmd->add_option("--out", f.out, "Output directory for run artifacts");
    cmd->add_option("--seed", f.seed, "Seed for all randomness of this command");
    cmd->add_option("--backbone", f.backbone, "Backbone id (prefix for sweep)");
}

void add_training(CLI::App* cmd, Flags& f) {
    cmd->add_option("--data-fraction", f.data_fraction, "Fraction of train scenes used, in (0, 1]");
    cmd->add_option("--steps", f.steps, "Optimizer steps");
    cmd->add_option("--batch", f.batch, "Scenes per step");
    cmd->add_option("--lr", f.lr, "Base learning rate");
    cmd->add_option("--width", f.width, "Probe width d");
    cmd->add_option("--manifest", f.manifest, "Train manifest (default <data-root>/train.manifest)");
}

RunConfig resolve(const Flags& f, const std::string& command) {
    RunConfig c = f.config.empty() ? RunConfig{} : vidprobe::cli::read_run_config(f.config);
    if (f.data_root) c.data_root = *f.data_root;
    if (f.out) c.out = *f.out;
    if (f.backbone) c.backbone = *f.backbone;
    if (f.kind) c.oracle.kind = vidprobe::parse_scene_kind(*f.kind);
    if (f.scenes) c.scenes = *f.scenes;
    if (f.frames) c.oracle.frames = *f.frames;
    if (f.noise) c.oracle.noise = *f.noise;
    if (f.decorrelation) c.oracle.decorrelation = *f.decorrelation;
    if (f.dropout) c.oracle.dropout = *f.dropout;
    if (f.data_fraction) c.train.data_fraction = *f.data_fraction;
    if (f.steps) c.train.steps = *f.steps;
    if (f.batch) c.train.batch_size = *f.batch;
    if (f.lr) c.train.learning_rate = *f.lr;
    if (f.width) c.probe.width = *f.width;
    if (f.manifest) c.manifest = *f.manifest;
    if (f.checkpoint) c.checkpoint = *f.checkpoint;
    if (f.split) c.eval_split = *f.split;
    if (f.theta) c.metrics.thetas = vidprobe::cli::parse_thetas(*f.theta);
    if (f.point_x10) c.point_display_x10 = true;
    if (f.seed) {
        if (command == "synth") c.oracle.seed = *f.seed;
        if (command == "train" || command == "sweep") c.train.seed = *f.seed;
        if (command == "eval" || command == "sweep") c.metrics.seed = *f.seed;
    }
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"vidprobe: probe frozen video features for 3D awareness"};
    app.require_subcommand(1);
    Flags f;

    auto* synth = app.add_subcommand("synth", "Build a synthetic oracle dataset");
    add_common(synth, f);
    synth->add_option("--scenes", f.scenes, "Number of scenes");
    synth->add_option("--kind", f.kind, "Scene kind")->check(CLI::IsMember({"orbit", "flythrough"}));
    synth->add_option("--frames", f.frames, "Frames per video");
    synth->add_option("--noise", f.noise, "Feature noise sigma");
    synth->add_option("--decorrelation", f.decorrelation, "Per-frame decorrelation rho in [0, 1]");
    synth->add_option("--dropout", f.dropout, "Fraction of channels zeroed per clip");

    auto* train = app.add_subcommand("train", "Train a probe on a manifest split");
    add_common(train, f);
    add_training(train, f);

    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint and write reports");
    add_common(eval, f);
    eval->add_option("--checkpoint", f.checkpoint, "Checkpoint directory")->required();
    eval->add_option("--split", f.split, "Split to evaluate (default test)");
    eval->add_option("--theta", f.theta, "Comma-separated AUC thresholds in degrees, e.g. 5,30");
    eval->add_flag("--point-display-x10", f.point_x10, "Show point error multiplied by 10 in the table");

    auto* sweep = app.add_subcommand("sweep", "Train one probe per layer/timestep feature set");
    add_common(sweep, f);
    add_training(sweep, f);

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) {
            vidprobe::cli::cmd_synth(resolve(f, "synth"), std::cout);
        } else if (train->parsed()) {
            vidprobe::cli::cmd_train(resolve(f, "train"), std::cout);
        } else if (eval->parsed()) {
            vidprobe::cli::cmd_eval(resolve(f, "eval"), std::cout);
        } else if (sweep->parsed()) {
            vidprobe::cli::cmd_sweep(resolve(f, "sweep"), std::cout);
        }
    } catch (const vidprobe::Error& e) {
        std::cerr << "error [" << vidprobe::to_string(e.code()) << "]: " << e.what() << "\n";
        return e.code() == vidprobe::ErrorCode::kConfig ? 2 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

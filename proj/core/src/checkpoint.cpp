// Copyright 2026 The vidprobe Authors
// SPDX-License-Identifier: Apache-2.0

#include "vidprobe/checkpoint.hpp"

#include <vector>

#include "vidprobe/error.hpp"
#include "vidprobe/kv_text.hpp"
#include "vidprobe/tensor_store.hpp"

namespace vidprobe {

namespace {

std::string shape_text(const Matrix<float>& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

}  // namespace

std::string config_hash(const ProbeConfig& config) {
    KvRecord r{"probe", {}};
    config.to_record(r, "");
    return fnv1a_hex(format_record(r));
}

std::string checkpoint_name(const std::string& backbone, int step) {
    return "probe_" + backbone + "_" + std::to_string(step);
}

void save_checkpoint(const ParameterSet<float>& params, const CheckpointInfo& info, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::vector<KvRecord> records;
    KvRecord head{"checkpoint", {}};
    head.set("backbone", info.backbone)
        .set("step", info.step)
        .set("seed", info.seed)
        .set("config_hash", config_hash(info.config));
    info.config.to_record(head);
    records.push_back(head);
    params.visit([&](const std::string& name, const Matrix<float>& m) {
        const std::string file = name + ".vfpb";
        Tensor t({static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())},
                 std::vector<float>(m.data(), m.data() + m.size()));
        write_tensor(t, dir / file);
        KvRecord r{"param", {}};
        r.set("name", name).set("shape", shape_text(m)).set("file", file);
        records.push_back(r);
    });
    write_records(dir / "checkpoint.meta", records, "vidprobe checkpoint");
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir) {
    const auto records = read_records(dir / "checkpoint.meta");
    if (records.empty() || records.front().kind != "checkpoint") {
        throw Error(ErrorCode::kParse, "checkpoint.meta in " + dir.string() + " lacks a checkpoint record");
    }
    LoadedCheckpoint out;
    const auto& head = records.front();
    out.info.backbone = head.at("backbone");
    out.info.step = static_cast<int>(head.get_int("step"));
    out.info.seed = head.get_uint("seed");
    out.info.config = ProbeConfig::from_record(head);
    if (config_hash(out.info.config) != head.at("config_hash")) {
        throw Error(ErrorCode::kInvariant, "checkpoint config hash mismatch in " + dir.string());
    }
    out.params = init_parameters<float>(out.info.config, 0);
    std::size_t next = 1;
    out.params.visit([&](const std::string& name, Matrix<float>& m) {
        if (next >= records.size() || records[next].kind != "param" || records[next].at("name") != name) {
            throw Error(ErrorCode::kParse, "checkpoint missing parameter '" + name + "'");
        }
        const auto& r = records[next++];
        if (r.at("shape") != shape_text(m)) {
            throw Error(ErrorCode::kShape, "parameter '" + name + "' has shape " + r.at("shape") + ", expected " +
                                               shape_text(m));
        }
        const Tensor t = read_tensor(dir / r.at("file"));
        if (t.values.size() != static_cast<std::size_t>(m.size())) {
            throw Error(ErrorCode::kShape, "parameter '" + name + "' tensor size mismatch");
        }
        std::copy(t.values.begin(), t.values.end(), m.data());
    });
    return out;
}

}  // namespace vidprobe

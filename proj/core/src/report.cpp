// Copyright 2026 The vidprobe Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "vidprobe/error.hpp"
#include "vidprobe/kv_text.hpp"
#include "vidprobe/metrics.hpp"

namespace vidprobe {

namespace {

using Json = nlohmann::ordered_json;

std::string theta_key(double theta) { return format_double(theta); }

Json auc_json(const std::vector<double>& thetas, const std::vector<double>& values) {
    Json j = Json::object();
    for (std::size_t k = 0; k < thetas.size(); ++k) j[theta_key(thetas[k])] = values.at(k);
    return j;
}

std::vector<double> auc_from_json(const Json& j, const std::vector<double>& thetas) {
    std::vector<double> out;
    for (double t : thetas) out.push_back(j.at(theta_key(t)).get<double>());
    return out;
}

std::string pad(const std::string& s, std::size_t width) {
    return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

}  // namespace

std::string format_metric(double value) {
    if (!std::isfinite(value)) return value > 0 ? "inf" : (value < 0 ? "-inf" : "nan");
    if (value == 0.0) return "0";
    const int magnitude = static_cast<int>(std::floor(std::log10(std::abs(value))));
    int decimals = std::max(0, 2 - magnitude);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, value);
    // Rounding can carry into a new digit (0.9996 -> 1.000).
    const double shown = std::strtod(buf, nullptr);
    if (shown != 0.0 && static_cast<int>(std::floor(std::log10(std::abs(shown)))) > magnitude && decimals > 0) {
        std::snprintf(buf, sizeof(buf), "%.*f", decimals - 1, value);
    }
    return buf;
}

std::string report_to_json(const MetricsReport& report) {
    Json j;
    j["backbone"] = report.backbone;
    j["thetas"] = report.thetas;
    j["point_display_x10"] = report.point_display_x10;
    Json agg;
    agg["scenes"] = report.scenes.size();
    agg["point_err"] = report.mean_point_err;
    agg["depth_err"] = report.mean_depth_err;
    agg["auc"] = auc_json(report.thetas, report.mean_auc);
    agg["correspondence_scenes"] = report.correspondence_scenes;
    if (report.mean_correspondence_err) agg["correspondence_err"] = *report.mean_correspondence_err;
    j["aggregate"] = agg;
    Json scenes = Json::array();
    for (const auto& s : report.scenes) {
        Json js;
        js["video_id"] = s.video_id;
        js["point_err"] = s.point_err;
        js["depth_err"] = s.depth_err;
        js["auc"] = auc_json(report.thetas, s.auc);
        if (s.correspondence_err) js["correspondence_err"] = *s.correspondence_err;
        Json pairs = Json::array();
        for (const auto& e : s.pose_errors) {
            pairs.push_back({{"rotation_deg", e.rotation_deg}, {"translation_deg", e.translation_deg},
                             {"excluded", e.excluded}});
        }
        js["pose_errors"] = pairs;
        scenes.push_back(js);
    }
    j["scenes"] = scenes;
    return j.dump(2) + "\n";
}

MetricsReport report_from_json(const std::string& text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::kParse, std::string("report json: ") + e.what());
    }
    try {
        MetricsReport r;
        r.backbone = j.at("backbone").get<std::string>();
        r.thetas = j.at("thetas").get<std::vector<double>>();
        r.point_display_x10 = j.at("point_display_x10").get<bool>();
        for (const auto& js : j.at("scenes")) {
            SceneMetrics s;
            s.video_id = js.at("video_id").get<std::string>();
            s.point_err = js.at("point_err").get<double>();
            s.depth_err = js.at("depth_err").get<double>();
            s.auc = auc_from_json(js.at("auc"), r.thetas);
            if (js.contains("correspondence_err")) s.correspondence_err = js.at("correspondence_err").get<double>();
            for (const auto& e : js.at("pose_errors")) {
                s.pose_errors.push_back({e.at("rotation_deg").get<double>(), e.at("translation_deg").get<double>(),
                                         e.at("excluded").get<bool>()});
            }
            r.scenes.push_back(std::move(s));
        }
        r.aggregate();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::kParse, std::string("report json: ") + e.what());
    }
}

std::string report_to_table(const MetricsReport& report) {
    std::vector<std::string> header{"Scene", report.point_display_x10 ? "Point(x10)" : "Point", "Depth"};
    for (double t : report.thetas) header.push_back("AUC@" + format_double(t));
    header.push_back("Corr(px)");

    std::vector<std::vector<std::string>> rows;
    const double point_scale = report.point_display_x10 ? 10.0 : 1.0;
    auto row = [&](const std::string& name, double point, double depth, const std::vector<double>& auc,
                   const std::optional<double>& corr) {
        std::vector<std::string> r{name, format_metric(point * point_scale), format_metric(depth)};
        for (double a : auc) r.push_back(format_metric(a));
        r.push_back(corr ? format_metric(*corr) : "-");
        rows.push_back(std::move(r));
    };
    for (const auto& s : report.scenes) row(s.video_id, s.point_err, s.depth_err, s.auc, s.correspondence_err);
    row("mean", report.mean_point_err, report.mean_depth_err, report.mean_auc, report.mean_correspondence_err);

    std::vector<std::size_t> widths(header.size());
    for (std::size_t c = 0; c < header.size(); ++c) {
        widths[c] = header[c].size();
        for (const auto& r : rows) widths[c] = std::max(widths[c], r[c].size());
    }
    std::ostringstream out;
    out << "backbone: " << report.backbone << "\n";
    auto emit = [&](const std::vector<std::string>& r) {
        for (std::size_t c = 0; c < r.size(); ++c) {
            out << (c + 1 < r.size() ? pad(r[c], widths[c] + 2) : r[c]);
        }
        out << "\n";
    };
    emit(header);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (i + 1 == rows.size()) {
            std::size_t total = 0;
            for (std::size_t c = 0; c < widths.size(); ++c) total += widths[c] + (c + 1 < widths.size() ? 2 : 0);
            out << std::string(total, '-') << "\n";
        }
        emit(rows[i]);
    }
    return out.str();
}

std::string report_to_csv(const MetricsReport& report) {
    std::ostringstream out;
    out << "backbone,scene,point_err,depth_err";
    for (double t : report.thetas) out << ",auc_" << format_double(t);
    out << ",correspondence_err\n";
    auto row = [&](const std::string& name, double point, double depth, const std::vector<double>& auc,
                   const std::optional<double>& corr) {
        out << report.backbone << ',' << name << ',' << format_double(point) << ',' << format_double(depth);
        for (double a : auc) out << ',' << format_double(a);
        out << ',' << (corr ? format_double(*corr) : std::string()) << "\n";
    };
    for (const auto& s : report.scenes) row(s.video_id, s.point_err, s.depth_err, s.auc, s.correspondence_err);
    row("mean", report.mean_point_err, report.mean_depth_err, report.mean_auc, report.mean_correspondence_err);
    return out.str();
}

}  // namespace vidprobe

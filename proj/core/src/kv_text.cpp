// Copyright 2026 The vidprobe Authors
// SPDX-License-Identifier: Apache-2.0

#include "vidprobe/kv_text.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "vidprobe/error.hpp"

namespace vidprobe {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; }

void check_token(std::string_view token, std::string_view what) {
    if (token.empty()) throw Error(ErrorCode::kParse, "empty " + std::string(what));
    for (char c : token) {
        if (is_space(c) || c == '=') {
            throw Error(ErrorCode::kParse,
                        std::string(what) + " contains whitespace or '=': '" + std::string(token) + "'");
        }
    }
}

}  // namespace

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::kIo: return "io";
        case ErrorCode::kBadMagic: return "bad-magic";
        case ErrorCode::kVersionMismatch: return "version-mismatch";
        case ErrorCode::kTruncated: return "truncated";
        case ErrorCode::kUnsupportedDtype: return "unsupported-dtype";
        case ErrorCode::kShape: return "shape";
        case ErrorCode::kParse: return "parse";
        case ErrorCode::kMissingFrame: return "missing-frame";
        case ErrorCode::kInvalidClip: return "invalid-clip";
        case ErrorCode::kInvalidManifest: return "invalid-manifest";
        case ErrorCode::kDegenerate: return "degenerate";
        case ErrorCode::kEmptyScene: return "empty-scene";
        case ErrorCode::kInvariant: return "invariant";
        case ErrorCode::kInsufficientFrames: return "insufficient-frames";
        case ErrorCode::kEmptyLoss: return "empty-loss";
        case ErrorCode::kEmptySplit: return "empty-split";
        case ErrorCode::kMissingBackbone: return "missing-backbone";
        case ErrorCode::kNoOverlap: return "no-overlap";
        case ErrorCode::kEmptyReport: return "empty-report";
        case ErrorCode::kConfig: return "config";
        case ErrorCode::kRetryExhausted: return "retry-exhausted";
    }
    return "unknown";
}

const std::string* KvRecord::find(std::string_view key) const {
    for (const auto& [k, v] : fields) {
        if (k == key) return &v;
    }
    return nullptr;
}

const std::string& KvRecord::at(std::string_view key) const {
    if (const auto* v = find(key)) return *v;
    throw Error(ErrorCode::kParse, "missing key '" + std::string(key) + "' in record '" + kind + "'");
}

long long KvRecord::get_int(std::string_view key) const { return parse_int(at(key)); }

std::uint64_t KvRecord::get_uint(std::string_view key) const { return parse_uint(at(key)); }

double KvRecord::get_double(std::string_view key) const { return parse_double(at(key)); }

KvRecord& KvRecord::set(std::string key, std::string value) {
    for (auto& [k, v] : fields) {
        if (k == key) {
            v = std::move(value);
            return *this;
        }
    }
    fields.emplace_back(std::move(key), std::move(value));
    return *this;
}

KvRecord& KvRecord::set(std::string key, long long value) { return set(std::move(key), std::to_string(value)); }

KvRecord& KvRecord::set(std::string key, std::uint64_t value) { return set(std::move(key), std::to_string(value)); }

KvRecord& KvRecord::set(std::string key, double value) { return set(std::move(key), format_double(value)); }

std::string format_record(const KvRecord& record) {
    std::string out;
    if (!record.kind.empty()) {
        check_token(record.kind, "record kind");
        out += record.kind;
    }
    for (const auto& [k, v] : record.fields) {
        check_token(k, "key");
        check_token(v, "value of '" + k + "'");
        if (!out.empty()) out += ' ';
        out += k;
        out += '=';
        out += v;
    }
    return out;
}

KvRecord parse_record(std::string_view line) {
    KvRecord record;
    std::size_t i = 0;
    bool first = true;
    while (i < line.size()) {
        while (i < line.size() && is_space(line[i])) ++i;
        if (i >= line.size()) break;
        std::size_t j = i;
        while (j < line.size() && !is_space(line[j])) ++j;
        const std::string_view token = line.substr(i, j - i);
        const auto eq = token.find('=');
        if (eq == std::string_view::npos) {
            if (!first) throw Error(ErrorCode::kParse, "token without '=': '" + std::string(token) + "'");
            record.kind = std::string(token);
        } else {
            if (eq == 0 || eq + 1 == token.size()) {
                throw Error(ErrorCode::kParse, "malformed pair: '" + std::string(token) + "'");
            }
            record.fields.emplace_back(std::string(token.substr(0, eq)), std::string(token.substr(eq + 1)));
        }
        first = false;
        i = j;
    }
    return record;
}

std::vector<KvRecord> read_records(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "'");
    std::vector<KvRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::size_t k = 0;
        while (k < line.size() && is_space(line[k])) ++k;
        if (k == line.size() || line[k] == '#') continue;
        try {
            records.push_back(parse_record(line));
        } catch (const Error& e) {
            throw Error(ErrorCode::kParse, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return records;
}

void write_records(const std::filesystem::path& path, const std::vector<KvRecord>& records,
                   std::string_view header_comment) {
    std::ostringstream text;
    if (!header_comment.empty()) text << "# " << header_comment << '\n';
    for (const auto& r : records) text << format_record(r) << '\n';
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write '" + path.string() + "'");
    const std::string s = text.str();
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
    if (!out) throw Error(ErrorCode::kIo, "write failed for '" + path.string() + "'");
}

std::string format_double(double value) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

double parse_double(std::string_view text) {
    double value = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
        throw Error(ErrorCode::kParse, "not a number: '" + std::string(text) + "'");
    }
    return value;
}

long long parse_int(std::string_view text) {
    long long value = 0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
        throw Error(ErrorCode::kParse, "not an integer: '" + std::string(text) + "'");
    }
    return value;
}

std::uint64_t parse_uint(std::string_view text) {
    std::uint64_t value = 0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
        throw Error(ErrorCode::kParse, "not an unsigned integer: '" + std::string(text) + "'");
    }
    return value;
}

}  // namespace vidprobe

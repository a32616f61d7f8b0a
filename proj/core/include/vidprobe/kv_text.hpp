// Copyright 2026 The vidprobe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace vidprobe {

/// One line of the shared text format: an optional leading kind token
/// followed by whitespace-separated key=value pairs. Keys and values may not
/// contain whitespace or '='.
struct KvRecord {
    std::string kind;
    std::vector<std::pair<std::string, std::string>> fields;

    const std::string* find(std::string_view key) const;
    const std::string& at(std::string_view key) const;
    bool has(std::string_view key) const { return find(key) != nullptr; }

    long long get_int(std::string_view key) const;
    std::uint64_t get_uint(std::string_view key) const;
    double get_double(std::string_view key) const;

    KvRecord& set(std::string key, std::string value);
    KvRecord& set(std::string key, long long value);
    KvRecord& set(std::string key, int value) { return set(std::move(key), static_cast<long long>(value)); }
    KvRecord& set(std::string key, std::uint64_t value);
    KvRecord& set(std::string key, double value);
};

std::string format_record(const KvRecord& record);
KvRecord parse_record(std::string_view line);

/// Reads every non-blank, non-comment ('#') line.
std::vector<KvRecord> read_records(const std::filesystem::path& path);
void write_records(const std::filesystem::path& path, const std::vector<KvRecord>& records,
                   std::string_view header_comment = {});

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);
double parse_double(std::string_view text);
long long parse_int(std::string_view text);
std::uint64_t parse_uint(std::string_view text);

}  // namespace vidprobe

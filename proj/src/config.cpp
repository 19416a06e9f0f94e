// Copyright 2026 The siamrank Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "siamrank/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "siamrank/common.hpp"

namespace siamrank {

std::string format_double(double value)
{
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    if (ec != std::errc()) {
        throw UsageError("cannot format number");
    }
    return std::string(buf, end);
}

KeyValues KeyValues::parse(std::string_view text)
{
    KeyValues kv;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') {
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw UsageError("config line " + std::to_string(line_no) + ": expected key=value");
        }
        auto trim = [](std::string s) {
            auto b = s.find_first_not_of(" \t\r");
            auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        kv.values_[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

KeyValues KeyValues::load(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw UsageError("cannot open config " + path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::string KeyValues::str() const
{
    std::string out;
    for (const auto& [k, v] : values_) {
        out += k + "=" + v + "\n";
    }
    return out;
}

void KeyValues::save(const std::filesystem::path& path) const
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw UsageError("cannot write config " + path.string());
    }
    out << str();
}

void KeyValues::merge(const std::map<std::string, std::string>& other)
{
    for (const auto& [k, v] : other) {
        values_[k] = v;
    }
}

std::string KeyValues::get_string(const std::string& key, const std::string& fallback) const
{
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

std::string KeyValues::require(const std::string& key) const
{
    auto it = values_.find(key);
    if (it == values_.end()) {
        throw UsageError("missing config key '" + key + "'");
    }
    return it->second;
}

std::size_t KeyValues::get_size(const std::string& key, std::size_t fallback) const
{
    return static_cast<std::size_t>(get_u64(key, fallback));
}

std::uint64_t KeyValues::get_u64(const std::string& key, std::uint64_t fallback) const
{
    auto it = values_.find(key);
    if (it == values_.end()) {
        return fallback;
    }
    std::uint64_t value = 0;
    const auto& s = it->second;
    auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || end != s.data() + s.size()) {
        throw UsageError("config key '" + key + "': '" + s + "' is not a non-negative integer");
    }
    return value;
}

double KeyValues::get_double(const std::string& key, double fallback) const
{
    auto it = values_.find(key);
    if (it == values_.end()) {
        return fallback;
    }
    const auto& s = it->second;
    double value = 0;
    auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || end != s.data() + s.size()) {
        throw UsageError("config key '" + key + "': '" + s + "' is not a number");
    }
    return value;
}

bool KeyValues::get_bool(const std::string& key, bool fallback) const
{
    auto it = values_.find(key);
    if (it == values_.end()) {
        return fallback;
    }
    if (it->second == "true" || it->second == "1") {
        return true;
    }
    if (it->second == "false" || it->second == "0") {
        return false;
    }
    throw UsageError("config key '" + key + "': expected true/false");
}

}  // namespace siamrank

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

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace siamrank {

/// Shortest decimal that reads back to the same double.
std::string format_double(double value);

/// Flat `key=value` configuration. Lines starting with '#' are comments.
/// Keys are kept sorted so files diff cleanly.
class KeyValues {
  public:
    KeyValues() = default;
    explicit KeyValues(std::map<std::string, std::string> values) : values_(std::move(values)) {}

    static KeyValues load(const std::filesystem::path& path);
    static KeyValues parse(std::string_view text);
    void save(const std::filesystem::path& path) const;
    std::string str() const;

    bool contains(const std::string& key) const { return values_.contains(key); }
    void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
    void merge(const std::map<std::string, std::string>& other);

    std::string get_string(const std::string& key, const std::string& fallback) const;
    std::string require(const std::string& key) const;
    std::size_t get_size(const std::string& key, std::size_t fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    const std::map<std::string, std::string>& values() const { return values_; }

  private:
    std::map<std::string, std::string> values_;
};

}  // namespace siamrank

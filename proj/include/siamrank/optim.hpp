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
#include <filesystem>
#include <string>
#include <vector>

#include "siamrank/tensor.hpp"

namespace siamrank {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First and second moments per parameter, matched by position.
struct AdamState {
    std::vector<std::vector<float>> m;
    std::vector<std::vector<float>> v;
    std::size_t step = 0;

    static AdamState for_params(const ParamSet<float>& params);
};

/// Bias-corrected Adam, constant learning rate. Reads p.grad; does not clear
/// it. Throws NumericError naming the parameter if any gradient is not finite.
void adam_step(ParamSet<float>& params, AdamState& state, double lr, const AdamConfig& cfg = {});

/// Checkpoint layout (little-endian): "SRWT", u16 version, then per tensor
/// u16 name length, name, u8 rank, u32 dims, f32 values.
std::vector<char> serialize_checkpoint(const ParamSet<float>& params);
ParamSet<float> deserialize_checkpoint(const std::vector<char>& bytes);

void save_checkpoint(const ParamSet<float>& params, const std::filesystem::path& path);
ParamSet<float> load_checkpoint(const std::filesystem::path& path);

std::vector<char> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<char>& bytes);

}  // namespace siamrank

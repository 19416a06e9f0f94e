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

#include "siamrank/optim.hpp"

#include <cmath>
#include <fstream>
#include <iterator>

#include "siamrank/binary_io.hpp"

namespace siamrank {

AdamState AdamState::for_params(const ParamSet<float>& params)
{
    AdamState state;
    for (const auto& p : params.all()) {
        state.m.emplace_back(p.value.size(), 0.0F);
        state.v.emplace_back(p.value.size(), 0.0F);
    }
    return state;
}

void adam_step(ParamSet<float>& params, AdamState& state, double lr, const AdamConfig& cfg)
{
    auto& all = params.all();
    if (state.m.size() != all.size()) {
        throw UsageError("Adam state does not match the parameter set");
    }
    for (const auto& p : all) {
        for (float g : p.grad) {
            if (!std::isfinite(g)) {
                throw NumericError("non-finite gradient in '" + p.name + "' at optimizer step " +
                                   std::to_string(state.step + 1));
            }
        }
    }
    ++state.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    const auto b1 = static_cast<float>(cfg.beta1);
    const auto b2 = static_cast<float>(cfg.beta2);
    const auto step_size = static_cast<float>(lr / bc1);
    const auto inv_sqrt_bc2 = static_cast<float>(1.0 / std::sqrt(bc2));
    const auto eps = static_cast<float>(cfg.eps);
    for (std::size_t k = 0; k < all.size(); ++k) {
        auto& p = all[k];
        auto& m = state.m[k];
        auto& v = state.v[k];
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            float g = p.grad[i];
            m[i] = b1 * m[i] + (1.0F - b1) * g;
            v[i] = b2 * v[i] + (1.0F - b2) * g * g;
            if (lr != 0.0) {
                p.value[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_bc2 + eps);
            }
        }
    }
}

namespace {

constexpr std::string_view kMagic = "SRWT";
constexpr std::uint16_t kVersion = 1;

}  // namespace

std::vector<char> serialize_checkpoint(const ParamSet<float>& params)
{
    ByteWriter w;
    w.put_bytes(kMagic);
    w.put<std::uint16_t>(kVersion);
    for (const auto& p : params.all()) {
        if (p.name.size() > 0xFFFF) {
            throw UsageError("parameter name too long: " + p.name);
        }
        w.put<std::uint16_t>(static_cast<std::uint16_t>(p.name.size()));
        w.put_bytes(p.name);
        if (p.shape.rows == 1) {
            w.put<std::uint8_t>(1);
        } else {
            w.put<std::uint8_t>(2);
            w.put<std::uint32_t>(static_cast<std::uint32_t>(p.shape.rows));
        }
        w.put<std::uint32_t>(static_cast<std::uint32_t>(p.shape.cols));
        for (float x : p.value) {
            w.put<float>(x);
        }
    }
    return std::move(w.bytes());
}

ParamSet<float> deserialize_checkpoint(const std::vector<char>& bytes)
{
    ByteReader r(bytes);
    if (r.get_bytes(4) != kMagic) {
        throw DataError("not a weight checkpoint (bad magic)");
    }
    auto version = r.get<std::uint16_t>();
    if (version != kVersion) {
        throw DataError("unsupported checkpoint version " + std::to_string(version));
    }
    ParamSet<float> params;
    while (!r.done()) {
        auto name_len = r.get<std::uint16_t>();
        std::string name = r.get_bytes(name_len);
        auto rank = r.get<std::uint8_t>();
        if (rank == 0 || rank > 2) {
            throw DataError("tensor '" + name + "' has unsupported rank " + std::to_string(rank));
        }
        Shape shape{1, 1};
        if (rank == 1) {
            shape.cols = r.get<std::uint32_t>();
        } else {
            shape.rows = r.get<std::uint32_t>();
            shape.cols = r.get<std::uint32_t>();
        }
        auto& p = params.add(name, shape);
        for (auto& x : p.value) {
            x = r.get<float>();
        }
    }
    return params;
}

std::vector<char> read_file_bytes(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<char>& bytes)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw DataError("write failed: " + path.string());
    }
}

void save_checkpoint(const ParamSet<float>& params, const std::filesystem::path& path)
{
    write_file_bytes(path, serialize_checkpoint(params));
}

ParamSet<float> load_checkpoint(const std::filesystem::path& path)
{
    try {
        return deserialize_checkpoint(read_file_bytes(path));
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

}  // namespace siamrank

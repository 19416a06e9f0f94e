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
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "siamrank/dataset.hpp"
#include "siamrank/interaction.hpp"
#include "siamrank/models.hpp"

namespace siamrank {

enum class StoreDtype : std::uint8_t { Float32 = 0, QuantU8 = 1 };

struct QuantParams {
    float scale = 1.0F;
    std::uint8_t zero_point = 0;
};

/// Affine uint8 parameters for one vector. The calibrated range is
/// [min(v, 0), max(v, 0)] so that zero is exactly representable.
QuantParams quant_params(std::span<const float> v);
std::vector<std::uint8_t> quantize(std::span<const float> v, QuantParams qp);
std::vector<float> dequantize(std::span<const std::uint8_t> codes, QuantParams qp);

/// Document embeddings keyed by exact URL string. Iteration and file order
/// is key order.
class EmbeddingStore {
  public:
    EmbeddingStore() = default;
    explicit EmbeddingStore(std::size_t dim, StoreDtype dtype = StoreDtype::Float32) : dim_(dim), dtype_(dtype) {}

    std::size_t dim() const { return dim_; }
    StoreDtype dtype() const { return dtype_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    bool contains(const std::string& key) const { return entries_.contains(key); }
    std::vector<std::string> keys() const;

    /// Float32 stores only.
    void insert(const std::string& key, std::span<const float> vector);
    /// QuantU8 stores only.
    void insert_quantized(const std::string& key, std::vector<std::uint8_t> codes, QuantParams qp);

    /// Stored vector, dequantized for QuantU8; nullopt for a missing key.
    std::optional<std::vector<float>> lookup(const std::string& key) const;
    std::optional<QuantParams> quant(const std::string& key) const;

    /// "DRSE", u16 version, u8 dtype, u32 dim, u64 count, then per entry
    /// u32 key length, key bytes, payload.
    std::vector<char> serialize() const;
    static EmbeddingStore deserialize(const std::vector<char>& bytes);
    void save(const std::filesystem::path& path) const;
    static EmbeddingStore load(const std::filesystem::path& path);

    bool operator==(const EmbeddingStore&) const = default;

  private:
    struct Entry {
        std::vector<float> values;
        std::vector<std::uint8_t> codes;
        QuantParams qp;
        bool operator==(const Entry& o) const
        {
            return values == o.values && codes == o.codes && qp.scale == o.qp.scale &&
                   qp.zero_point == o.qp.zero_point;
        }
    };
    std::size_t dim_ = 0;
    StoreDtype dtype_ = StoreDtype::Float32;
    std::map<std::string, Entry> entries_;
};

/// One embedding per distinct URL of `docs`. The result does not depend on
/// `parallelism`. Throws DataError naming every URL that appears with two
/// different document representations.
EmbeddingStore precompute(const SiameseModel& model, const DatasetSplit& docs, std::size_t parallelism = 1);

/// Per-vector affine uint8 quantization of a Float32 store.
EmbeddingStore quantize_store(const EmbeddingStore& store);

/// Scores candidates of one query against stored embeddings: one encoder
/// forward for the query plus one interaction evaluation per key. With
/// `quantized`, that path replaces the float interaction module.
std::vector<float> score_candidates(const SiameseModel& model, const EmbeddingStore& store, std::string_view query,
                                    std::span<const std::string> keys,
                                    const QuantizedInteraction* quantized = nullptr);

/// Per-record siamese scores of a split through the store, in record order.
std::vector<float> score_split(const SiameseModel& model, const EmbeddingStore& store, const DatasetSplit& split,
                               const QuantizedInteraction* quantized = nullptr);

}  // namespace siamrank

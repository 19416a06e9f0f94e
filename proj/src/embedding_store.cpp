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

#include "siamrank/embedding_store.hpp"

#include <algorithm>
#include <cmath>

#include "siamrank/binary_io.hpp"
#include "siamrank/optim.hpp"

namespace siamrank {

namespace {

constexpr std::string_view kMagic = "DRSE";
constexpr std::uint16_t kVersion = 1;
constexpr float kMinScale = 1e-8F;

}  // namespace

QuantParams quant_params(std::span<const float> v)
{
    float lo = 0.0F;
    float hi = 0.0F;
    for (float x : v) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    QuantParams qp;
    qp.scale = std::max(kMinScale, static_cast<float>((static_cast<double>(hi) - lo) / 255.0));
    const double zp = std::nearbyint(-static_cast<double>(lo) / qp.scale);
    qp.zero_point = static_cast<std::uint8_t>(std::clamp(zp, 0.0, 255.0));
    return qp;
}

std::vector<std::uint8_t> quantize(std::span<const float> v, QuantParams qp)
{
    std::vector<std::uint8_t> codes(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double q = std::nearbyint(static_cast<double>(v[i]) / qp.scale) + qp.zero_point;
        codes[i] = static_cast<std::uint8_t>(std::clamp(q, 0.0, 255.0));
    }
    return codes;
}

std::vector<float> dequantize(std::span<const std::uint8_t> codes, QuantParams qp)
{
    std::vector<float> v(codes.size());
    for (std::size_t i = 0; i < codes.size(); ++i) {
        v[i] = static_cast<float>((static_cast<int>(codes[i]) - static_cast<int>(qp.zero_point)) * qp.scale);
    }
    return v;
}

std::vector<std::string> EmbeddingStore::keys() const
{
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [k, e] : entries_) {
        out.push_back(k);
    }
    return out;
}

void EmbeddingStore::insert(const std::string& key, std::span<const float> vector)
{
    if (dtype_ != StoreDtype::Float32) {
        throw UsageError("float insert into a quantized store");
    }
    if (vector.size() != dim_) {
        throw DataError("embedding for '" + key + "' has dim " + std::to_string(vector.size()) + ", store dim is " +
                        std::to_string(dim_));
    }
    entries_[key] = Entry{{vector.begin(), vector.end()}, {}, {}};
}

void EmbeddingStore::insert_quantized(const std::string& key, std::vector<std::uint8_t> codes, QuantParams qp)
{
    if (dtype_ != StoreDtype::QuantU8) {
        throw UsageError("quantized insert into a float store");
    }
    if (codes.size() != dim_) {
        throw DataError("codes for '" + key + "' have dim " + std::to_string(codes.size()) + ", store dim is " +
                        std::to_string(dim_));
    }
    entries_[key] = Entry{{}, std::move(codes), qp};
}

std::optional<std::vector<float>> EmbeddingStore::lookup(const std::string& key) const
{
    auto it = entries_.find(key);
    if (it == entries_.end()) {
        return std::nullopt;
    }
    if (dtype_ == StoreDtype::Float32) {
        return it->second.values;
    }
    return dequantize(it->second.codes, it->second.qp);
}

std::optional<QuantParams> EmbeddingStore::quant(const std::string& key) const
{
    auto it = entries_.find(key);
    if (it == entries_.end() || dtype_ != StoreDtype::QuantU8) {
        return std::nullopt;
    }
    return it->second.qp;
}

std::vector<char> EmbeddingStore::serialize() const
{
    ByteWriter w;
    w.put_bytes(kMagic);
    w.put<std::uint16_t>(kVersion);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(dtype_));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(dim_));
    w.put<std::uint64_t>(entries_.size());
    for (const auto& [key, e] : entries_) {
        w.put<std::uint32_t>(static_cast<std::uint32_t>(key.size()));
        w.put_bytes(key);
        if (dtype_ == StoreDtype::Float32) {
            for (float x : e.values) {
                w.put<float>(x);
            }
        } else {
            w.put<float>(e.qp.scale);
            w.put<std::uint8_t>(e.qp.zero_point);
            for (std::uint8_t c : e.codes) {
                w.put<std::uint8_t>(c);
            }
        }
    }
    return std::move(w.bytes());
}

EmbeddingStore EmbeddingStore::deserialize(const std::vector<char>& bytes)
{
    ByteReader r(bytes);
    if (r.get_bytes(4) != kMagic) {
        throw DataError("not an embedding store (bad magic)");
    }
    if (auto v = r.get<std::uint16_t>(); v != kVersion) {
        throw DataError("unsupported embedding store version " + std::to_string(v));
    }
    const auto dtype = r.get<std::uint8_t>();
    if (dtype > 1) {
        throw DataError("unknown embedding store dtype " + std::to_string(dtype));
    }
    EmbeddingStore store(r.get<std::uint32_t>(), static_cast<StoreDtype>(dtype));
    const auto count = r.get<std::uint64_t>();
    for (std::uint64_t i = 0; i < count; ++i) {
        std::string key = r.get_bytes(r.get<std::uint32_t>());
        if (store.dtype_ == StoreDtype::Float32) {
            std::vector<float> v(store.dim_);
            for (auto& x : v) {
                x = r.get<float>();
            }
            store.insert(key, v);
        } else {
            QuantParams qp;
            qp.scale = r.get<float>();
            qp.zero_point = r.get<std::uint8_t>();
            std::vector<std::uint8_t> codes(store.dim_);
            for (auto& c : codes) {
                c = r.get<std::uint8_t>();
            }
            store.insert_quantized(key, std::move(codes), qp);
        }
    }
    if (!r.done()) {
        throw DataError("trailing bytes after embedding store entries");
    }
    if (store.entries_.size() != count) {
        throw DataError("embedding store holds duplicate keys");
    }
    return store;
}

void EmbeddingStore::save(const std::filesystem::path& path) const
{
    write_file_bytes(path, serialize());
}

EmbeddingStore EmbeddingStore::load(const std::filesystem::path& path)
{
    return deserialize(read_file_bytes(path));
}

EmbeddingStore precompute(const SiameseModel& model, const DatasetSplit& docs, std::size_t parallelism)
{
    std::map<std::string, const std::string*> repr;
    std::vector<std::string> offenders;
    for (const auto& r : docs.records()) {
        auto [it, inserted] = repr.emplace(r.url_raw, &r.doc_repr);
        if (!inserted && *it->second != r.doc_repr &&
            std::find(offenders.begin(), offenders.end(), r.url_raw) == offenders.end()) {
            offenders.push_back(r.url_raw);
        }
    }
    if (!offenders.empty()) {
        throw DataError("documents with conflicting representations: " + join(offenders, ", "));
    }
    std::vector<std::pair<const std::string*, const std::string*>> items;
    for (const auto& [key, text] : repr) {
        items.emplace_back(&key, text);
    }
    std::vector<std::vector<float>> vectors(items.size());
    parallel_for(items.size(), parallelism, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            vectors[i] = model.embed(*items[i].second);
        }
    });
    EmbeddingStore store(model.dim());
    for (std::size_t i = 0; i < items.size(); ++i) {
        store.insert(*items[i].first, vectors[i]);
    }
    return store;
}

EmbeddingStore quantize_store(const EmbeddingStore& store)
{
    if (store.dtype() != StoreDtype::Float32) {
        throw UsageError("store is already quantized");
    }
    if (store.empty()) {
        throw UsageError("cannot quantize an empty store");
    }
    EmbeddingStore out(store.dim(), StoreDtype::QuantU8);
    for (const auto& key : store.keys()) {
        auto v = *store.lookup(key);
        QuantParams qp = quant_params(v);
        out.insert_quantized(key, quantize(v, qp), qp);
    }
    return out;
}

std::vector<float> score_candidates(const SiameseModel& model, const EmbeddingStore& store, std::string_view query,
                                    std::span<const std::string> keys, const QuantizedInteraction* quantized)
{
    if (store.dim() != model.dim()) {
        throw DataError("store dim " + std::to_string(store.dim()) + " does not match model dim " +
                        std::to_string(model.dim()));
    }
    const auto eq = model.embed(query);
    std::vector<float> out;
    out.reserve(keys.size());
    for (const auto& key : keys) {
        auto ed = store.lookup(key);
        if (!ed) {
            throw DataError("document '" + key + "' is missing from the embedding store");
        }
        out.push_back(quantized != nullptr ? quantized->score(eq, *ed) : model.score(eq, *ed));
    }
    return out;
}

std::vector<float> score_split(const SiameseModel& model, const EmbeddingStore& store, const DatasetSplit& split,
                               const QuantizedInteraction* quantized)
{
    std::vector<float> out(split.size());
    for (const auto& g : split.groups()) {
        std::vector<std::string> keys;
        for (std::size_t i : g.indices) {
            keys.push_back(split.records()[i].url_raw);
        }
        auto scores = score_candidates(model, store, split.records()[g.indices.front()].query, keys, quantized);
        for (std::size_t k = 0; k < g.indices.size(); ++k) {
            out[g.indices[k]] = scores[k];
        }
    }
    return out;
}

}  // namespace siamrank

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
#include <span>
#include <string>
#include <vector>

#include "siamrank/dataset.hpp"
#include "siamrank/embedding_store.hpp"
#include "siamrank/gbrt.hpp"
#include "siamrank/metrics.hpp"
#include "siamrank/models.hpp"

namespace siamrank {

struct PipelineConfig {
    std::size_t stage1_k = 200;
    std::size_t stage2_k = 10;
    std::size_t workers = 1;

    void validate() const;
};

/// Source of the neural_score feature at Stage-2.
struct NeuralScorer {
    const SiameseModel* model = nullptr;
    const EmbeddingStore* store = nullptr;
    const QuantizedInteraction* quantized = nullptr;
};

/// Records of the group whose doc_repr contains every query word (words as
/// split by pre_tokenize).
std::vector<std::size_t> retrieve(const DatasetSplit& corpus, const QueryGroup& group);

/// Top `k` of `candidates` under the Stage-1 model (lexical features only).
std::vector<std::size_t> stage1_select(const DatasetSplit& corpus, std::span<const std::size_t> candidates,
                                       const FeatureExtractor& features, const GbrtModel& stage1, std::size_t k);

/// Retrieval, Stage-1 and Stage-2 for one query group. Returns an empty
/// list when retrieval finds nothing.
RankedList run_pipeline(const DatasetSplit& corpus, const QueryGroup& group, const FeatureExtractor& features,
                        const PipelineConfig& cfg, const GbrtModel& stage1, const GbrtModel& stage2,
                        const NeuralScorer& neural = {});

struct PipelineResult {
    std::vector<RankedList> lists;
    std::vector<std::string> empty_queries;
    EvalReport report;
};

PipelineResult run_pipeline_split(const DatasetSplit& corpus, const FeatureExtractor& features,
                                  const PipelineConfig& cfg, const GbrtModel& stage1, const GbrtModel& stage2,
                                  const NeuralScorer& neural = {});

/// Retrieval followed by a uniform shuffle, averaged over `runs`.
EvalReport retrieval_random_baseline(const DatasetSplit& corpus, std::size_t runs, std::uint64_t seed);

struct BenchConfig {
    std::vector<std::size_t> dims{32, 64};
    std::size_t layers = 2;
    std::size_t max_len = 128;
    std::size_t warmup = 10;
    std::size_t samples = 50;
    /// Each interaction sample times this many calls.
    std::size_t inner_reps = 200;
    std::uint64_t seed = 1;

    void validate() const;
};

struct LatencyRow {
    std::size_t dim = 0;
    std::string measure;
    double median_us = 0.0;
    double p95_us = 0.0;
};

struct BenchResult {
    std::vector<LatencyRow> rows;

    const LatencyRow& find(std::size_t dim, std::string_view measure) const;
    /// cross_encoder / interaction median latency.
    double cross_over_interaction(std::size_t dim) const;
    /// interaction / interaction_quantized median latency.
    double quantized_speedup(std::size_t dim) const;
};

/// Latency of query embedding, interaction (full and quantized) and a
/// cross-encoder forward with untrained models of each size. Single-threaded.
BenchResult bench(const Vocab& vocab, const BenchConfig& cfg);

/// dim, measure, median_us, p95_us rows followed by the derived ratios.
void write_bench_tsv(const BenchResult& result, const std::filesystem::path& path);

}  // namespace siamrank

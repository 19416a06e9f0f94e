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
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "siamrank/dataset.hpp"

namespace siamrank {

// ---------------------------------------------------------------------------
// Okapi BM25

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

/// Document frequencies and mean length over a candidate corpus.
class CorpusStats {
  public:
    /// Each entry is one document's terms. Throws UsageError when empty.
    static CorpusStats build(std::span<const std::vector<std::string>> docs);

    std::size_t n_docs() const { return n_docs_; }
    double avg_len() const { return avg_len_; }
    std::size_t df(const std::string& term) const;
    /// ln((N - df + 0.5) / (df + 0.5)), floored at 0.
    double idf(const std::string& term) const;

  private:
    std::size_t n_docs_ = 0;
    double avg_len_ = 0.0;
    std::unordered_map<std::string, std::size_t> df_;
};

/// sum over query terms of idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len / avg_len)).
double bm25(std::span<const std::string> query_terms, std::span<const std::string> doc_terms,
            const CorpusStats& stats, const Bm25Params& params = {});

// ---------------------------------------------------------------------------
// Features

inline constexpr std::string_view kNeuralFeature = "neural_score";

/// Lexical feature names in column order; neural_score, when used, is last.
std::vector<std::string> lexical_feature_names();
std::vector<std::string> feature_names(bool with_neural);

/// Row-major feature table with a named schema.
struct FeatureMatrix {
    std::vector<std::string> names;
    std::size_t rows = 0;
    std::vector<double> values;

    std::size_t cols() const { return names.size(); }
    std::span<const double> row(std::size_t i) const { return {values.data() + i * cols(), cols()}; }
    double at(std::size_t i, std::size_t j) const { return values[i * cols() + j]; }
    void append(std::span<const double> row);
    /// Keeps the listed rows, in the given order.
    FeatureMatrix select_rows(std::span<const std::size_t> rows) const;
    /// Drops a column by name.
    FeatureMatrix without(std::string_view name) const;
};

/// Computes the lexical features of records against BM25 statistics of a
/// candidate corpus (distinct URLs of the split it is fitted on).
class FeatureExtractor {
  public:
    static FeatureExtractor fit(const DatasetSplit& corpus, const Bm25Params& params = {});

    std::vector<double> lexical(const RelevanceRecord& record) const;
    /// Features of every record; neural scores, when given, are appended.
    FeatureMatrix extract(const DatasetSplit& split, std::span<const float> neural = {}) const;

  private:
    CorpusStats body_;
    CorpusStats title_;
    Bm25Params params_;
};

/// Deterministic stand-in for a link-graph prior, uniform in [0, 1).
double static_doc_score(std::string_view url);

// ---------------------------------------------------------------------------
// Gradient-boosted regression trees

struct GbrtConfig {
    std::size_t n_trees = 200;
    std::size_t depth = 6;
    double shrinkage = 0.1;
    std::size_t early_stop_rounds = 100;
    std::size_t min_leaf = 1;
    std::uint64_t seed = 0;
    std::size_t workers = 1;

    void validate() const;
};

struct TreeNode {
    /// -1 for leaves.
    std::int32_t feature = -1;
    double threshold = 0.0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    double value = 0.0;
};

/// Node 0 is the root. Samples with x[feature] <= threshold go left.
struct RegressionTree {
    std::vector<TreeNode> nodes;

    double predict(std::span<const double> x) const;
    std::size_t depth() const;
};

class GbrtModel {
  public:
    GbrtModel() = default;
    GbrtModel(std::vector<std::string> schema, double base, double shrinkage)
        : schema_(std::move(schema)), base_(base), shrinkage_(shrinkage)
    {
    }

    const std::vector<std::string>& schema() const { return schema_; }
    double base() const { return base_; }
    double shrinkage() const { return shrinkage_; }
    const std::vector<RegressionTree>& trees() const { return trees_; }
    std::vector<RegressionTree>& trees() { return trees_; }
    bool uses(std::string_view feature) const;

    /// base + shrinkage * sum of leaf values.
    double predict(std::span<const double> x) const;
    /// Throws DataError unless the matrix schema equals the model schema.
    std::vector<double> predict(const FeatureMatrix& features) const;

    /// Text format: header lines then one line per node
    /// "tree node feature threshold left right value".
    void save(const std::filesystem::path& path) const;
    static GbrtModel load(const std::filesystem::path& path);
    std::string str() const;
    static GbrtModel parse(std::string_view text);

  private:
    std::vector<std::string> schema_;
    double base_ = 0.0;
    double shrinkage_ = 0.1;
    std::vector<RegressionTree> trees_;
};

struct GbrtTrainLog {
    /// Entry t is the RMSE after t trees (entry 0: base only).
    std::vector<double> train_rmse;
    std::vector<double> dev_rmse;
    std::size_t best_iteration = 0;
};

/// Least-squares boosting with exact greedy splits. Stops when Dev RMSE has
/// not improved for early_stop_rounds trees, when a round no longer lowers
/// the training RMSE, or when the root cannot be split; keeps the best-Dev
/// prefix of trees.
GbrtModel train_gbrt(const FeatureMatrix& train, std::span<const double> labels, const FeatureMatrix& dev,
                     std::span<const double> dev_labels, const GbrtConfig& cfg, GbrtTrainLog* log = nullptr);

double rmse(std::span<const double> predictions, std::span<const double> labels);

std::vector<double> labels_of(const DatasetSplit& split);

}  // namespace siamrank

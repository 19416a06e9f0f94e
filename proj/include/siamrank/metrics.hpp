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
#include <span>
#include <string>
#include <vector>

#include "siamrank/dataset.hpp"

namespace siamrank {

struct RankedItem {
    std::string doc_key;
    double score = 0.0;
    double label = 0.0;
};

/// Scores non-increasing; ties in doc_key order.
struct RankedList {
    std::string query_id;
    std::vector<RankedItem> items;
};

/// Useful = label strictly above this.
inline constexpr double kUsefulThreshold = 0.5;

/// Fraction (not percent) of useful documents among the first 10; the
/// denominator stays 10 for shorter lists.
double p_at_10(const RankedList& list);

enum class DcgGain { Linear, Exponential };

/// sum over the first `cutoff` positions of gain(label) / log2(i + 1).
double dcg(const RankedList& list, std::size_t cutoff = 10, DcgGain gain = DcgGain::Linear);

/// Sorts by score descending, then doc key ascending.
RankedList rank_by_score(std::string query_id, std::vector<RankedItem> items);

/// Sorts by label descending; equal labels keep their input order.
RankedList oracle_rank(std::string query_id, std::vector<RankedItem> items);

struct QueryMetrics {
    std::string query_id;
    double p_at_10 = 0.0;  // percent
    double dcg = 0.0;
};

struct EvalReport {
    double p_at_10 = 0.0;  // percent, mean over scored queries
    double dcg = 0.0;
    std::size_t n_queries = 0;
    /// Queries with nothing to rank; excluded from the means.
    std::size_t n_empty = 0;
    std::vector<QueryMetrics> per_query;
};

EvalReport evaluate(std::span<const RankedList> lists, DcgGain gain = DcgGain::Linear);

/// One list per query group; item i of a group takes scores[record index].
std::vector<RankedList> rank_split(const DatasetSplit& split, std::span<const float> scores);
std::vector<RankedList> oracle_split(const DatasetSplit& split);

/// Mean over `runs` uniform shuffles of every query's candidates.
EvalReport random_baseline(const DatasetSplit& split, std::size_t runs = 100, std::uint64_t seed = 0,
                           DcgGain gain = DcgGain::Linear);

/// P@10 percent of a split scored record-wise.
double split_p_at_10(const DatasetSplit& split, std::span<const float> scores);

/// metric<TAB>value lines.
void write_report_tsv(const EvalReport& report, const std::filesystem::path& path);
/// query_id<TAB>p_at_10<TAB>dcg lines.
void write_per_query_tsv(const EvalReport& report, const std::filesystem::path& path);

}  // namespace siamrank

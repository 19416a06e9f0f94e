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
#include <string>
#include <string_view>
#include <vector>

namespace siamrank {

enum class SplitKind { TrainBig, TrainSmall, Dev, Test };

constexpr bool is_training(SplitKind kind)
{
    return kind == SplitKind::TrainBig || kind == SplitKind::TrainSmall;
}

std::string_view to_string(SplitKind kind);
SplitKind parse_split_kind(std::string_view name);

enum class Annotation { Useful, LittleUseful, AlmostNotUseful, NotUseful };

struct RelevanceRecord {
    std::string query_id;
    std::string query;
    std::string url_raw;
    std::string title;
    std::string bte;
    std::string doc_repr;
    double label = 0.0;
    SplitKind split = SplitKind::Test;

    bool operator==(const RelevanceRecord&) const = default;
};

struct QueryGroup {
    std::string query_id;
    std::vector<std::size_t> indices;
};

/// Records of one split plus their per-query grouping, in first-appearance
/// order. Immutable once built.
class DatasetSplit {
  public:
    DatasetSplit() = default;

    /// Validates invariants (non-empty queries, label range, unique
    /// (query, url) pairs) and builds the grouping.
    static DatasetSplit from_records(SplitKind kind, std::vector<RelevanceRecord> records);

    SplitKind kind() const { return kind_; }
    const std::vector<RelevanceRecord>& records() const { return records_; }
    const std::vector<QueryGroup>& groups() const { return groups_; }
    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }

    /// Rows removed by the empty-document rule while loading.
    std::size_t dropped_empty() const { return dropped_empty_; }
    void set_dropped_empty(std::size_t n) { dropped_empty_ = n; }

    /// Keeps the listed query groups (by position in groups()).
    DatasetSplit subset_groups(const std::vector<std::size_t>& group_positions) const;

  private:
    SplitKind kind_ = SplitKind::Test;
    std::vector<RelevanceRecord> records_;
    std::vector<QueryGroup> groups_;
    std::size_t dropped_empty_ = 0;
};

/// Which document parts enter the assembled representation.
struct PartMask {
    bool title = true;
    bool url = true;
    bool bte = true;

    static constexpr PartMask all() { return {}; }
    static PartMask parse(std::string_view spec);  // e.g. "title,url"
    bool operator==(const PartMask&) const = default;
};

double map_label(Annotation annotation, SplitKind split);

/// Percent-decode, '+' to space, strip scheme and "www.", turn [-_\t] into
/// spaces, lowercase.
std::string preprocess_url(std::string_view url_raw);

/// "title: <title> url: <url> bte: <bte>", masked segments omitted.
std::string assemble_doc_repr(std::string_view title, std::string_view url_processed,
                              std::string_view bte, PartMask mask = PartMask::all());

/// Loads a TSV with header `id query url doc title label`. The id column is
/// the query id; doc is the body text extract.
DatasetSplit load_tsv(const std::filesystem::path& path, SplitKind kind,
                      PartMask mask = PartMask::all());

void save_tsv(const DatasetSplit& split, const std::filesystem::path& path);

/// Rebuilds doc_repr of every record under a different part mask.
DatasetSplit with_mask(const DatasetSplit& split, PartMask mask);

struct SynthConfig {
    std::size_t vocab_size = 400;
    std::size_t n_queries = 200;
    std::size_t docs_per_query = 20;
    double relevant_fraction = 0.3;
    double noise = 0.0;
    std::uint64_t seed = 1;
    /// Body text length is drawn from [body_words, 2 * body_words).
    std::size_t body_words = 12;

    void validate() const;
};

struct SyntheticData {
    DatasetSplit train_big;
    DatasetSplit train_small;
    DatasetSplit dev;
    DatasetSplit test;
};

/// Planted-signal generator. Queries are 1-5 concepts from one topic; each
/// concept has two surface forms. Labels grade the fraction of query
/// concepts present in title or body.
SyntheticData generate_synthetic(const SynthConfig& cfg);

}  // namespace siamrank

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

#include "siamrank/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "siamrank/common.hpp"
#include "siamrank/config.hpp"

namespace siamrank {

double p_at_10(const RankedList& list)
{
    if (list.items.empty()) {
        throw UsageError("p_at_10 of an empty ranked list (query " + list.query_id + ")");
    }
    std::size_t useful = 0;
    std::size_t n = std::min<std::size_t>(10, list.items.size());
    for (std::size_t i = 0; i < n; ++i) {
        useful += list.items[i].label > kUsefulThreshold ? 1 : 0;
    }
    return static_cast<double>(useful) / 10.0;
}

double dcg(const RankedList& list, std::size_t cutoff, DcgGain gain)
{
    if (list.items.empty()) {
        throw UsageError("dcg of an empty ranked list (query " + list.query_id + ")");
    }
    double total = 0.0;
    std::size_t n = std::min(cutoff, list.items.size());
    for (std::size_t i = 0; i < n; ++i) {
        double l = list.items[i].label;
        double g = gain == DcgGain::Linear ? l : std::exp2(l) - 1.0;
        total += g / std::log2(static_cast<double>(i) + 2.0);
    }
    return total;
}

RankedList rank_by_score(std::string query_id, std::vector<RankedItem> items)
{
    std::sort(items.begin(), items.end(), [](const RankedItem& a, const RankedItem& b) {
        if (a.score != b.score) {
            return a.score > b.score;
        }
        return a.doc_key < b.doc_key;
    });
    return {std::move(query_id), std::move(items)};
}

RankedList oracle_rank(std::string query_id, std::vector<RankedItem> items)
{
    std::stable_sort(items.begin(), items.end(),
                     [](const RankedItem& a, const RankedItem& b) { return a.label > b.label; });
    for (std::size_t i = 0; i < items.size(); ++i) {
        items[i].score = static_cast<double>(items.size() - i);
    }
    return {std::move(query_id), std::move(items)};
}

EvalReport evaluate(std::span<const RankedList> lists, DcgGain gain)
{
    EvalReport report;
    double p_sum = 0.0;
    double dcg_sum = 0.0;
    for (const auto& list : lists) {
        if (list.items.empty()) {
            ++report.n_empty;
            continue;
        }
        QueryMetrics m{list.query_id, 100.0 * p_at_10(list), dcg(list, 10, gain)};
        p_sum += m.p_at_10;
        dcg_sum += m.dcg;
        report.per_query.push_back(std::move(m));
    }
    report.n_queries = report.per_query.size();
    if (report.n_queries > 0) {
        report.p_at_10 = p_sum / static_cast<double>(report.n_queries);
        report.dcg = dcg_sum / static_cast<double>(report.n_queries);
    }
    return report;
}

namespace {

std::vector<RankedItem> group_items(const DatasetSplit& split, const QueryGroup& g, std::span<const float> scores)
{
    std::vector<RankedItem> items;
    items.reserve(g.indices.size());
    for (std::size_t idx : g.indices) {
        const auto& r = split.records()[idx];
        items.push_back({r.url_raw, scores.empty() ? 0.0 : static_cast<double>(scores[idx]), r.label});
    }
    return items;
}

}  // namespace

std::vector<RankedList> rank_split(const DatasetSplit& split, std::span<const float> scores)
{
    if (scores.size() != split.size()) {
        throw UsageError("rank_split: " + std::to_string(scores.size()) + " scores for " +
                         std::to_string(split.size()) + " records");
    }
    std::vector<RankedList> lists;
    for (const auto& g : split.groups()) {
        lists.push_back(rank_by_score(g.query_id, group_items(split, g, scores)));
    }
    return lists;
}

std::vector<RankedList> oracle_split(const DatasetSplit& split)
{
    std::vector<RankedList> lists;
    for (const auto& g : split.groups()) {
        lists.push_back(oracle_rank(g.query_id, group_items(split, g, {})));
    }
    return lists;
}

EvalReport random_baseline(const DatasetSplit& split, std::size_t runs, std::uint64_t seed, DcgGain gain)
{
    if (runs == 0) {
        throw UsageError("random_baseline needs at least one run");
    }
    Rng rng(seed);
    EvalReport mean;
    for (std::size_t run = 0; run < runs; ++run) {
        std::vector<RankedList> lists;
        for (const auto& g : split.groups()) {
            auto items = group_items(split, g, {});
            rng.shuffle(items);
            lists.push_back({g.query_id, std::move(items)});
        }
        EvalReport r = evaluate(lists, gain);
        if (run == 0) {
            mean = r;
            continue;
        }
        mean.p_at_10 += r.p_at_10;
        mean.dcg += r.dcg;
        for (std::size_t i = 0; i < r.per_query.size(); ++i) {
            mean.per_query[i].p_at_10 += r.per_query[i].p_at_10;
            mean.per_query[i].dcg += r.per_query[i].dcg;
        }
    }
    const double inv = 1.0 / static_cast<double>(runs);
    mean.p_at_10 *= inv;
    mean.dcg *= inv;
    for (auto& q : mean.per_query) {
        q.p_at_10 *= inv;
        q.dcg *= inv;
    }
    return mean;
}

double split_p_at_10(const DatasetSplit& split, std::span<const float> scores)
{
    auto lists = rank_split(split, scores);
    return evaluate(lists).p_at_10;
}

void write_report_tsv(const EvalReport& report, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    out << "metric\tvalue\n";
    out << "p_at_10\t" << format_double(report.p_at_10) << "\n";
    out << "dcg\t" << format_double(report.dcg) << "\n";
    out << "n_queries\t" << report.n_queries << "\n";
    out << "n_empty\t" << report.n_empty << "\n";
}

void write_per_query_tsv(const EvalReport& report, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    out << "query_id\tp_at_10\tdcg\n";
    for (const auto& q : report.per_query) {
        out << q.query_id << "\t" << format_double(q.p_at_10) << "\t" << format_double(q.dcg) << "\n";
    }
}

}  // namespace siamrank

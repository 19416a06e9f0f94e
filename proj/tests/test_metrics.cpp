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

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "metric_cases.hpp"
#include "siamrank/common.hpp"
#include "siamrank/metrics.hpp"

using namespace siamrank;
using namespace siamrank::testing;

namespace {

// Hand-computed DCG values carry four decimals.
constexpr double kMetricTolerance = 1e-4;

}  // namespace

TEST(Metrics, HandComputedFixture)
{
    for (const auto& c : kMetricCases) {
        auto l = list_of(c.labels);
        EXPECT_EQ(p_at_10(l), c.p_at_10) << c.name;
        EXPECT_NEAR(dcg(l, c.cutoff, c.gain), c.dcg, kMetricTolerance) << c.name;
    }
}

TEST(Metrics, EmptyListHasNoPrecision)
{
    EXPECT_THROW(p_at_10(list_of({})), UsageError);
}

TEST(Metrics, RankByScoreBreaksTiesByKey)
{
    auto l = rank_by_score("q", {{"b", 1.0, 0}, {"a", 1.0, 1}, {"c", 2.0, 0}, {"d", 0.5, 1}});
    std::vector<std::string> keys;
    for (const auto& it : l.items) {
        keys.push_back(it.doc_key);
    }
    EXPECT_EQ(keys, (std::vector<std::string>{"c", "a", "b", "d"}));
}

TEST(Metrics, OracleRankIsStable)
{
    auto l = oracle_rank("q", {{"z", 0, 0.5}, {"y", 0, 1.0}, {"x", 0, 0.5}, {"w", 0, 0.0}});
    std::vector<std::string> keys;
    for (const auto& it : l.items) {
        keys.push_back(it.doc_key);
    }
    EXPECT_EQ(keys, (std::vector<std::string>{"y", "z", "x", "w"}));
}

TEST(Metrics, OracleMaximizesDcg)
{
    std::vector<RankedItem> items;
    Rng rng(4);
    for (int i = 0; i < 30; ++i) {
        items.push_back({"d" + std::to_string(i), rng.normal(), double(rng.uniform(5)) / 4});
    }
    const double best = dcg(oracle_rank("q", items));
    EXPECT_GE(best + 1e-12, dcg(rank_by_score("q", items)));
}

TEST(Metrics, EvaluateSkipsEmptyLists)
{
    std::vector<RankedList> lists = {list_of({1, 1}), list_of({}), list_of({0, 0})};
    lists[1].query_id = "empty";
    auto r = evaluate(lists);
    EXPECT_EQ(r.n_queries, 2U);
    EXPECT_EQ(r.n_empty, 1U);
    EXPECT_NEAR(r.p_at_10, 10.0, kMetricTolerance);
    EXPECT_NEAR(r.dcg, 1.6309 / 2, kMetricTolerance);
}

TEST(Metrics, RandomBaselineMatchesExpectation)
{
    // 50 candidates with 15 useful: expected P@10 is 30 percent.
    std::vector<RelevanceRecord> recs;
    for (int q = 0; q < 20; ++q) {
        for (int d = 0; d < 50; ++d) {
            RelevanceRecord r;
            r.query_id = "q" + std::to_string(q);
            r.query = "query " + std::to_string(q);
            r.url_raw = "http://d" + std::to_string(d) + ".cz";
            r.doc_repr = "doc";
            r.label = d < 15 ? 1.0 : 0.0;
            recs.push_back(r);
        }
    }
    auto split = DatasetSplit::from_records(SplitKind::Test, recs);
    EXPECT_NEAR(random_baseline(split, 100, 1).p_at_10, 30.0, 1.0);
    EXPECT_NEAR(evaluate(oracle_split(split)).p_at_10, 100.0, kMetricTolerance);
    EXPECT_EQ(random_baseline(split, 10, 7).p_at_10, random_baseline(split, 10, 7).p_at_10);
}

TEST(Metrics, SplitScoresFollowRecords)
{
    std::vector<RelevanceRecord> recs;
    for (int d = 0; d < 12; ++d) {
        RelevanceRecord r;
        r.query_id = "q";
        r.query = "query";
        r.url_raw = "u" + std::to_string(d);
        r.doc_repr = "doc";
        r.label = d % 2 == 0 ? 1.0 : 0.0;
        recs.push_back(r);
    }
    auto split = DatasetSplit::from_records(SplitKind::Test, recs);
    std::vector<float> good(12), bad(12);
    for (int d = 0; d < 12; ++d) {
        good[d] = d % 2 == 0 ? 1.0F : 0.0F;
        bad[d] = 1.0F - good[d];
    }
    EXPECT_NEAR(split_p_at_10(split, good), 60.0, kMetricTolerance);
    EXPECT_NEAR(split_p_at_10(split, bad), 40.0, kMetricTolerance);
}

TEST(Metrics, ReportFiles)
{
    auto r = evaluate(std::vector<RankedList>{list_of({1, 0})});
    auto path = std::filesystem::temp_directory_path() / "siamrank_report.tsv";
    write_report_tsv(r, path);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "metric\tvalue");
    std::getline(in, line);
    EXPECT_EQ(line.substr(0, 7), "p_at_10");
    std::filesystem::remove(path);
}

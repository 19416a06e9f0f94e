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

#include "siamrank/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <unordered_set>

#include "siamrank/tokenizer.hpp"

namespace siamrank {

void PipelineConfig::validate() const
{
    if (stage2_k == 0) {
        throw UsageError("stage2_k must be positive");
    }
    if (stage2_k > stage1_k) {
        throw UsageError("stage2_k (" + std::to_string(stage2_k) + ") exceeds stage1_k (" +
                         std::to_string(stage1_k) + ")");
    }
}

std::vector<std::size_t> retrieve(const DatasetSplit& corpus, const QueryGroup& group)
{
    std::vector<std::size_t> out;
    if (group.indices.empty()) {
        return out;
    }
    const auto query_words = pre_tokenize(corpus.records()[group.indices.front()].query);
    for (std::size_t i : group.indices) {
        const auto words = pre_tokenize(corpus.records()[i].doc_repr);
        std::unordered_set<std::string> have(words.begin(), words.end());
        if (std::all_of(query_words.begin(), query_words.end(), [&](const auto& w) { return have.contains(w); })) {
            out.push_back(i);
        }
    }
    return out;
}

namespace {

FeatureMatrix lexical_rows(const DatasetSplit& corpus, std::span<const std::size_t> rows,
                           const FeatureExtractor& features)
{
    FeatureMatrix m;
    m.names = lexical_feature_names();
    for (std::size_t i : rows) {
        m.append(features.lexical(corpus.records()[i]));
    }
    return m;
}

std::vector<RankedItem> ranked_items(const DatasetSplit& corpus, std::span<const std::size_t> rows,
                                     std::span<const double> scores)
{
    std::vector<RankedItem> items;
    items.reserve(rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto& r = corpus.records()[rows[k]];
        items.push_back({r.url_raw, scores[k], r.label});
    }
    return items;
}

}  // namespace

std::vector<std::size_t> stage1_select(const DatasetSplit& corpus, std::span<const std::size_t> candidates,
                                       const FeatureExtractor& features, const GbrtModel& stage1, std::size_t k)
{
    if (stage1.uses(kNeuralFeature)) {
        throw UsageError("the Stage-1 model must not use " + std::string(kNeuralFeature));
    }
    if (candidates.size() <= k) {
        return {candidates.begin(), candidates.end()};
    }
    const auto scores = stage1.predict(lexical_rows(corpus, candidates, features));
    std::vector<std::size_t> order(candidates.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) {
            return scores[a] > scores[b];
        }
        return corpus.records()[candidates[a]].url_raw < corpus.records()[candidates[b]].url_raw;
    });
    std::vector<std::size_t> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        out.push_back(candidates[order[i]]);
    }
    return out;
}

RankedList run_pipeline(const DatasetSplit& corpus, const QueryGroup& group, const FeatureExtractor& features,
                        const PipelineConfig& cfg, const GbrtModel& stage1, const GbrtModel& stage2,
                        const NeuralScorer& neural)
{
    const auto retrieved = retrieve(corpus, group);
    if (retrieved.empty()) {
        return {group.query_id, {}};
    }
    const auto kept = stage1_select(corpus, retrieved, features, stage1, cfg.stage1_k);

    FeatureMatrix m = lexical_rows(corpus, kept, features);
    if (stage2.uses(kNeuralFeature)) {
        if (neural.model == nullptr || neural.store == nullptr) {
            throw UsageError("Stage-2 model uses " + std::string(kNeuralFeature) +
                             " but no embedding store was given (precompute required)");
        }
        std::vector<std::string> keys;
        for (std::size_t i : kept) {
            keys.push_back(corpus.records()[i].url_raw);
        }
        const auto nn = score_candidates(*neural.model, *neural.store, corpus.records()[kept.front()].query, keys,
                                         neural.quantized);
        FeatureMatrix full;
        full.names = feature_names(true);
        for (std::size_t k = 0; k < kept.size(); ++k) {
            auto row = m.row(k);
            std::vector<double> v(row.begin(), row.end());
            v.push_back(nn[k]);
            full.append(v);
        }
        m = std::move(full);
    }
    const auto scores = stage2.predict(m);
    RankedList list = rank_by_score(group.query_id, ranked_items(corpus, kept, scores));
    if (list.items.size() > cfg.stage2_k) {
        list.items.resize(cfg.stage2_k);
    }
    return list;
}

PipelineResult run_pipeline_split(const DatasetSplit& corpus, const FeatureExtractor& features,
                                  const PipelineConfig& cfg, const GbrtModel& stage1, const GbrtModel& stage2,
                                  const NeuralScorer& neural)
{
    cfg.validate();
    PipelineResult result;
    result.lists.resize(corpus.groups().size());
    parallel_for(corpus.groups().size(), cfg.workers, [&](std::size_t begin, std::size_t end) {
        for (std::size_t g = begin; g < end; ++g) {
            result.lists[g] = run_pipeline(corpus, corpus.groups()[g], features, cfg, stage1, stage2, neural);
        }
    });
    for (const auto& l : result.lists) {
        if (l.items.empty()) {
            result.empty_queries.push_back(l.query_id);
        }
    }
    result.report = evaluate(result.lists);
    return result;
}

EvalReport retrieval_random_baseline(const DatasetSplit& corpus, std::size_t runs, std::uint64_t seed)
{
    if (runs == 0) {
        throw UsageError("retrieval_random_baseline needs at least one run");
    }
    std::vector<std::vector<RankedItem>> pools;
    std::vector<std::string> ids;
    for (const auto& g : corpus.groups()) {
        const auto rows = retrieve(corpus, g);
        std::vector<double> zeros(rows.size(), 0.0);
        pools.push_back(ranked_items(corpus, rows, zeros));
        ids.push_back(g.query_id);
    }
    Rng rng(seed);
    EvalReport mean;
    for (std::size_t run = 0; run < runs; ++run) {
        std::vector<RankedList> lists;
        for (std::size_t q = 0; q < pools.size(); ++q) {
            auto items = pools[q];
            rng.shuffle(items);
            lists.push_back({ids[q], std::move(items)});
        }
        EvalReport r = evaluate(lists);
        if (run == 0) {
            mean = r;
            mean.per_query.clear();
            continue;
        }
        mean.p_at_10 += r.p_at_10;
        mean.dcg += r.dcg;
    }
    mean.p_at_10 /= static_cast<double>(runs);
    mean.dcg /= static_cast<double>(runs);
    return mean;
}

void BenchConfig::validate() const
{
    if (dims.empty() || samples == 0 || inner_reps == 0) {
        throw UsageError("bench needs at least one dim, sample and repetition");
    }
}

const LatencyRow& BenchResult::find(std::size_t dim, std::string_view measure) const
{
    for (const auto& r : rows) {
        if (r.dim == dim && r.measure == measure) {
            return r;
        }
    }
    throw UsageError("no bench row for dim " + std::to_string(dim) + " measure " + std::string(measure));
}

double BenchResult::cross_over_interaction(std::size_t dim) const
{
    return find(dim, "cross_encoder").median_us / find(dim, "interaction").median_us;
}

double BenchResult::quantized_speedup(std::size_t dim) const
{
    return find(dim, "interaction").median_us / find(dim, "interaction_quantized").median_us;
}

namespace {

template <typename F>
LatencyRow time_it(std::size_t dim, std::string measure, const BenchConfig& cfg, std::size_t reps, F&& f)
{
    using Clock = std::chrono::steady_clock;
    for (std::size_t i = 0; i < cfg.warmup; ++i) {
        f();
    }
    std::vector<double> us;
    us.reserve(cfg.samples);
    for (std::size_t s = 0; s < cfg.samples; ++s) {
        auto t0 = Clock::now();
        for (std::size_t r = 0; r < reps; ++r) {
            f();
        }
        us.push_back(std::chrono::duration<double, std::micro>(Clock::now() - t0).count() /
                     static_cast<double>(reps));
    }
    std::sort(us.begin(), us.end());
    auto at = [&](double q) { return us[std::min(us.size() - 1, static_cast<std::size_t>(q * us.size()))]; };
    return {dim, std::move(measure), at(0.5), at(0.95)};
}

std::string bench_text(Rng& rng, std::size_t words)
{
    std::string s;
    for (std::size_t i = 0; i < words; ++i) {
        if (i > 0) {
            s += ' ';
        }
        s += "w" + std::to_string(rng.uniform(500));
    }
    return s;
}

}  // namespace

BenchResult bench(const Vocab& vocab, const BenchConfig& cfg)
{
    cfg.validate();
    BenchResult result;
    Rng rng(cfg.seed);
    const std::string query = bench_text(rng, 4);
    const std::string doc = bench_text(rng, 60);
    volatile float sink = 0.0F;
    for (std::size_t dim : cfg.dims) {
        EncoderConfig ec;
        ec.layers = cfg.layers;
        ec.hidden = dim;
        ec.heads = dim >= 64 ? 2 : 1;
        ec.ff_dim = 4 * dim;
        ec.max_pos = cfg.max_len;
        SiameseModel::Options opt;
        opt.variant = InteractionVariant::Final;
        opt.max_len = cfg.max_len;
        auto siamese = SiameseModel::create(ec, vocab, opt, cfg.seed, cfg.seed);
        auto cross = QueryDocModel::create(ec, vocab, cfg.seed, cfg.max_len);
        const auto eq = siamese.embed(query);
        const auto ed = siamese.embed(doc);
        const InteractionScorer full = siamese.scorer();
        const QuantizedInteraction quant(full);

        result.rows.push_back(time_it(dim, "query_embed", cfg, 1, [&] { sink = siamese.embed(query)[0]; }));
        result.rows.push_back(
            time_it(dim, "interaction", cfg, cfg.inner_reps, [&] { sink = sink + full.score(eq, ed); }));
        result.rows.push_back(
            time_it(dim, "interaction_quantized", cfg, cfg.inner_reps, [&] { sink = sink + quant.score(eq, ed); }));
        result.rows.push_back(time_it(dim, "cross_encoder", cfg, 1, [&] { sink = cross.predict(query, doc); }));
    }
    return result;
}

void write_bench_tsv(const BenchResult& result, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    out << "dim\tmeasure\tmedian_us\tp95_us\n";
    std::vector<std::size_t> dims;
    for (const auto& r : result.rows) {
        out << r.dim << '\t' << r.measure << '\t' << r.median_us << '\t' << r.p95_us << '\n';
        if (std::find(dims.begin(), dims.end(), r.dim) == dims.end()) {
            dims.push_back(r.dim);
        }
    }
    for (std::size_t d : dims) {
        out << d << "\tratio_cross_over_interaction\t" << result.cross_over_interaction(d) << "\t\n";
        out << d << "\tratio_quantized_speedup\t" << result.quantized_speedup(d) << "\t\n";
    }
}

}  // namespace siamrank

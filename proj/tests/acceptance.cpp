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

// Acceptance harness: one PASS/FAIL line per criterion.
//
//   acceptance [--report-only] [--dataset DIR]
//
// Exit status is the number of failed criteria unless --report-only is given.
// The optional dataset directory (or SIAMRANK_DATASET_DIR) must hold the
// public relevance TSVs; without it criterion 10 is reported as SKIP.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "grad_check.hpp"
#include "interaction_oracle.hpp"
#include "metric_cases.hpp"
#include "model_grad.hpp"
#include "siamrank/ablation.hpp"
#include "siamrank/embedding_store.hpp"
#include "siamrank/pipeline.hpp"

using namespace siamrank;
using namespace siamrank::testing;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and budgets.
constexpr std::size_t kGradSeeds = 100;
constexpr double kGradSeconds = 120.0;
constexpr double kOracleTolerance = 1e-6;
constexpr std::size_t kOracleInputs = 1000;
constexpr double kDcgTolerance = 1e-4;
constexpr double kLearnMargin = 10.0;
constexpr double kRecoverFraction = 0.6;
constexpr double kLearnCoreMinutes = 40.0;  // 10 min on 4 cores
constexpr std::size_t kSeeds = 4;
constexpr double kDistillSlack = 0.5;
constexpr double kInteractionRatio = 100.0;
constexpr double kQuantSpeedup = 1.3;
constexpr double kQuantDelta = 0.5;
constexpr double kBenchSeconds = 300.0;
constexpr std::size_t kRandomRuns = 100;

struct Verdict {
    enum class State { Pass, Fail, Skip } state = State::Fail;
    std::string detail;
};

class Clock {
  public:
    double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count(); }

  private:
    std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

void progress(const std::string& msg)
{
    std::fprintf(stderr, "[acceptance] %s\n", msg.c_str());
}

Verdict verdict(bool ok, std::string detail)
{
    return {ok ? Verdict::State::Pass : Verdict::State::Fail, std::move(detail)};
}

std::string join_values(const std::vector<double>& v)
{
    std::string out;
    for (double x : v) {
        out += (out.empty() ? "" : ",") + fmt("%.2f", x);
    }
    return out;
}

double mean_of(const std::vector<double>& v)
{
    return mean_std(v).mean;
}

// ---------------------------------------------------------------------------

Verdict gradients()
{
    Clock clock;
    double worst_op = 0.0;
    std::string worst_name;
    const auto cases = op_cases();
    for (const auto& c : cases) {
        for (std::uint64_t seed = 1; seed <= kGradSeeds; ++seed) {
            const double e = check_case(c, seed);
            if (e > worst_op) {
                worst_op = e;
                worst_name = c.name;
            }
        }
    }
    double worst_qd = 0.0, worst_siamese = 0.0;
    const Pooling poolings[] = {Pooling::Cls, Pooling::MeanTokens, Pooling::MaxTokens};
    for (std::uint64_t seed = 1; seed <= kGradSeeds; ++seed) {
        worst_qd = std::max(worst_qd, check_query_doc(seed, poolings[seed % 2]));
        const auto variant = kAllInteractionVariants[seed % std::size(kAllInteractionVariants)];
        worst_siamese = std::max(worst_siamese, check_siamese(seed, variant, poolings[seed % 3], seed % 2 == 0));
    }
    const double t = clock.seconds();
    const bool ok = worst_op < kGradTolerance && worst_qd < kGradTolerance && worst_siamese < kGradTolerance &&
                    t < kGradSeconds;
    return verdict(ok, fmt("%zu ops x %zu seeds worst %.2e (%s); query-doc worst %.2e; siamese worst %.2e; %.1fs",
                           cases.size(), kGradSeeds, worst_op, worst_name.c_str(), worst_qd, worst_siamese, t));
}

Verdict interaction_exactness()
{
    constexpr std::size_t n = 16;
    double worst = 0.0;
    for (auto v : kAllInteractionVariants) {
        auto ps = init_params(interaction_param_specs(v, n), 31, 0.3);
        auto psd = ps.cast<double>();
        InteractionOracle oracle(ps, n);
        Rng rng(37);
        for (std::size_t i = 0; i < kOracleInputs; ++i) {
            std::vector<double> q(n), d(n);
            for (std::size_t j = 0; j < n; ++j) {
                q[j] = rng.normal();
                d[j] = rng.normal();
            }
            Tape<double> t(false);
            DropoutContext drop;
            const double got = t.scalar(interaction_score(t, psd, v, t.constant(q), t.constant(d), drop));
            worst = std::max(worst, std::abs(got - oracle.score(v, q, d)));
        }
    }
    return verdict(worst <= kOracleTolerance,
                   fmt("5 variants x %zu inputs, worst |delta| %.2e", kOracleInputs, worst));
}

// Ordering checks collected from every synthetic evaluation run.
struct OrderingLog {
    std::size_t runs = 0;
    std::vector<std::string> violations;

    void check(const std::string& name, const DatasetSplit& split, std::span<const float> scores, double random)
    {
        const auto lists = rank_split(split, scores);
        const auto model = evaluate(lists);
        const auto oracle = evaluate(oracle_split(split));
        ++runs;
        if (!(oracle.p_at_10 >= model.p_at_10 && model.p_at_10 >= random && oracle.dcg + 1e-9 >= model.dcg)) {
            violations.push_back(fmt("%s (oracle %.2f model %.2f random %.2f)", name.c_str(), oracle.p_at_10,
                                     model.p_at_10, random));
        }
    }
};

Verdict metric_exactness(const OrderingLog& ordering)
{
    std::size_t bad = 0;
    for (const auto& c : kMetricCases) {
        const auto l = list_of(c.labels);
        if (p_at_10(l) != c.p_at_10 || std::abs(dcg(l, c.cutoff, c.gain) - c.dcg) > kDcgTolerance) {
            ++bad;
        }
    }
    std::string detail = fmt("fixture %zu/%zu match; ordering held on %zu/%zu runs", kMetricCases.size() - bad,
                             kMetricCases.size(), ordering.runs - ordering.violations.size(), ordering.runs);
    for (const auto& v : ordering.violations) {
        detail += "; violated: " + v;
    }
    return verdict(bad == 0 && ordering.violations.empty() && ordering.runs > 0, detail);
}

std::vector<char> file_bytes(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

Verdict bit_exactness(const SiameseModel& model, const EmbeddingStore& store)
{
    std::vector<std::string> failed;
    const std::string url = preprocess_url("https://www.seznamzpravy.cz/clanek/"
                                           "novinka-pro-cerstve-otce-tyden-placene-dovolene-po-narozeni-potomka-"
                                           "41487?autoplay=1");
    if (url != "seznamzpravy.cz/clanek/novinka pro cerstve otce tyden placene dovolene po narozeni potomka "
               "41487?autoplay=1") {
        failed.push_back("url");
    }
    if (assemble_doc_repr("a b", "c.cz/d", "e f") != "title: a b url: c.cz/d bte: e f") {
        failed.push_back("doc_repr");
    }
    using A = Annotation;
    using S = SplitKind;
    const bool labels_ok =
        map_label(A::Useful, S::Test) == 1.0 && map_label(A::Useful, S::TrainBig) == 1.0 &&
        map_label(A::LittleUseful, S::Test) == 0.75 && map_label(A::LittleUseful, S::TrainBig) == 0.5 &&
        map_label(A::LittleUseful, S::Dev) == 0.5 && map_label(A::AlmostNotUseful, S::Test) == 0.25 &&
        map_label(A::AlmostNotUseful, S::TrainBig) == 0.25 && map_label(A::AlmostNotUseful, S::TrainSmall) == 0.5 &&
        map_label(A::AlmostNotUseful, S::Dev) == 0.5 && map_label(A::NotUseful, S::Test) == 0.0 &&
        map_label(A::NotUseful, S::TrainBig) == 0.0;
    if (!labels_ok) {
        failed.push_back("labels");
    }
    const auto dir = fs::temp_directory_path() / "siamrank_acceptance";
    fs::create_directories(dir);
    for (const auto* s : {&store}) {
        s->save(dir / "a.drse");
        EmbeddingStore::load(dir / "a.drse").save(dir / "b.drse");
        if (file_bytes(dir / "a.drse") != file_bytes(dir / "b.drse")) {
            failed.push_back("store");
        }
    }
    auto q = quantize_store(store);
    q.save(dir / "q1.drse");
    EmbeddingStore::load(dir / "q1.drse").save(dir / "q2.drse");
    if (file_bytes(dir / "q1.drse") != file_bytes(dir / "q2.drse")) {
        failed.push_back("quantized store");
    }
    model.save(dir / "m1.bin");
    SiameseModel::load(dir / "m1.bin").save(dir / "m2.bin");
    if (file_bytes(dir / "m1.bin") != file_bytes(dir / "m2.bin")) {
        failed.push_back("checkpoint");
    }
    fs::remove_all(dir);
    std::string detail = "url, doc_repr, labels, store, quantized store, checkpoint";
    for (const auto& f : failed) {
        detail += "; mismatch: " + f;
    }
    return verdict(failed.empty(), detail);
}

// ---------------------------------------------------------------------------
// Desk experiment

struct Desk {
    SyntheticData data;
    Vocab vocab;
    EncoderConfig encoder;
    TrainConfig train;
    double random = 0.0;
    double oracle = 0.0;
};

Desk make_desk()
{
    Desk d;
    SynthConfig sc;
    sc.vocab_size = 200;
    sc.n_queries = 800;
    sc.docs_per_query = 20;
    sc.body_words = 6;
    d.data = generate_synthetic(sc);
    std::vector<std::string> corpus;
    for (const auto* s : {&d.data.train_big, &d.data.train_small}) {
        for (const auto& r : s->records()) {
            corpus.push_back(r.query);
            corpus.push_back(r.doc_repr);
        }
    }
    d.vocab = train_vocab(corpus, 2000, 2);
    d.encoder.vocab_size = d.vocab.size();
    d.train.epochs = 3;
    d.random = random_baseline(d.data.test, kRandomRuns, 1).p_at_10;
    d.oracle = evaluate(oracle_split(d.data.test)).p_at_10;
    return d;
}

struct SiameseRun {
    SiameseModel model;
    std::vector<float> test;
    double p_at_10 = 0.0;
};

SiameseRun train_one(const Desk& d, InteractionVariant variant, std::uint64_t seed, const QueryDocModel* teacher,
                     OrderingLog& ordering)
{
    TrainConfig tc = d.train;
    tc.seed = seed;
    SiameseModel::Options o;
    o.variant = variant;
    DistillConfig dc;
    dc.init_from_teacher = teacher != nullptr;
    auto model = train_siamese(SiameseModel::create(d.encoder, d.vocab, o, tc.base_seed, tc.seed), d.data.train_big,
                               d.data.dev, tc, teacher, dc);
    auto test = model.predict_split(d.data.test);
    const double p = split_p_at_10(d.data.test, test);
    ordering.check(fmt("%s%s seed %llu", teacher ? "distilled " : "", std::string(to_string(variant)).c_str(),
                       static_cast<unsigned long long>(seed)),
                   d.data.test, test, d.random);
    progress(fmt("%s%s seed %llu: test P@10 %.2f", teacher ? "distilled " : "", std::string(to_string(variant)).c_str(),
                 static_cast<unsigned long long>(seed), p));
    return {std::move(model), std::move(test), p};
}

Verdict teacher_init_identity(const Desk& d, const QueryDocModel& teacher)
{
    std::size_t mismatched = 0, compared = 0;
    for (bool weighting : {false, true}) {
        SiameseModel::Options o;
        o.layer_weighting = weighting;
        auto student = SiameseModel::create(d.encoder, d.vocab, o, 7, 7);
        student.init_from(teacher);
        for (std::size_t i = 0; i < 20; ++i) {
            const auto& text = d.data.test.records()[i].doc_repr;
            const auto seq = student.tokenize(text);
            Tape<float> t(false);
            DropoutContext drop;
            LayerMix<float> mix;
            if (weighting) {
                mix.logits = t.param(student.params().get("layer_weighting/logits"));
            }
            Var ref = encode_sequence(t, teacher.params(), teacher.encoder(), seq, o.pooling, mix, drop);
            const auto a = student.embed(text);
            const auto b = t.value(ref);
            ++compared;
            mismatched += std::equal(a.begin(), a.end(), b.begin(), b.end()) ? 0 : 1;
        }
    }
    return verdict(mismatched == 0, fmt("%zu/%zu embeddings identical", compared - mismatched, compared));
}

Verdict ensemble_convexity(const Desk& d, const SiameseModel& a, const SiameseModel& b)
{
    std::string detail;
    bool ok = true;
    for (const auto* split : {&d.data.dev, &d.data.test}) {
        std::vector<std::vector<float>> members = {a.predict_split(*split), b.predict_split(*split)};
        std::vector<double> targets;
        for (const auto& r : split->records()) {
            targets.push_back(to_student_range(r.label, a.variant()));
        }
        const auto combined = combine_predictions(members, Combiner::Mean);
        const double ens = mse(combined, targets);
        const double avg = 0.5 * (mse(members[0], targets) + mse(members[1], targets));
        ok = ok && ens <= avg;
        detail += fmt("%s%s ensemble %.5f <= members %.5f", detail.empty() ? "" : "; ",
                      std::string(to_string(split->kind())).c_str(), ens, avg);
    }
    return verdict(ok, detail);
}

bool non_increasing(const std::vector<double>& v)
{
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[i - 1]) {
            return false;
        }
    }
    return true;
}

Verdict gbrt_integration(const Desk& d, const SiameseModel& model)
{
    const auto& train = d.data.train_small;
    const auto& dev = d.data.dev;
    const auto& test = d.data.test;
    const auto train_fx = FeatureExtractor::fit(train);
    const auto dev_fx = FeatureExtractor::fit(dev);
    const auto test_fx = FeatureExtractor::fit(test);
    GbrtConfig gc;
    GbrtTrainLog lex_log, neural_log;
    const auto lexical = train_gbrt(train_fx.extract(train), labels_of(train), dev_fx.extract(dev), labels_of(dev), gc,
                                    &lex_log);
    const auto train_scores = model.predict_split(train);
    const auto dev_scores = model.predict_split(dev);
    const auto neural = train_gbrt(train_fx.extract(train, train_scores), labels_of(train),
                                   dev_fx.extract(dev, dev_scores), labels_of(dev), gc, &neural_log);
    const auto store = precompute(model, test);
    PipelineConfig pc;
    const auto without = run_pipeline_split(test, test_fx, pc, lexical, lexical);
    const auto with = run_pipeline_split(test, test_fx, pc, lexical, neural, NeuralScorer{&model, &store, nullptr});
    const bool monotone = non_increasing(lex_log.train_rmse) && non_increasing(neural_log.train_rmse);
    return verdict(with.report.p_at_10 >= without.report.p_at_10 && monotone,
                   fmt("pipeline P@10 with neural_score %.2f vs without %.2f (%zu queries); train RMSE "
                       "non-increasing over %zu + %zu rounds: %s",
                       with.report.p_at_10, without.report.p_at_10, with.report.n_queries,
                       lex_log.train_rmse.size() - 1, neural_log.train_rmse.size() - 1, monotone ? "yes" : "no"));
}

Verdict latency(const Desk& d, const SiameseModel& model)
{
    Clock clock;
    BenchConfig bc;
    bc.dims = {d.encoder.hidden};
    bc.layers = d.encoder.layers;
    const auto result = bench(d.vocab, bc);
    const double t = clock.seconds();
    const std::size_t dim = d.encoder.hidden;
    const double ratio = result.cross_over_interaction(dim);
    const double speedup = result.quantized_speedup(dim);

    const auto store = precompute(model, d.data.test);
    const QuantizedInteraction quant(model.scorer());
    const double full = split_p_at_10(d.data.test, score_split(model, store, d.data.test));
    const double q8 = split_p_at_10(d.data.test, score_split(model, store, d.data.test, &quant));
    const double delta = std::abs(full - q8);
    const bool ok = ratio >= kInteractionRatio && speedup >= kQuantSpeedup && delta <= kQuantDelta &&
                    t < kBenchSeconds;
    return verdict(ok, fmt("dim %zu: cross-encoder/interaction %.0fx; quantized speedup %.2fx; P@10 %.2f vs "
                           "quantized %.2f (delta %.2f); bench %.1fs",
                           dim, ratio, speedup, full, q8, delta, t));
}

// ---------------------------------------------------------------------------

Verdict dataset_gated(const std::string& dir)
{
    if (dir.empty() || !fs::exists(fs::path(dir) / "test.tsv")) {
        return {Verdict::State::Skip, "dataset not found (set SIAMRANK_DATASET_DIR or --dataset)"};
    }
    const auto test = load_tsv(fs::path(dir) / "test.tsv", SplitKind::Test);
    const double random = random_baseline(test, kRandomRuns, 1).p_at_10;
    const double oracle = evaluate(oracle_split(test)).p_at_10;
    const auto fx = FeatureExtractor::fit(test);
    const auto features = fx.extract(test);
    std::vector<float> bm25(test.size());
    for (std::size_t i = 0; i < test.size(); ++i) {
        bm25[i] = static_cast<float>(features.at(i, 0));
    }
    const double bm = split_p_at_10(test, bm25);
    const bool ok = std::abs(random - 37.9) <= 0.3 && std::abs(oracle - 59.3) <= 0.05 && std::abs(bm - 40.47) <= 2.0;
    return verdict(ok, fmt("random %.2f, oracle %.2f, BM25 %.2f", random, oracle, bm));
}

}  // namespace

int main(int argc, char** argv)
{
    bool report_only = false;
    const char* env_dir = std::getenv("SIAMRANK_DATASET_DIR");
    std::string dataset = env_dir ? env_dir : "";
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--report-only") {
            report_only = true;
        } else if (a == "--dataset" && i + 1 < argc) {
            dataset = argv[++i];
        } else {
            std::fprintf(stderr, "usage: acceptance [--report-only] [--dataset DIR]\n");
            return 64;
        }
    }

    std::vector<Verdict> v(11);
    OrderingLog ordering;
    Clock total;
    try {
        progress("criterion 1: gradient checks");
        v[1] = gradients();
        progress("criterion 2: interaction oracle");
        v[2] = interaction_exactness();

        progress("desk dataset");
        const Desk d = make_desk();
        progress(fmt("vocab %zu, random %.2f, oracle %.2f", d.vocab.size(), d.random, d.oracle));

        Clock learn;
        auto teacher = train_query_doc(QueryDocModel::create(d.encoder, d.vocab, d.train.base_seed), d.data.train_big,
                                       d.data.dev, d.train);
        const auto qd_scores = teacher.predict_split(d.data.test);
        const double qd = split_p_at_10(d.data.test, qd_scores);
        ordering.check("query-doc", d.data.test, qd_scores, d.random);
        progress(fmt("query-doc: test P@10 %.2f", qd));
        std::vector<SiameseRun> finals;
        std::vector<double> final_p, cosine_p;
        for (std::uint64_t s = 1; s <= kSeeds; ++s) {
            finals.push_back(train_one(d, InteractionVariant::Final, s, nullptr, ordering));
            final_p.push_back(finals.back().p_at_10);
        }
        for (std::uint64_t s = 1; s <= kSeeds; ++s) {
            cosine_p.push_back(train_one(d, InteractionVariant::Cosine, s, nullptr, ordering).p_at_10);
        }
        const double core_minutes = learn.seconds() / 60.0;
        const double gain = qd - d.random;
        const double recovered = gain > 0 ? (mean_of(final_p) - d.random) / gain : 0.0;
        v[4] = verdict(gain >= kLearnMargin && recovered >= kRecoverFraction &&
                           mean_of(final_p) > mean_of(cosine_p) && core_minutes <= kLearnCoreMinutes,
                       fmt("random %.2f; query-doc %.2f (+%.2f); final mean %.2f [%s] recovers %.0f%% of the gain; "
                           "final %.2f vs cosine mean %.2f [%s]; %.1f core-min",
                           d.random, qd, gain, mean_of(final_p), join_values(final_p).c_str(), 100 * recovered,
                           mean_of(final_p), mean_of(cosine_p), join_values(cosine_p).c_str(), core_minutes));

        progress("criterion 5: distillation");
        std::vector<double> distilled_p;
        for (std::uint64_t s = 1; s <= kSeeds; ++s) {
            distilled_p.push_back(train_one(d, InteractionVariant::Final, s, &teacher, ordering).p_at_10);
        }
        const auto identity = teacher_init_identity(d, teacher);
        const bool distill_ok = mean_of(distilled_p) >= mean_of(final_p) - kDistillSlack;
        v[5] = verdict(distill_ok && identity.state == Verdict::State::Pass,
                       fmt("distilled mean %.2f [%s] vs no-teacher %.2f; teacher init: ", mean_of(distilled_p),
                           join_values(distilled_p).c_str(), mean_of(final_p)) +
                           identity.detail);

        progress("criterion 6: ensemble");
        v[6] = ensemble_convexity(d, finals[0].model, finals[1].model);
        progress("criterion 7: gbrt integration");
        v[7] = gbrt_integration(d, finals[0].model);
        progress("criterion 8: latency");
        v[8] = latency(d, finals[0].model);
        v[3] = metric_exactness(ordering);
        v[9] = bit_exactness(finals[0].model, precompute(finals[0].model, d.data.dev));
        progress("criterion 10: dataset");
        v[10] = dataset_gated(dataset);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "acceptance aborted: %s\n", e.what());
        return report_only ? 1 : 99;
    }

    int failed = 0;
    for (int i = 1; i <= 10; ++i) {
        const char* state = v[i].state == Verdict::State::Pass   ? "PASS"
                            : v[i].state == Verdict::State::Skip ? "SKIP"
                                                                 : "FAIL";
        failed += v[i].state == Verdict::State::Fail ? 1 : 0;
        std::printf("criterion %2d: %s  %s\n", i, state, v[i].detail.c_str());
    }
    std::printf("acceptance: %d failed, %.1f min\n", failed, total.seconds() / 60.0);
    return report_only ? 0 : failed;
}

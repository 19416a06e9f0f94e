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

#include "siamrank/models.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include "siamrank/metrics.hpp"
#include "siamrank/optim.hpp"

namespace siamrank {

namespace {

std::atomic<std::uint64_t> g_encoder_forwards{0};
std::atomic<std::uint64_t> g_interaction_evals{0};

std::filesystem::path with_suffix(const std::filesystem::path& path, const char* suffix)
{
    return std::filesystem::path(path.string() + suffix);
}

void append_params(ParamSet<float>& into, const ParamSet<float>& from)
{
    for (const auto& p : from.all()) {
        into.add(p.name, p.shape).value = p.value;
    }
}

void check_shapes(const ParamSet<float>& loaded, const ParamSet<float>& expected, const std::string& what)
{
    if (loaded.size() != expected.size()) {
        throw DataError(what + ": checkpoint holds " + std::to_string(loaded.size()) + " tensors, expected " +
                        std::to_string(expected.size()));
    }
    for (const auto& p : expected.all()) {
        if (!loaded.contains(p.name)) {
            throw DataError(what + ": checkpoint lacks '" + p.name + "'");
        }
        if (loaded.get(p.name).shape != p.shape) {
            throw DataError(what + ": '" + p.name + "' has shape " + loaded.get(p.name).shape.str() + ", expected " +
                            p.shape.str());
        }
    }
}

EncoderConfig fit_encoder(EncoderConfig encoder, const Vocab& vocab, std::size_t max_len)
{
    encoder.vocab_size = vocab.size();
    encoder.validate();
    if (max_len > encoder.max_pos) {
        throw UsageError("max_len " + std::to_string(max_len) + " exceeds encoder max_pos " +
                         std::to_string(encoder.max_pos));
    }
    if (max_len < 4) {
        throw UsageError("max_len must be at least 4");
    }
    return encoder;
}

/// Shared epoch loop. `example_loss` records one example's loss on the tape;
/// `dev_metric` returns Dev P@10 (percent) for the current weights.
template <typename ExampleLoss, typename DevMetric>
void run_training(ParamSet<float>& params, std::size_t n_examples, const TrainConfig& cfg, double dropout_p,
                  ExampleLoss&& example_loss, DevMetric&& dev_metric, std::vector<EpochLog>* log)
{
    if (n_examples == 0) {
        throw UsageError("training split is empty");
    }
    AdamState state = AdamState::for_params(params);
    std::vector<std::vector<float>> best;
    double best_dev = -1.0;
    std::size_t since_best = 0;

    Rng order_rng(splitmix64(cfg.seed ^ 0x6f72646572ULL));
    std::vector<std::size_t> order(n_examples);
    for (std::size_t i = 0; i < n_examples; ++i) {
        order[i] = i;
    }
    Tape<float> tape;
    std::uint64_t step = 0;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        order_rng.shuffle(order);
        double loss_sum = 0.0;
        for (std::size_t begin = 0; begin < n_examples; begin += cfg.batch) {
            const std::size_t end = std::min(n_examples, begin + cfg.batch);
            const float inv = 1.0F / static_cast<float>(end - begin);
            params.zero_grad();
            ++step;
            for (std::size_t i = begin; i < end; ++i) {
                tape.clear();
                DropoutContext drop{true, dropout_p, splitmix64(cfg.seed ^ splitmix64(step * 1000003ULL + i)), 0};
                Var loss = example_loss(tape, order[i], drop);
                const double value = tape.scalar(loss);
                if (!std::isfinite(value)) {
                    throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                                       std::to_string(step) + ", example " + std::to_string(order[i]));
                }
                loss_sum += value;
                tape.backward(tape.scale(loss, inv));
            }
            adam_step(params, state, cfg.lr);
        }
        const double dev = dev_metric();
        if (log != nullptr) {
            log->push_back({epoch, loss_sum / static_cast<double>(n_examples), dev});
        }
        if (dev > best_dev) {
            best_dev = dev;
            since_best = 0;
            best.clear();
            for (const auto& p : params.all()) {
                best.push_back(p.value);
            }
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }
    for (std::size_t i = 0; i < best.size(); ++i) {
        params.all()[i].value = best[i];
    }
}

}  // namespace

void TrainConfig::validate() const
{
    if (!(lr >= 0.0) || !std::isfinite(lr)) {
        throw UsageError("learning rate must be finite and non-negative");
    }
    if (batch == 0 || epochs == 0 || patience == 0) {
        throw UsageError("batch, epochs and patience must be positive");
    }
    if (workers == 0) {
        throw UsageError("workers must be positive");
    }
}

std::string_view to_string(TargetMode mode)
{
    return mode == TargetMode::LabelAverage ? "label_average" : "loss_average";
}

TargetMode parse_target_mode(std::string_view name)
{
    if (name == "label_average") {
        return TargetMode::LabelAverage;
    }
    if (name == "loss_average") {
        return TargetMode::LossAverage;
    }
    throw UsageError("unknown distillation target mode '" + std::string(name) + "'");
}

Combiner parse_combiner(std::string_view name)
{
    if (name == "mean") {
        return Combiner::Mean;
    }
    if (name == "max") {
        return Combiner::Max;
    }
    throw UsageError("unknown ensemble combiner '" + std::string(name) + "'");
}

OpCounts op_counts()
{
    return {g_encoder_forwards.load(), g_interaction_evals.load()};
}

void reset_op_counts()
{
    g_encoder_forwards = 0;
    g_interaction_evals = 0;
}

// ---------------------------------------------------------------------------
// QueryDocModel

QueryDocModel QueryDocModel::create(const EncoderConfig& encoder, Vocab vocab, std::uint64_t base_seed,
                                    std::size_t max_len, Pooling pooling)
{
    QueryDocModel m;
    m.pooling_ = pooling;
    m.encoder_ = fit_encoder(encoder, vocab, max_len);
    m.vocab_ = std::move(vocab);
    m.max_len_ = max_len;
    m.params_ = init_weights(m.encoder_, base_seed);
    const std::size_t n = m.encoder_.hidden;
    append_params(m.params_, init_params({{"head/w", {1, n}, Init::Normal}, {"head/b", {1, 1}, Init::Zeros}},
                                         splitmix64(base_seed ^ 0x68656164ULL), 1.0 / std::sqrt(double(n))));
    return m;
}

float QueryDocModel::predict(std::string_view query, std::string_view doc_repr) const
{
    Tape<float> t(false);
    DropoutContext drop;
    TokenSequence seq = encode_pair(query, doc_repr, vocab_, max_len_);
    return t.scalar(forward(t, params_, seq, drop));
}

std::vector<float> QueryDocModel::predict_split(const DatasetSplit& split, std::size_t workers) const
{
    std::vector<float> out(split.size());
    parallel_for(split.size(), workers, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const auto& r = split.records()[i];
            out[i] = predict(r.query, r.doc_repr);
        }
    });
    return out;
}

void QueryDocModel::save(const std::filesystem::path& path) const
{
    save_checkpoint(params_, path);
    KeyValues kv(to_key_values(encoder_));
    kv.set("model.kind", "query_doc");
    kv.set("model.max_len", std::to_string(max_len_));
    kv.set("model.pooling", std::string(to_string(pooling_)));
    kv.save(with_suffix(path, ".cfg"));
    vocab_.save(with_suffix(path, ".vocab"));
}

QueryDocModel QueryDocModel::load(const std::filesystem::path& path)
{
    KeyValues kv = KeyValues::load(with_suffix(path, ".cfg"));
    if (kv.get_string("model.kind", "") != "query_doc") {
        throw DataError(path.string() + " is not a query-doc model");
    }
    QueryDocModel m = create(encoder_config_from(kv.values()), Vocab::load(with_suffix(path, ".vocab")), 0,
                             kv.get_size("model.max_len", kDefaultMaxLen),
                             parse_pooling(kv.get_string("model.pooling", "cls")));
    ParamSet<float> loaded = load_checkpoint(path);
    check_shapes(loaded, m.params_, path.string());
    m.params_.copy_values_from(loaded, "");
    return m;
}

QueryDocModel train_query_doc(QueryDocModel model, const DatasetSplit& train, const DatasetSplit& dev,
                              const TrainConfig& cfg, std::vector<EpochLog>* log)
{
    cfg.validate();
    if (dev.empty()) {
        throw UsageError("dev split is empty");
    }
    std::vector<TokenSequence> seqs;
    seqs.reserve(train.size());
    for (const auto& r : train.records()) {
        seqs.push_back(encode_pair(r.query, r.doc_repr, model.vocab(), model.max_len()));
    }
    auto& params = model.params();
    run_training(
        params, train.size(), cfg, model.encoder().dropout_p,
        [&](Tape<float>& t, std::size_t idx, DropoutContext& drop) {
            Var pred = model.forward(t, params, seqs[idx], drop);
            return t.mse_loss(pred, static_cast<float>(train.records()[idx].label));
        },
        [&] { return split_p_at_10(dev, model.predict_split(dev, cfg.workers)); }, log);
    return model;
}

// ---------------------------------------------------------------------------
// SiameseModel

SiameseModel SiameseModel::create(const EncoderConfig& encoder, Vocab vocab, const Options& options,
                                  std::uint64_t base_seed, std::uint64_t seed)
{
    SiameseModel m;
    m.encoder_ = fit_encoder(encoder, vocab, options.max_len);
    m.vocab_ = std::move(vocab);
    m.options_ = options;
    m.params_ = init_weights(m.encoder_, base_seed);
    if (options.layer_weighting) {
        m.params_.add("layer_weighting/logits", {1, m.encoder_.weighted_layers()});
    }
    auto specs = interaction_param_specs(options.variant, m.encoder_.hidden);
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const double sigma = 1.0 / std::sqrt(static_cast<double>(specs[i].shape.cols));
        append_params(m.params_, init_params({specs[i]}, splitmix64(seed * 7919ULL + i), sigma));
    }
    m.refresh_scorer();
    return m;
}

void SiameseModel::refresh_scorer()
{
    scorer_ = InteractionScorer(options_.variant, encoder_.hidden, params_);
}

InteractionScorer SiameseModel::scorer() const
{
    return scorer_;
}

std::vector<float> SiameseModel::embed(std::string_view text) const
{
    g_encoder_forwards.fetch_add(1, std::memory_order_relaxed);
    Tape<float> t(false);
    DropoutContext drop;
    Var v = embed_on(t, params_, tokenize(text), drop);
    auto span = t.value(v);
    return {span.begin(), span.end()};
}

float SiameseModel::score(std::span<const float> eq, std::span<const float> ed) const
{
    g_interaction_evals.fetch_add(1, std::memory_order_relaxed);
    return scorer_.score(eq, ed);
}

float SiameseModel::predict(std::string_view query, std::string_view doc_repr) const
{
    auto eq = embed(query);
    auto ed = embed(doc_repr);
    return score(eq, ed);
}

std::vector<float> SiameseModel::predict_split(const DatasetSplit& split, std::size_t workers) const
{
    std::unordered_map<std::string_view, std::size_t> index;
    std::vector<std::string_view> texts;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    auto intern = [&](std::string_view s) {
        auto [it, inserted] = index.emplace(s, texts.size());
        if (inserted) {
            texts.push_back(s);
        }
        return it->second;
    };
    for (const auto& r : split.records()) {
        std::size_t q = intern(r.query);
        std::size_t d = intern(r.doc_repr);
        pairs.emplace_back(q, d);
    }
    std::vector<std::vector<float>> emb(texts.size());
    parallel_for(texts.size(), workers, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            emb[i] = embed(texts[i]);
        }
    });
    std::vector<float> out(split.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        out[i] = score(emb[pairs[i].first], emb[pairs[i].second]);
    }
    return out;
}

void SiameseModel::init_from(const QueryDocModel& teacher)
{
    if (teacher.encoder() != encoder_) {
        throw UsageError("teacher and student encoder configurations differ");
    }
    params_.copy_values_from(teacher.params(), "encoder/");
}

void SiameseModel::save(const std::filesystem::path& path) const
{
    save_checkpoint(params_, path);
    KeyValues kv(to_key_values(encoder_));
    kv.set("model.kind", "siamese");
    kv.set("model.max_len", std::to_string(options_.max_len));
    kv.set("siamese.pooling", std::string(to_string(options_.pooling)));
    kv.set("siamese.layer_weighting", options_.layer_weighting ? "true" : "false");
    kv.set("siamese.variant", std::string(to_string(options_.variant)));
    kv.save(with_suffix(path, ".cfg"));
    vocab_.save(with_suffix(path, ".vocab"));
}

SiameseModel SiameseModel::load(const std::filesystem::path& path)
{
    KeyValues kv = KeyValues::load(with_suffix(path, ".cfg"));
    if (kv.get_string("model.kind", "") != "siamese") {
        throw DataError(path.string() + " is not a siamese model");
    }
    Options o;
    o.max_len = kv.get_size("model.max_len", kDefaultMaxLen);
    o.pooling = parse_pooling(kv.get_string("siamese.pooling", "cls"));
    o.layer_weighting = kv.get_bool("siamese.layer_weighting", true);
    o.variant = parse_interaction(kv.get_string("siamese.variant", "final"));
    SiameseModel m = create(encoder_config_from(kv.values()), Vocab::load(with_suffix(path, ".vocab")), o, 0, 0);
    ParamSet<float> loaded = load_checkpoint(path);
    check_shapes(loaded, m.params_, path.string());
    m.params_.copy_values_from(loaded, "");
    m.refresh_scorer();
    return m;
}

double to_student_range(double y, InteractionVariant variant)
{
    return tanh_range(variant) ? 2.0 * y - 1.0 : y;
}

double distill_target(double gold, double teacher, InteractionVariant variant)
{
    return 0.5 * (to_student_range(gold, variant) + to_student_range(teacher, variant));
}

SiameseModel train_siamese(SiameseModel model, const DatasetSplit& train, const DatasetSplit& dev,
                           const TrainConfig& cfg, const QueryDocModel* teacher, const DistillConfig& distill,
                           std::vector<EpochLog>* log)
{
    cfg.validate();
    if (dev.empty()) {
        throw UsageError("dev split is empty");
    }
    if (distill.init_from_teacher) {
        if (teacher == nullptr) {
            throw UsageError("init_from_teacher requires a teacher model");
        }
        model.init_from(*teacher);
    }
    const InteractionVariant variant = model.variant();
    std::vector<float> teacher_scores;
    if (teacher != nullptr) {
        teacher_scores = teacher->predict_split(train, cfg.workers);
    }

    std::unordered_map<std::string_view, std::size_t> index;
    std::vector<TokenSequence> seqs;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    auto intern = [&](std::string_view s) {
        auto [it, inserted] = index.emplace(s, seqs.size());
        if (inserted) {
            seqs.push_back(model.tokenize(s));
        }
        return it->second;
    };
    for (const auto& r : train.records()) {
        std::size_t q = intern(r.query);
        std::size_t d = intern(r.doc_repr);
        pairs.emplace_back(q, d);
    }

    auto& params = model.params();
    run_training(
        params, train.size(), cfg, model.encoder().dropout_p,
        [&](Tape<float>& t, std::size_t idx, DropoutContext& drop) {
            Var r = model.forward(t, params, seqs[pairs[idx].first], seqs[pairs[idx].second], drop);
            const double gold = to_student_range(train.records()[idx].label, variant);
            if (teacher == nullptr) {
                return t.mse_loss(r, static_cast<float>(gold));
            }
            const double soft = to_student_range(teacher_scores[idx], variant);
            if (distill.target_mode == TargetMode::LabelAverage) {
                return t.mse_loss(r, static_cast<float>(0.5 * (gold + soft)));
            }
            return t.add(t.scale(t.mse_loss(r, static_cast<float>(soft)), 0.5F),
                         t.scale(t.mse_loss(r, static_cast<float>(gold)), 0.5F));
        },
        [&] {
            model.refresh_scorer();
            return split_p_at_10(dev, model.predict_split(dev, cfg.workers));
        },
        log);
    model.refresh_scorer();
    return model;
}

// ---------------------------------------------------------------------------

float ensemble_predict(std::span<const SiameseModel* const> models, std::string_view query,
                       std::string_view doc_repr, Combiner combiner)
{
    if (models.empty()) {
        throw UsageError("ensemble needs at least one model");
    }
    std::vector<std::vector<float>> scores;
    for (const SiameseModel* m : models) {
        if (tanh_range(m->variant()) != tanh_range(models[0]->variant())) {
            throw UsageError("ensemble members have different output ranges");
        }
        scores.push_back({m->predict(query, doc_repr)});
    }
    return combine_predictions(scores, combiner)[0];
}

std::vector<float> combine_predictions(std::span<const std::vector<float>> member_scores, Combiner combiner)
{
    if (member_scores.empty()) {
        throw UsageError("ensemble needs at least one model");
    }
    const std::size_t n = member_scores[0].size();
    std::vector<float> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        double acc = combiner == Combiner::Mean ? 0.0 : -INFINITY;
        for (const auto& s : member_scores) {
            if (s.size() != n) {
                throw UsageError("ensemble members scored different numbers of records");
            }
            acc = combiner == Combiner::Mean ? acc + s[i] : std::max(acc, static_cast<double>(s[i]));
        }
        out[i] = static_cast<float>(combiner == Combiner::Mean ? acc / static_cast<double>(member_scores.size())
                                                               : acc);
    }
    return out;
}

void write_metrics_log(const std::vector<EpochLog>& log, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    out << "epoch\ttrain_loss\tdev_p_at_10\n";
    for (const auto& e : log) {
        out << e.epoch << "\t" << format_double(e.train_loss) << "\t" << format_double(e.dev_p_at_10) << "\n";
    }
}

double mse(std::span<const float> predictions, std::span<const double> targets)
{
    if (predictions.size() != targets.size() || predictions.empty()) {
        throw UsageError("mse needs equally sized, non-empty inputs");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        double d = static_cast<double>(predictions[i]) - targets[i];
        total += d * d;
    }
    return total / static_cast<double>(predictions.size());
}

}  // namespace siamrank

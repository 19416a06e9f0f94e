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
#include <string_view>
#include <vector>

#include "siamrank/config.hpp"
#include "siamrank/dataset.hpp"
#include "siamrank/encoder.hpp"
#include "siamrank/interaction.hpp"
#include "siamrank/tensor.hpp"
#include "siamrank/tokenizer.hpp"

namespace siamrank {

struct TrainConfig {
    double lr = 1e-3;
    std::size_t batch = 32;
    std::size_t max_len = kDefaultMaxLen;
    std::size_t epochs = 5;
    /// Epochs without a Dev P@10 improvement before stopping.
    std::size_t patience = 2;
    /// Interaction-module init, data order and dropout.
    std::uint64_t seed = 1;
    /// Encoder initialization; plays the role of the pretrained base model.
    std::uint64_t base_seed = 1000;
    std::size_t workers = 1;

    void validate() const;
};

enum class TargetMode { LabelAverage, LossAverage };

std::string_view to_string(TargetMode mode);
TargetMode parse_target_mode(std::string_view name);

struct DistillConfig {
    TargetMode target_mode = TargetMode::LossAverage;
    bool init_from_teacher = false;
};

enum class Combiner { Mean, Max };

Combiner parse_combiner(std::string_view name);

struct EpochLog {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double dev_p_at_10 = 0.0;  // percent
};

/// Cross-encoder: [CLS] query [SEP] doc [SEP] -> pooled vector (CLS by
/// default) -> linear -> sigmoid.
class QueryDocModel {
  public:
    QueryDocModel() = default;
    static QueryDocModel create(const EncoderConfig& encoder, Vocab vocab, std::uint64_t base_seed,
                                std::size_t max_len = kDefaultMaxLen, Pooling pooling = Pooling::Cls);

    const EncoderConfig& encoder() const { return encoder_; }
    const Vocab& vocab() const { return vocab_; }
    std::size_t max_len() const { return max_len_; }
    Pooling pooling() const { return pooling_; }
    ParamSet<float>& params() { return params_; }
    const ParamSet<float>& params() const { return params_; }

    /// Relevance in (0, 1).
    float predict(std::string_view query, std::string_view doc_repr) const;
    /// One score per record, in record order.
    std::vector<float> predict_split(const DatasetSplit& split, std::size_t workers = 1) const;

    /// Differentiable prediction on a caller tape (used by training).
    template <typename T, typename PS>
    Var forward(Tape<T>& t, PS& ps, const TokenSequence& seq, DropoutContext& drop) const
    {
        Var pooled = encode_sequence(t, ps, encoder_, seq, pooling_, LayerMix<T>{}, drop);
        return t.sigmoid(t.linear(pooled, t.param(ps.get("head/w")), t.param(ps.get("head/b"))));
    }

    /// Writes `path` (weights), `path`.cfg and `path`.vocab.
    void save(const std::filesystem::path& path) const;
    static QueryDocModel load(const std::filesystem::path& path);

  private:
    EncoderConfig encoder_;
    Vocab vocab_;
    std::size_t max_len_ = kDefaultMaxLen;
    Pooling pooling_ = Pooling::Cls;
    ParamSet<float> params_;
};

/// Bi-encoder: one shared tower embeds query and document separately, the
/// interaction module compares the two vectors.
class SiameseModel {
  public:
    struct Options {
        Pooling pooling = Pooling::Cls;
        bool layer_weighting = true;
        InteractionVariant variant = InteractionVariant::Final;
        std::size_t max_len = kDefaultMaxLen;
    };

    SiameseModel() = default;
    static SiameseModel create(const EncoderConfig& encoder, Vocab vocab, const Options& options,
                               std::uint64_t base_seed, std::uint64_t seed);

    const EncoderConfig& encoder() const { return encoder_; }
    const Vocab& vocab() const { return vocab_; }
    const Options& options() const { return options_; }
    InteractionVariant variant() const { return options_.variant; }
    std::size_t dim() const { return encoder_.hidden; }
    ParamSet<float>& params() { return params_; }
    const ParamSet<float>& params() const { return params_; }

    /// One tower forward. Counted in op_counts().encoder_forwards.
    std::vector<float> embed(std::string_view text) const;
    /// One interaction evaluation. Counted in op_counts().interaction_evals.
    float score(std::span<const float> eq, std::span<const float> ed) const;
    float predict(std::string_view query, std::string_view doc_repr) const;
    /// Embeds every distinct query and document once, then scores records.
    std::vector<float> predict_split(const DatasetSplit& split, std::size_t workers = 1) const;

    /// Frozen fast scorer over the current interaction weights.
    InteractionScorer scorer() const;

    template <typename T, typename PS>
    Var embed_on(Tape<T>& t, PS& ps, const TokenSequence& seq, DropoutContext& drop) const
    {
        LayerMix<T> mix;
        if (options_.layer_weighting) {
            mix.logits = t.param(ps.get("layer_weighting/logits"));
        }
        return encode_sequence(t, ps, encoder_, seq, options_.pooling, mix, drop);
    }

    template <typename T, typename PS>
    Var forward(Tape<T>& t, PS& ps, const TokenSequence& query, const TokenSequence& doc,
                DropoutContext& drop) const
    {
        Var eq = embed_on(t, ps, query, drop);
        Var ed = embed_on(t, ps, doc, drop);
        return interaction_score(t, ps, options_.variant, eq, ed, drop);
    }

    TokenSequence tokenize(std::string_view text) const { return encode(text, vocab_, options_.max_len); }

    /// Copies encoder/* weights from a teacher with the same encoder config.
    void init_from(const QueryDocModel& teacher);

    void save(const std::filesystem::path& path) const;
    static SiameseModel load(const std::filesystem::path& path);

  private:
    EncoderConfig encoder_;
    Vocab vocab_;
    Options options_;
    ParamSet<float> params_;
    InteractionScorer scorer_;

    void refresh_scorer();
    friend SiameseModel train_siamese(SiameseModel, const DatasetSplit&, const DatasetSplit&, const TrainConfig&,
                                      const QueryDocModel*, const DistillConfig&, std::vector<EpochLog>*);
};

struct OpCounts {
    std::uint64_t encoder_forwards = 0;
    std::uint64_t interaction_evals = 0;
};

OpCounts op_counts();
void reset_op_counts();

/// Minimizes MSE(prediction, label) with Adam; keeps the epoch with the best
/// Dev P@10 (earlier epoch on ties).
QueryDocModel train_query_doc(QueryDocModel model, const DatasetSplit& train, const DatasetSplit& dev,
                              const TrainConfig& cfg, std::vector<EpochLog>* log = nullptr);

/// Student target in the output range of `variant`: 2y - 1 for the tanh
/// variants, y otherwise. Teacher probabilities go through the same map.
double to_student_range(double y, InteractionVariant variant);

/// Training target for LabelAverage mode; LossAverage minimizes the mean of
/// the two MSE terms, whose minimizer is this same midpoint.
double distill_target(double gold, double teacher, InteractionVariant variant);

/// Trains the siamese student. With a teacher, targets mix gold labels and
/// teacher predictions per `distill`; with init_from_teacher the tower starts
/// from the teacher's encoder weights.
SiameseModel train_siamese(SiameseModel model, const DatasetSplit& train, const DatasetSplit& dev,
                           const TrainConfig& cfg, const QueryDocModel* teacher = nullptr,
                           const DistillConfig& distill = {}, std::vector<EpochLog>* log = nullptr);

float ensemble_predict(std::span<const SiameseModel* const> models, std::string_view query,
                       std::string_view doc_repr, Combiner combiner = Combiner::Mean);
/// Per-record combination of member predictions.
std::vector<float> combine_predictions(std::span<const std::vector<float>> member_scores,
                                       Combiner combiner = Combiner::Mean);

void write_metrics_log(const std::vector<EpochLog>& log, const std::filesystem::path& path);

double mse(std::span<const float> predictions, std::span<const double> targets);

}  // namespace siamrank

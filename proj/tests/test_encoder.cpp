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

#include <cmath>

#include "model_grad.hpp"
#include "siamrank/encoder.hpp"

using namespace siamrank;
using siamrank::testing::tiny_encoder;
using siamrank::testing::tiny_vocab;

namespace {

constexpr double kEmbedTolerance = 1e-5;

std::vector<float> run(const EncoderConfig& cfg, const ParamSet<float>& ps, const TokenSequence& seq, Pooling pooling,
                       const LayerMix<float>& mix = {})
{
    Tape<float> t(false);
    DropoutContext drop;
    Var v = encode_sequence(t, ps, cfg, seq, pooling, mix, drop);
    auto s = t.value(v);
    return {s.begin(), s.end()};
}

void expect_close(const std::vector<float>& a, const std::vector<float>& b, double tol = kEmbedTolerance)
{
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_NEAR(a[i], b[i], tol) << "at " << i;
    }
}

}  // namespace

TEST(Encoder, OneHotLayerMixEqualsLastLayer)
{
    auto cfg = tiny_encoder();
    auto ps = init_weights(cfg, 5, 0.3);
    auto seq = encode("red fox jumps", tiny_vocab(), 32);
    LayerMix<float> mix;
    mix.forced = std::vector<float>(cfg.weighted_layers(), 0.0F);
    mix.forced->back() = 1.0F;
    for (auto pooling : {Pooling::Cls, Pooling::MeanTokens, Pooling::MaxTokens}) {
        expect_close(run(cfg, ps, seq, pooling, mix), run(cfg, ps, seq, pooling));
    }
}

TEST(Encoder, TrailingPaddingHasNoEffect)
{
    auto cfg = tiny_encoder();
    auto ps = init_weights(cfg, 6, 0.3);
    auto seq = encode_pair("red fox", "blue car fast", tiny_vocab(), 32);
    for (auto pooling : {Pooling::Cls, Pooling::MeanTokens, Pooling::MaxTokens}) {
        const auto base = run(cfg, ps, seq, pooling);
        for (std::size_t len : {seq.size() + 1, seq.size() + 7, std::size_t{32}}) {
            expect_close(run(cfg, ps, pad_to(seq, len), pooling), base);
        }
    }
}

TEST(Encoder, OutputShapeAndFiniteness)
{
    auto cfg = tiny_encoder();
    auto ps = init_weights(cfg, 7);
    auto out = run(cfg, ps, encode("red", tiny_vocab(), 32), Pooling::MeanTokens);
    ASSERT_EQ(out.size(), cfg.hidden);
    for (float x : out) {
        EXPECT_TRUE(std::isfinite(x));
    }
}

TEST(Encoder, RejectsOverlongAndEmptySequences)
{
    auto cfg = tiny_encoder();
    auto ps = init_weights(cfg, 7);
    TokenSequence empty;
    EXPECT_THROW(run(cfg, ps, empty, Pooling::Cls), UsageError);
    TokenSequence longer;
    longer.ids.assign(cfg.max_pos + 1, kUnkId);
    EXPECT_THROW(run(cfg, ps, longer, Pooling::Cls), DataError);
}

TEST(Init, TruncatedNormalWithinTwoSigma)
{
    EncoderConfig cfg;
    const double sigma = 0.02;
    auto ps = init_weights(cfg, 11, sigma);
    double sum = 0, sq = 0;
    std::size_t n = 0;
    for (const auto& spec : encoder_param_specs(cfg)) {
        const auto& p = ps.get(spec.name);
        for (float x : p.value) {
            switch (spec.init) {
            case Init::Normal:
                EXPECT_LE(std::abs(x), 2 * sigma + 1e-9);
                sum += x;
                sq += double(x) * x;
                ++n;
                break;
            case Init::Zeros:
                EXPECT_EQ(x, 0.0F);
                break;
            case Init::Ones:
                EXPECT_EQ(x, 1.0F);
                break;
            }
        }
    }
    const double mean = sum / n;
    // A normal truncated at +-2 sigma has standard deviation 0.8796 sigma.
    EXPECT_NEAR(mean, 0.0, 1e-4);
    EXPECT_NEAR(std::sqrt(sq / n - mean * mean), 0.8796 * sigma, 0.01 * sigma);
}

TEST(Init, DeterministicPerSeedAndZeroSigma)
{
    auto cfg = tiny_encoder();
    auto a = init_weights(cfg, 3);
    auto b = init_weights(cfg, 3);
    auto c = init_weights(cfg, 4);
    ASSERT_EQ(a.size(), b.size());
    bool differs = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a.all()[i].value, b.all()[i].value);
        differs = differs || a.all()[i].value != c.all()[i].value;
    }
    EXPECT_TRUE(differs);
    auto z = init_weights(cfg, 3, 0.0);
    for (const auto& spec : encoder_param_specs(cfg)) {
        if (spec.init == Init::Normal) {
            for (float x : z.get(spec.name).value) {
                EXPECT_EQ(x, 0.0F);
            }
        }
    }
}

TEST(Encoder, BatchedPredictionMatchesSingle)
{
    SiameseModel::Options o;
    o.max_len = 32;
    auto model = SiameseModel::create(tiny_encoder(), tiny_vocab(), o, 1, 1);
    Rng rng(9);
    for (auto& p : model.params().all()) {
        for (auto& x : p.value) {
            x += static_cast<float>(0.2 * rng.normal());
        }
    }
    SynthConfig sc;
    sc.n_queries = 8;
    sc.vocab_size = 60;
    sc.body_words = 6;
    auto data = generate_synthetic(sc);
    // Keep documents within max_len.
    std::vector<RelevanceRecord> recs;
    for (const auto& r : data.test.records()) {
        if (model.tokenize(r.doc_repr).size() < 32) {
            recs.push_back(r);
        }
    }
    auto split = DatasetSplit::from_records(SplitKind::Test, recs);
    auto batched = model.predict_split(split, 2);
    for (std::size_t i = 0; i < split.size(); ++i) {
        EXPECT_NEAR(batched[i], model.predict(split.records()[i].query, split.records()[i].doc_repr), 1e-6);
    }
}

TEST(EncoderConfig, KeyValueRoundTrip)
{
    auto cfg = tiny_encoder();
    cfg.weight_embedding_layer = false;
    EXPECT_EQ(encoder_config_from(to_key_values(cfg)), cfg);
    cfg.heads = 3;
    EXPECT_THROW(cfg.validate(), UsageError);
}

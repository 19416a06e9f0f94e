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
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "siamrank/encoder.hpp"
#include "siamrank/tensor.hpp"

namespace siamrank {

enum class InteractionVariant { Cosine, SingleHidden, TwinBert, FinalNoCosEuc, Final };

inline constexpr InteractionVariant kAllInteractionVariants[] = {
    InteractionVariant::Cosine, InteractionVariant::SingleHidden, InteractionVariant::TwinBert,
    InteractionVariant::FinalNoCosEuc, InteractionVariant::Final};

std::string_view to_string(InteractionVariant variant);
InteractionVariant parse_interaction(std::string_view name);

/// Cosine, Final and FinalNoCosEuc score in [-1, 1]; the sigmoid variants
/// score in [0, 1].
constexpr bool tanh_range(InteractionVariant v)
{
    return v == InteractionVariant::Cosine || v == InteractionVariant::Final || v == InteractionVariant::FinalNoCosEuc;
}

/// Drop probability after the first GELU layer of the final module.
inline constexpr double kInteractionDropout = 0.25;

/// Parameters, all under `prefix`:
///   SingleHidden   proj [3 x 2n], proj_b [1 x 3], out [1 x 5], out_b [1 x 1]
///   TwinBert       fc [n x n], fc_b [1 x n], out [1 x n], out_b [1 x 1]
///   FinalNoCosEuc  w1 [2n x n], w2 [n x 2n], w_out [1 x n]
///   Final          w1 [2n x n], w2 [n x 2n], w_out [1 x n+2]
std::vector<ParamSpec> interaction_param_specs(InteractionVariant variant, std::size_t n,
                                               const std::string& prefix = "interaction/");

/// Differentiable relevance score of (e_q, e_d) as a 1 x 1 tensor.
template <typename T, typename PS>
Var interaction_score(Tape<T>& t, PS& ps, InteractionVariant variant, Var eq, Var ed,
                      DropoutContext& drop, const std::string& prefix = "interaction/")
{
    if (t.shape(eq) != t.shape(ed)) {
        throw NumericError("interaction: embedding shapes " + t.shape(eq).str() + " and " + t.shape(ed).str());
    }
    auto p = [&](const char* name) { return t.param(ps.get(prefix + name)); };
    switch (variant) {
    case InteractionVariant::Cosine:
        return t.cosine_similarity(eq, ed);
    case InteractionVariant::SingleHidden: {
        Var h = t.linear(t.concat_cols({eq, ed}), p("proj"), p("proj_b"));
        Var feats = t.concat_cols({h, t.euclidean_distance(eq, ed), t.cosine_similarity(eq, ed)});
        return t.sigmoid(t.linear(feats, p("out"), p("out_b")));
    }
    case InteractionVariant::TwinBert: {
        Var m = t.maximum(eq, ed);
        Var h = t.add(t.gelu(t.linear(m, p("fc"), p("fc_b"))), m);
        return t.sigmoid(t.linear(h, p("out"), p("out_b")));
    }
    case InteractionVariant::FinalNoCosEuc:
    case InteractionVariant::Final: {
        Var m = t.maximum(eq, ed);
        Var h1 = t.dropout(t.gelu(t.matmul_bt(m, p("w1"))), kInteractionDropout, drop.next(), drop.train);
        Var h2 = t.add(t.gelu(t.matmul_bt(h1, p("w2"))), m);
        Var h3 = variant == InteractionVariant::Final
                     ? t.concat_cols({h2, t.cosine_similarity(eq, ed), t.euclidean_distance(eq, ed)})
                     : h2;
        return t.tanh(t.matmul_bt(h3, p("w_out")));
    }
    }
    throw UsageError("unknown interaction variant");
}

/// Frozen, allocation-free float scorer for inference. Matches
/// interaction_score in eval mode.
class InteractionScorer {
  public:
    InteractionScorer() = default;
    InteractionScorer(InteractionVariant variant, std::size_t dim, const ParamSet<float>& params,
                      const std::string& prefix = "interaction/");

    InteractionVariant variant() const { return variant_; }
    std::size_t dim() const { return dim_; }

    float score(std::span<const float> eq, std::span<const float> ed) const;

  private:
    friend class QuantizedInteraction;
    InteractionVariant variant_ = InteractionVariant::Cosine;
    std::size_t dim_ = 0;
    std::vector<float> a_;      // proj / fc / w1
    std::vector<float> a_b_;    // bias of a_ (sigmoid variants)
    std::vector<float> b_;      // w2 (final variants)
    std::vector<float> out_;    // out / w_out
    float out_b_ = 0.0F;
};

/// Reduced-precision scorer for the final variants: int8 weights with
/// per-row scales, int8 activations with per-vector scales, and a table
/// lookup GELU.
class QuantizedInteraction {
  public:
    explicit QuantizedInteraction(const InteractionScorer& full);

    std::size_t dim() const { return dim_; }
    float score(std::span<const float> eq, std::span<const float> ed) const;

  private:
    InteractionVariant variant_;
    std::size_t dim_;
    /// int8 weights as int16 column pairs in blocks of 16 rows.
    struct Packed {
        std::size_t rows = 0;
        std::size_t cols = 0;
        std::vector<std::int16_t> data;
        std::vector<float> scale;

        void matvec(const std::int8_t* x, std::int32_t* out) const;
    };

    Packed w1_;
    Packed w2_;
    std::vector<float> out_;
};

/// Exact-erf GELU sampled on a fine grid with linear interpolation.
float gelu_table(float x);

}  // namespace siamrank

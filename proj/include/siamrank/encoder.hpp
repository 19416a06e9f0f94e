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
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "siamrank/tensor.hpp"
#include "siamrank/tokenizer.hpp"

namespace siamrank {

struct EncoderConfig {
    std::size_t layers = 2;
    std::size_t hidden = 64;
    std::size_t heads = 2;
    std::size_t ff_dim = 256;
    std::size_t vocab_size = 2000;
    std::size_t max_pos = kDefaultMaxLen;
    double dropout_p = 0.1;
    /// Layer weighting covers the embedding output plus every block output
    /// when true, block outputs only when false.
    bool weight_embedding_layer = true;

    void validate() const;
    std::size_t weighted_layers() const { return layers + (weight_embedding_layer ? 1 : 0); }
    bool operator==(const EncoderConfig&) const = default;
};

enum class Pooling { Cls, MeanTokens, MaxTokens };

std::string_view to_string(Pooling pooling);
Pooling parse_pooling(std::string_view name);

enum class Init { Normal, Zeros, Ones };

struct ParamSpec {
    std::string name;
    Shape shape;
    Init init;
};

std::vector<ParamSpec> encoder_param_specs(const EncoderConfig& cfg, const std::string& prefix = "encoder/");

/// Truncated normal (resampled outside +-2 sigma) for Normal specs, zeros for
/// biases and ones for layer-norm gains. Deterministic per seed.
ParamSet<float> init_params(const std::vector<ParamSpec>& specs, std::uint64_t seed, double sigma = 0.02);

ParamSet<float> init_weights(const EncoderConfig& cfg, std::uint64_t seed, double sigma = 0.02);

/// Dropout seeds for one forward pass: every call site draws the next
/// counter value.
struct DropoutContext {
    bool train = false;
    double p = 0.0;
    std::uint64_t seed = 0;
    std::uint64_t counter = 0;

    std::uint64_t next() { return splitmix64(seed ^ splitmix64(++counter)); }
};

/// How the pooled vector mixes layers. `logits` is the bound 1 x K row of
/// learned weights; `forced` bypasses it with fixed mixing weights.
template <typename T>
struct LayerMix {
    std::optional<Var> logits;
    std::optional<std::vector<T>> forced;

    bool active() const { return logits.has_value() || forced.has_value(); }
};

namespace detail {

template <typename T, typename PS>
Var bind_param(Tape<T>& t, PS& ps, const std::string& name)
{
    return t.param(ps.get(name));
}

}  // namespace detail

/// Embeds one token sequence into an n-dimensional vector.
///
/// Token + learned position + segment embeddings and a layer norm feed L pre-norm
/// blocks (masked multi-head self-attention, GELU feed-forward, residuals).
/// Keys past seq.content_length() are masked, so trailing padding has no
/// effect on real positions. With an active LayerMix the pooled position(s)
/// are a softmax-weighted sum over layer outputs; a final layer norm follows.
/// A const ParamSet binds the weights without gradients.
template <typename T, typename PS>
Var encode_sequence(Tape<T>& t, PS& ps, const EncoderConfig& cfg, const TokenSequence& seq,
                    Pooling pooling, const LayerMix<T>& mix, DropoutContext& drop,
                    const std::string& prefix = "encoder/")
{
    using detail::bind_param;
    const std::size_t len = seq.size();
    if (len == 0) {
        throw UsageError("cannot encode an empty token sequence");
    }
    if (len > cfg.max_pos) {
        throw DataError("sequence of " + std::to_string(len) + " tokens exceeds max_pos " +
                        std::to_string(cfg.max_pos));
    }
    const std::size_t valid = std::max<std::size_t>(1, seq.content_length());

    std::vector<std::int32_t> positions(len);
    for (std::size_t i = 0; i < len; ++i) {
        positions[i] = static_cast<std::int32_t>(i);
    }
    std::vector<std::int32_t> segments = seq.segments;
    if (segments.size() != len) {
        segments.assign(len, 0);
    }
    Var x = t.add(t.gather_rows(bind_param(t, ps, prefix + "tok_emb"), seq.ids),
                  t.gather_rows(bind_param(t, ps, prefix + "pos_emb"), positions));
    x = t.add(x, t.gather_rows(bind_param(t, ps, prefix + "seg_emb"), segments));
    x = t.layer_norm(x, bind_param(t, ps, prefix + "emb_ln/g"), bind_param(t, ps, prefix + "emb_ln/b"));
    x = t.dropout(x, drop.p, drop.next(), drop.train);

    std::vector<Var> outputs{x};
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        const std::string lp = prefix + "layer" + std::to_string(l) + "/";
        Var h = t.layer_norm(x, bind_param(t, ps, lp + "ln1/g"), bind_param(t, ps, lp + "ln1/b"));
        Var q = t.linear(h, bind_param(t, ps, lp + "attn/wq"), bind_param(t, ps, lp + "attn/bq"));
        Var k = t.linear(h, bind_param(t, ps, lp + "attn/wk"), bind_param(t, ps, lp + "attn/bk"));
        Var v = t.linear(h, bind_param(t, ps, lp + "attn/wv"), bind_param(t, ps, lp + "attn/bv"));
        Var a = t.attention(q, k, v, cfg.heads, valid);
        a = t.linear(a, bind_param(t, ps, lp + "attn/wo"), bind_param(t, ps, lp + "attn/bo"));
        x = t.add(x, t.dropout(a, drop.p, drop.next(), drop.train));

        h = t.layer_norm(x, bind_param(t, ps, lp + "ln2/g"), bind_param(t, ps, lp + "ln2/b"));
        h = t.gelu(t.linear(h, bind_param(t, ps, lp + "ff/w1"), bind_param(t, ps, lp + "ff/b1")));
        h = t.linear(h, bind_param(t, ps, lp + "ff/w2"), bind_param(t, ps, lp + "ff/b2"));
        x = t.add(x, t.dropout(h, drop.p, drop.next(), drop.train));
        outputs.push_back(x);
    }

    // Pooling only ever needs row 0 for CLS, so slice before mixing.
    auto pick = [&](Var layer_out) { return pooling == Pooling::Cls ? t.slice_rows(layer_out, 0, 1) : layer_out; };
    Var combined;
    if (mix.active()) {
        std::vector<Var> parts;
        std::size_t first = cfg.weight_embedding_layer ? 0 : 1;
        for (std::size_t l = first; l < outputs.size(); ++l) {
            parts.push_back(pick(outputs[l]));
        }
        Var weights = mix.forced ? t.constant({1, parts.size()}, *mix.forced) : t.softmax_rows(*mix.logits);
        combined = t.weighted_sum(parts, weights);
    } else {
        combined = pick(outputs.back());
    }
    combined = t.layer_norm(combined, bind_param(t, ps, prefix + "final_ln/g"), bind_param(t, ps, prefix + "final_ln/b"));
    switch (pooling) {
    case Pooling::Cls:
        return combined;
    case Pooling::MeanTokens:
        return t.mean_rows(combined, valid);
    case Pooling::MaxTokens:
        return t.max_rows(combined, valid);
    }
    return combined;
}

/// Flat key=value text form used next to checkpoints.
std::map<std::string, std::string> to_key_values(const EncoderConfig& cfg);
EncoderConfig encoder_config_from(const std::map<std::string, std::string>& kv);

}  // namespace siamrank

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

#include "siamrank/encoder.hpp"

#include <cmath>

#include "siamrank/config.hpp"

namespace siamrank {

void EncoderConfig::validate() const
{
    if (layers == 0 || hidden == 0 || heads == 0 || ff_dim == 0 || vocab_size < 4 || max_pos < 2) {
        throw UsageError("encoder config: all sizes must be positive");
    }
    if (hidden % heads != 0) {
        throw UsageError("encoder config: hidden " + std::to_string(hidden) + " not divisible by heads " +
                         std::to_string(heads));
    }
    if (!(dropout_p >= 0.0 && dropout_p < 1.0)) {
        throw UsageError("encoder config: dropout must lie in [0,1)");
    }
}

std::string_view to_string(Pooling pooling)
{
    switch (pooling) {
    case Pooling::Cls:
        return "cls";
    case Pooling::MeanTokens:
        return "mean";
    case Pooling::MaxTokens:
        return "max";
    }
    return "cls";
}

Pooling parse_pooling(std::string_view name)
{
    if (name == "cls") {
        return Pooling::Cls;
    }
    if (name == "mean") {
        return Pooling::MeanTokens;
    }
    if (name == "max") {
        return Pooling::MaxTokens;
    }
    throw UsageError("unknown pooling '" + std::string(name) + "'");
}

std::vector<ParamSpec> encoder_param_specs(const EncoderConfig& cfg, const std::string& prefix)
{
    cfg.validate();
    const std::size_t n = cfg.hidden;
    std::vector<ParamSpec> specs{
        {prefix + "tok_emb", {cfg.vocab_size, n}, Init::Normal},
        {prefix + "pos_emb", {cfg.max_pos, n}, Init::Normal},
        {prefix + "seg_emb", {2, n}, Init::Normal},
        {prefix + "emb_ln/g", {1, n}, Init::Ones},
        {prefix + "emb_ln/b", {1, n}, Init::Zeros},
    };
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        const std::string lp = prefix + "layer" + std::to_string(l) + "/";
        specs.push_back({lp + "ln1/g", {1, n}, Init::Ones});
        specs.push_back({lp + "ln1/b", {1, n}, Init::Zeros});
        for (const char* m : {"q", "k", "v", "o"}) {
            specs.push_back({lp + "attn/w" + m, {n, n}, Init::Normal});
            specs.push_back({lp + "attn/b" + m, {1, n}, Init::Zeros});
        }
        specs.push_back({lp + "ln2/g", {1, n}, Init::Ones});
        specs.push_back({lp + "ln2/b", {1, n}, Init::Zeros});
        specs.push_back({lp + "ff/w1", {cfg.ff_dim, n}, Init::Normal});
        specs.push_back({lp + "ff/b1", {1, cfg.ff_dim}, Init::Zeros});
        specs.push_back({lp + "ff/w2", {n, cfg.ff_dim}, Init::Normal});
        specs.push_back({lp + "ff/b2", {1, n}, Init::Zeros});
    }
    specs.push_back({prefix + "final_ln/g", {1, n}, Init::Ones});
    specs.push_back({prefix + "final_ln/b", {1, n}, Init::Zeros});
    return specs;
}

ParamSet<float> init_params(const std::vector<ParamSpec>& specs, std::uint64_t seed, double sigma)
{
    ParamSet<float> params;
    Rng rng(seed);
    for (const auto& spec : specs) {
        auto& p = params.add(spec.name, spec.shape);
        switch (spec.init) {
        case Init::Zeros:
            break;
        case Init::Ones:
            std::fill(p.value.begin(), p.value.end(), 1.0F);
            break;
        case Init::Normal:
            for (auto& x : p.value) {
                double z = rng.normal();
                while (std::abs(z) > 2.0) {
                    z = rng.normal();
                }
                x = static_cast<float>(z * sigma);
            }
            break;
        }
    }
    return params;
}

ParamSet<float> init_weights(const EncoderConfig& cfg, std::uint64_t seed, double sigma)
{
    return init_params(encoder_param_specs(cfg), seed, sigma);
}

std::map<std::string, std::string> to_key_values(const EncoderConfig& cfg)
{
    return {
        {"encoder.layers", std::to_string(cfg.layers)},
        {"encoder.hidden", std::to_string(cfg.hidden)},
        {"encoder.heads", std::to_string(cfg.heads)},
        {"encoder.ff_dim", std::to_string(cfg.ff_dim)},
        {"encoder.vocab_size", std::to_string(cfg.vocab_size)},
        {"encoder.max_pos", std::to_string(cfg.max_pos)},
        {"encoder.dropout_p", format_double(cfg.dropout_p)},
        {"encoder.weight_embedding_layer", cfg.weight_embedding_layer ? "true" : "false"},
    };
}

EncoderConfig encoder_config_from(const std::map<std::string, std::string>& kv)
{
    KeyValues cfg(kv);
    EncoderConfig out;
    out.layers = cfg.get_size("encoder.layers", out.layers);
    out.hidden = cfg.get_size("encoder.hidden", out.hidden);
    out.heads = cfg.get_size("encoder.heads", out.heads);
    out.ff_dim = cfg.get_size("encoder.ff_dim", out.ff_dim);
    out.vocab_size = cfg.get_size("encoder.vocab_size", out.vocab_size);
    out.max_pos = cfg.get_size("encoder.max_pos", out.max_pos);
    out.dropout_p = cfg.get_double("encoder.dropout_p", out.dropout_p);
    out.weight_embedding_layer = cfg.get_bool("encoder.weight_embedding_layer", out.weight_embedding_layer);
    out.validate();
    return out;
}

}  // namespace siamrank

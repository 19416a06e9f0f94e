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

#include <string>
#include <vector>

#include "grad_check.hpp"
#include "siamrank/models.hpp"

namespace siamrank::testing {

inline Vocab tiny_vocab()
{
    std::vector<std::string> corpus = {"red fox jumps", "blue fox sleeps", "red car drives fast",
                                       "title: blue car url: cars.cz bte: fast red fox"};
    std::vector<std::string> many;
    for (int i = 0; i < 3; ++i) {
        many.insert(many.end(), corpus.begin(), corpus.end());
    }
    return train_vocab(many, 60, 2);
}

inline EncoderConfig tiny_encoder()
{
    EncoderConfig ec;
    ec.layers = 2;
    ec.hidden = 8;
    ec.heads = 2;
    ec.ff_dim = 12;
    ec.max_pos = 32;
    ec.dropout_p = 0.1;
    return ec;
}

/// Worst gradient error of a whole model over sampled parameter elements.
/// Parameters are redrawn with a wide spread so gradients are far from zero.
template <typename Forward>
double check_params(ParamSet<float> weights, std::uint64_t seed, Forward&& forward, std::size_t per_param = 6)
{
    Rng rng(seed);
    ParamSet<double> ps = weights.cast<double>();
    for (auto& p : ps.all()) {
        for (auto& x : p.value) {
            x = 0.4 * rng.normal();
        }
    }
    auto eval = [&](bool grad) {
        Tape<double> t(grad);
        DropoutContext drop{true, 0.1, seed, 0};
        Var out = forward(t, ps, drop);
        const double v = t.scalar(out);
        if (grad) {
            t.backward(out);
        }
        return v;
    };
    ps.zero_grad();
    eval(true);
    double worst = 0.0;
    for (auto& p : ps.all()) {
        const std::size_t stride = std::max<std::size_t>(1, p.value.size() / per_param);
        for (std::size_t i = rng.uniform(stride); i < p.value.size(); i += stride) {
            const double old = p.value[i];
            p.value[i] = old + kFiniteStep;
            const double up = eval(false);
            p.value[i] = old - kFiniteStep;
            const double down = eval(false);
            p.value[i] = old;
            worst = std::max(worst, grad_error((up - down) / (2 * kFiniteStep), p.grad[i]));
        }
    }
    return worst;
}

inline double check_query_doc(std::uint64_t seed, Pooling pooling)
{
    auto model = QueryDocModel::create(tiny_encoder(), tiny_vocab(), seed, 32, pooling);
    const auto seq = encode_pair("red fox", "title: blue car bte: fast fox", model.vocab(), 32);
    return check_params(model.params(), seed, [&](Tape<double>& t, ParamSet<double>& ps, DropoutContext& drop) {
        return t.mse_loss(model.forward(t, ps, seq, drop), 0.75);
    });
}

inline double check_siamese(std::uint64_t seed, InteractionVariant variant, Pooling pooling, bool layer_weighting)
{
    SiameseModel::Options o;
    o.variant = variant;
    o.pooling = pooling;
    o.layer_weighting = layer_weighting;
    o.max_len = 32;
    auto model = SiameseModel::create(tiny_encoder(), tiny_vocab(), o, seed, seed);
    const auto q = model.tokenize("red fox");
    const auto d = model.tokenize("title: blue car bte: fast fox");
    return check_params(model.params(), seed, [&](Tape<double>& t, ParamSet<double>& ps, DropoutContext& drop) {
        return t.mse_loss(model.forward(t, ps, q, d, drop), 0.5);
    });
}

}  // namespace siamrank::testing

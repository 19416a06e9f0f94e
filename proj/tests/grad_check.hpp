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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "siamrank/common.hpp"
#include "siamrank/tensor.hpp"

namespace siamrank::testing {

/// Denominator floor of the relative error: gradients that are both below
/// it in magnitude compare by absolute difference.
inline constexpr double kGradFloor = 1e-4;
inline constexpr double kGradTolerance = 1e-4;
inline constexpr double kFiniteStep = 1e-6;

inline double grad_error(double numeric, double analytic)
{
    return std::abs(numeric - analytic) / std::max(kGradFloor, std::abs(numeric) + std::abs(analytic));
}

struct GradCase {
    std::string name;
    std::function<std::vector<Shape>(Rng&)> shapes;
    std::function<Var(Tape<double>&, const std::vector<Var>&)> build;
};

/// Worst error over every input element. The output is reduced to a scalar
/// with fixed random weights.
inline double check_case(const GradCase& c, std::uint64_t seed)
{
    Rng rng(seed);
    const auto shapes = c.shapes(rng);
    std::vector<std::vector<double>> inputs;
    for (const auto& s : shapes) {
        std::vector<double> v(s.numel());
        for (auto& x : v) {
            x = rng.normal();
        }
        inputs.push_back(std::move(v));
    }
    std::vector<double> weights;
    auto eval = [&](bool grad, std::vector<std::vector<double>>* grads) {
        Tape<double> t(grad);
        std::vector<Var> leaves;
        for (std::size_t i = 0; i < shapes.size(); ++i) {
            leaves.push_back(t.leaf(shapes[i], inputs[i]));
        }
        Var out = c.build(t, leaves);
        if (weights.empty()) {
            Rng wr(splitmix64(seed));
            weights.resize(t.shape(out).numel());
            for (auto& w : weights) {
                w = wr.normal();
            }
        }
        Var loss = t.sum(t.mul(out, t.constant(t.shape(out), weights)));
        const double value = t.scalar(loss);
        if (grad) {
            t.backward(loss);
            for (std::size_t i = 0; i < leaves.size(); ++i) {
                auto g = t.grad(leaves[i]);
                grads->emplace_back(g.begin(), g.end());
            }
        }
        return value;
    };
    std::vector<std::vector<double>> analytic;
    eval(true, &analytic);
    double worst = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        for (std::size_t j = 0; j < inputs[i].size(); ++j) {
            const double old = inputs[i][j];
            inputs[i][j] = old + kFiniteStep;
            const double up = eval(false, nullptr);
            inputs[i][j] = old - kFiniteStep;
            const double down = eval(false, nullptr);
            inputs[i][j] = old;
            worst = std::max(worst, grad_error((up - down) / (2 * kFiniteStep), analytic[i][j]));
        }
    }
    return worst;
}

inline std::size_t dim(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.uniform(hi - lo + 1); }

/// One case per differentiable tape operation.
inline std::vector<GradCase> op_cases()
{
    using S = std::vector<Shape>;
    using L = const std::vector<Var>&;
    std::vector<GradCase> c;
    auto same2 = [](Rng& r) {
        Shape s{dim(r, 1, 4), dim(r, 1, 6)};
        return S{s, s};
    };
    auto one = [](Rng& r) { return S{{dim(r, 1, 4), dim(r, 1, 6)}}; };
    auto row2 = [](Rng& r) {
        Shape s{1, dim(r, 2, 8)};
        return S{s, s};
    };
    c.push_back({"matmul",
                 [](Rng& r) {
                     auto m = dim(r, 1, 4), k = dim(r, 1, 5), n = dim(r, 1, 4);
                     return S{{m, k}, {k, n}};
                 },
                 [](Tape<double>& t, L v) { return t.matmul(v[0], v[1]); }});
    c.push_back({"matmul_bt",
                 [](Rng& r) {
                     auto m = dim(r, 1, 4), k = dim(r, 1, 5), n = dim(r, 1, 4);
                     return S{{m, k}, {n, k}};
                 },
                 [](Tape<double>& t, L v) { return t.matmul_bt(v[0], v[1]); }});
    c.push_back({"add", same2, [](Tape<double>& t, L v) { return t.add(v[0], v[1]); }});
    c.push_back({"add_row_broadcast",
                 [](Rng& r) {
                     auto m = dim(r, 2, 4), n = dim(r, 1, 6);
                     return S{{m, n}, {1, n}};
                 },
                 [](Tape<double>& t, L v) { return t.add(v[0], v[1]); }});
    c.push_back({"sub", same2, [](Tape<double>& t, L v) { return t.sub(v[0], v[1]); }});
    c.push_back({"mul", same2, [](Tape<double>& t, L v) { return t.mul(v[0], v[1]); }});
    c.push_back({"scale", one, [](Tape<double>& t, L v) { return t.scale(v[0], -1.7); }});
    c.push_back({"maximum", same2, [](Tape<double>& t, L v) { return t.maximum(v[0], v[1]); }});
    c.push_back({"concat_cols",
                 [](Rng& r) {
                     auto m = dim(r, 1, 3);
                     return S{{m, dim(r, 1, 4)}, {m, dim(r, 1, 4)}, {m, dim(r, 1, 4)}};
                 },
                 [](Tape<double>& t, L v) { return t.concat_cols({v[0], v[1], v[2]}); }});
    c.push_back({"slice_cols", [](Rng& r) { return S{{dim(r, 1, 3), dim(r, 3, 6)}}; },
                 [](Tape<double>& t, L v) { return t.slice_cols(v[0], 1, 3); }});
    c.push_back({"slice_rows", [](Rng& r) { return S{{dim(r, 3, 5), dim(r, 1, 4)}}; },
                 [](Tape<double>& t, L v) { return t.slice_rows(v[0], 1, 3); }});
    c.push_back({"gather_rows", [](Rng& r) { return S{{dim(r, 3, 5), dim(r, 1, 4)}}; },
                 [](Tape<double>& t, L v) {
                     static const std::int32_t ids[] = {2, 0, 2, 1};
                     return t.gather_rows(v[0], ids);
                 }});
    c.push_back({"gelu", one, [](Tape<double>& t, L v) { return t.gelu(v[0]); }});
    c.push_back({"tanh", one, [](Tape<double>& t, L v) { return t.tanh(v[0]); }});
    c.push_back({"sigmoid", one, [](Tape<double>& t, L v) { return t.sigmoid(v[0]); }});
    c.push_back({"dropout", one, [](Tape<double>& t, L v) { return t.dropout(v[0], 0.3, 77, true); }});
    c.push_back({"softmax_rows", one, [](Tape<double>& t, L v) { return t.softmax_rows(v[0]); }});
    c.push_back({"softmax_rows_masked", [](Rng& r) { return S{{dim(r, 1, 3), dim(r, 3, 6)}}; },
                 [](Tape<double>& t, L v) { return t.softmax_rows(v[0], 2); }});
    c.push_back({"layer_norm",
                 [](Rng& r) {
                     auto m = dim(r, 1, 4), n = dim(r, 2, 6);
                     return S{{m, n}, {1, n}, {1, n}};
                 },
                 [](Tape<double>& t, L v) { return t.layer_norm(v[0], v[1], v[2]); }});
    c.push_back({"cosine_similarity", row2, [](Tape<double>& t, L v) { return t.cosine_similarity(v[0], v[1]); }});
    c.push_back(
        {"euclidean_distance", row2, [](Tape<double>& t, L v) { return t.euclidean_distance(v[0], v[1]); }});
    c.push_back({"mse_loss", [](Rng&) { return S{{1, 1}}; },
                 [](Tape<double>& t, L v) { return t.mse_loss(v[0], 0.3); }});
    c.push_back({"sum", one, [](Tape<double>& t, L v) { return t.sum(v[0]); }});
    c.push_back({"mean_rows", [](Rng& r) { return S{{dim(r, 2, 5), dim(r, 1, 4)}}; },
                 [](Tape<double>& t, L v) { return t.mean_rows(v[0], 2); }});
    c.push_back({"max_rows", [](Rng& r) { return S{{dim(r, 2, 5), dim(r, 1, 4)}}; },
                 [](Tape<double>& t, L v) { return t.max_rows(v[0], 2); }});
    c.push_back({"weighted_sum",
                 [](Rng& r) {
                     Shape s{dim(r, 1, 3), dim(r, 1, 4)};
                     return S{s, s, s, {1, 3}};
                 },
                 [](Tape<double>& t, L v) { return t.weighted_sum({v[0], v[1], v[2]}, t.softmax_rows(v[3])); }});
    c.push_back({"attention",
                 [](Rng& r) {
                     Shape s{dim(r, 2, 5), 2 * dim(r, 1, 3)};
                     return S{s, s, s};
                 },
                 [](Tape<double>& t, L v) {
                     const auto len = t.shape(v[0]).rows;
                     return t.attention(v[0], v[1], v[2], 2, len - 1);
                 }});
    return c;
}

}  // namespace siamrank::testing

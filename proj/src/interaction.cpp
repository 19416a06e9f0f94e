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

#include "siamrank/interaction.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include <Eigen/Core>

#if defined(__AVX512BW__)
#include <immintrin.h>
#endif

namespace siamrank {

namespace {

using RowMatF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using VecF = Eigen::Matrix<float, Eigen::Dynamic, 1>;

float cosine(std::span<const float> a, std::span<const float> b)
{
    float dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    if (na < 1e-12F || nb < 1e-12F) {
        return 0.0F;
    }
    return dot / (na * nb);
}

float euclid(std::span<const float> a, std::span<const float> b)
{
    float sq = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        float d = a[i] - b[i];
        sq += d * d;
    }
    return std::sqrt(sq);
}

float sigmoid(float x) { return 1.0F / (1.0F + std::exp(-x)); }

struct Scratch {
    std::vector<float> m;
    std::vector<float> h1;
    std::vector<float> h2;
    std::vector<std::int8_t> q;
    std::vector<std::int32_t> acc;
};

Scratch& scratch(std::size_t n)
{
    thread_local Scratch s;
    if (s.m.size() < n) {
        s.m.resize(n);
        s.h2.resize(n);
    }
    if (s.h1.size() < 2 * n) {
        s.h1.resize(2 * n);
        s.q.resize(2 * n);
        s.acc.resize(2 * n);
    }
    return s;
}

}  // namespace

std::string_view to_string(InteractionVariant variant)
{
    switch (variant) {
    case InteractionVariant::Cosine:
        return "cosine";
    case InteractionVariant::SingleHidden:
        return "single_hidden";
    case InteractionVariant::TwinBert:
        return "twinbert";
    case InteractionVariant::FinalNoCosEuc:
        return "final_no_coseuc";
    case InteractionVariant::Final:
        return "final";
    }
    return "final";
}

InteractionVariant parse_interaction(std::string_view name)
{
    for (auto v : kAllInteractionVariants) {
        if (to_string(v) == name) {
            return v;
        }
    }
    throw UsageError("unknown interaction variant '" + std::string(name) + "'");
}

std::vector<ParamSpec> interaction_param_specs(InteractionVariant variant, std::size_t n, const std::string& prefix)
{
    switch (variant) {
    case InteractionVariant::Cosine:
        return {};
    case InteractionVariant::SingleHidden:
        return {{prefix + "proj", {3, 2 * n}, Init::Normal},
                {prefix + "proj_b", {1, 3}, Init::Zeros},
                {prefix + "out", {1, 5}, Init::Normal},
                {prefix + "out_b", {1, 1}, Init::Zeros}};
    case InteractionVariant::TwinBert:
        return {{prefix + "fc", {n, n}, Init::Normal},
                {prefix + "fc_b", {1, n}, Init::Zeros},
                {prefix + "out", {1, n}, Init::Normal},
                {prefix + "out_b", {1, 1}, Init::Zeros}};
    case InteractionVariant::FinalNoCosEuc:
        return {{prefix + "w1", {2 * n, n}, Init::Normal},
                {prefix + "w2", {n, 2 * n}, Init::Normal},
                {prefix + "w_out", {1, n}, Init::Normal}};
    case InteractionVariant::Final:
        return {{prefix + "w1", {2 * n, n}, Init::Normal},
                {prefix + "w2", {n, 2 * n}, Init::Normal},
                {prefix + "w_out", {1, n + 2}, Init::Normal}};
    }
    return {};
}

InteractionScorer::InteractionScorer(InteractionVariant variant, std::size_t dim, const ParamSet<float>& params,
                                     const std::string& prefix)
    : variant_(variant), dim_(dim)
{
    auto take = [&](const char* name, Shape expected) {
        const auto& p = params.get(prefix + name);
        if (p.shape != expected) {
            throw NumericError("interaction parameter " + p.name + " has shape " + p.shape.str() + ", expected " +
                               expected.str());
        }
        return p.value;
    };
    const std::size_t n = dim;
    switch (variant) {
    case InteractionVariant::Cosine:
        break;
    case InteractionVariant::SingleHidden:
        a_ = take("proj", {3, 2 * n});
        a_b_ = take("proj_b", {1, 3});
        out_ = take("out", {1, 5});
        out_b_ = take("out_b", {1, 1})[0];
        break;
    case InteractionVariant::TwinBert:
        a_ = take("fc", {n, n});
        a_b_ = take("fc_b", {1, n});
        out_ = take("out", {1, n});
        out_b_ = take("out_b", {1, 1})[0];
        break;
    case InteractionVariant::FinalNoCosEuc:
        a_ = take("w1", {2 * n, n});
        b_ = take("w2", {n, 2 * n});
        out_ = take("w_out", {1, n});
        break;
    case InteractionVariant::Final:
        a_ = take("w1", {2 * n, n});
        b_ = take("w2", {n, 2 * n});
        out_ = take("w_out", {1, n + 2});
        break;
    }
}

float InteractionScorer::score(std::span<const float> eq, std::span<const float> ed) const
{
    const std::size_t n = dim_;
    if (eq.size() != n || ed.size() != n) {
        throw NumericError("interaction: embedding dims " + std::to_string(eq.size()) + " and " +
                           std::to_string(ed.size()) + ", expected " + std::to_string(n));
    }
    const auto ni = static_cast<Eigen::Index>(n);
    Scratch& s = scratch(n);
    switch (variant_) {
    case InteractionVariant::Cosine:
        return cosine(eq, ed);
    case InteractionVariant::SingleHidden: {
        float logit = out_b_;
        for (std::size_t r = 0; r < 3; ++r) {
            float h = a_b_[r];
            const float* row = a_.data() + r * 2 * n;
            for (std::size_t i = 0; i < n; ++i) {
                h += row[i] * eq[i] + row[n + i] * ed[i];
            }
            logit += out_[r] * h;
        }
        logit += out_[3] * euclid(eq, ed) + out_[4] * cosine(eq, ed);
        return sigmoid(logit);
    }
    case InteractionVariant::TwinBert: {
        for (std::size_t i = 0; i < n; ++i) {
            s.m[i] = std::max(eq[i], ed[i]);
        }
        Eigen::Map<VecF> h(s.h1.data(), ni);
        h.noalias() = Eigen::Map<const RowMatF>(a_.data(), ni, ni) * Eigen::Map<const VecF>(s.m.data(), ni);
        float logit = out_b_;
        for (std::size_t i = 0; i < n; ++i) {
            logit += out_[i] * (gelu_value(h[static_cast<Eigen::Index>(i)] + a_b_[i]) + s.m[i]);
        }
        return sigmoid(logit);
    }
    case InteractionVariant::FinalNoCosEuc:
    case InteractionVariant::Final: {
        for (std::size_t i = 0; i < n; ++i) {
            s.m[i] = std::max(eq[i], ed[i]);
        }
        Eigen::Map<VecF> h1(s.h1.data(), 2 * ni);
        h1.noalias() = Eigen::Map<const RowMatF>(a_.data(), 2 * ni, ni) * Eigen::Map<const VecF>(s.m.data(), ni);
        for (Eigen::Index i = 0; i < 2 * ni; ++i) {
            h1[i] = gelu_value(h1[i]);
        }
        Eigen::Map<VecF> h2(s.h2.data(), ni);
        h2.noalias() = Eigen::Map<const RowMatF>(b_.data(), ni, 2 * ni) * h1;
        float logit = 0;
        for (std::size_t i = 0; i < n; ++i) {
            logit += out_[i] * (gelu_value(h2[static_cast<Eigen::Index>(i)]) + s.m[i]);
        }
        if (variant_ == InteractionVariant::Final) {
            logit += out_[n] * cosine(eq, ed) + out_[n + 1] * euclid(eq, ed);
        }
        return std::tanh(logit);
    }
    }
    return 0.0F;
}

// ---------------------------------------------------------------------------

namespace {

constexpr float kGeluRange = 8.0F;
constexpr int kGeluSteps = 256;  // per unit
constexpr int kGeluSize = static_cast<int>(2 * kGeluRange) * kGeluSteps + 1;

const std::array<float, kGeluSize> kGeluTable = [] {
    std::array<float, kGeluSize> t{};
    for (int i = 0; i < kGeluSize; ++i) {
        t[static_cast<std::size_t>(i)] = static_cast<float>(gelu_value(static_cast<double>(i) / kGeluSteps - kGeluRange));
    }
    return t;
}();

}  // namespace

float gelu_table(float x)
{
    if (x <= -kGeluRange) {
        return 0.0F;
    }
    if (x >= kGeluRange) {
        return x;
    }
    float pos = (x + kGeluRange) * kGeluSteps;
    int i = static_cast<int>(pos);
    float frac = pos - static_cast<float>(i);
    const float lo = kGeluTable[static_cast<std::size_t>(i)];
    return lo + frac * (kGeluTable[static_cast<std::size_t>(i + 1)] - lo);
}

namespace {

/// Round half away from zero; input already within [-127, 127].
inline std::int8_t round_i8(float x)
{
    return static_cast<std::int8_t>(static_cast<int>(x + (x >= 0.0F ? 0.5F : -0.5F)));
}

constexpr std::size_t kBlockRows = 16;

void pack_rows(const std::vector<float>& w, std::size_t rows, std::size_t cols, std::vector<std::int16_t>& packed,
               std::vector<float>& scale)
{
    const std::size_t blocks = (rows + kBlockRows - 1) / kBlockRows;
    const std::size_t pairs = (cols + 1) / 2;
    packed.assign(blocks * pairs * kBlockRows * 2, 0);
    scale.assign(rows, 1.0F);
    for (std::size_t r = 0; r < rows; ++r) {
        float mx = 0;
        for (std::size_t c = 0; c < cols; ++c) {
            mx = std::max(mx, std::abs(w[r * cols + c]));
        }
        if (mx == 0.0F) {
            continue;
        }
        scale[r] = mx / 127.0F;
        const std::size_t blk = r / kBlockRows;
        const std::size_t lane = r % kBlockRows;
        for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t at = ((blk * pairs + c / 2) * kBlockRows + lane) * 2 + c % 2;
            packed[at] = round_i8(w[r * cols + c] / scale[r]);
        }
    }
}

/// Symmetric per-vector int8; returns the scale.
float quantize_vector(const float* x, std::size_t n, std::int8_t* q)
{
    float mx = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx = std::max(mx, std::abs(x[i]));
    }
    if (mx == 0.0F) {
        std::fill(q, q + n, std::int8_t{0});
        return 0.0F;
    }
    const float inv = 127.0F / mx;
    for (std::size_t i = 0; i < n; ++i) {
        q[i] = round_i8(x[i] * inv);
    }
    return mx / 127.0F;
}

}  // namespace

void QuantizedInteraction::Packed::matvec(const std::int8_t* x, std::int32_t* out) const
{
    const std::size_t blocks = (rows + kBlockRows - 1) / kBlockRows;
    const std::size_t pairs = (cols + 1) / 2;
    for (std::size_t blk = 0; blk < blocks; ++blk) {
        const std::int16_t* w = data.data() + blk * pairs * kBlockRows * 2;
        std::int32_t acc[kBlockRows] = {};
#if defined(__AVX512BW__)
        __m512i sum = _mm512_setzero_si512();
        for (std::size_t p = 0; p < pairs; ++p) {
            const std::int16_t x0 = x[2 * p];
            const std::int16_t x1 = 2 * p + 1 < cols ? x[2 * p + 1] : std::int16_t{0};
            const __m512i xv = _mm512_set1_epi32(static_cast<std::int32_t>(static_cast<std::uint16_t>(x0)) |
                                                 (static_cast<std::int32_t>(x1) << 16));
            const __m512i wv = _mm512_loadu_si512(w + p * kBlockRows * 2);
            sum = _mm512_add_epi32(sum, _mm512_madd_epi16(wv, xv));
        }
        _mm512_storeu_si512(acc, sum);
#else
        for (std::size_t p = 0; p < pairs; ++p) {
            const std::int32_t x0 = x[2 * p];
            const std::int32_t x1 = 2 * p + 1 < cols ? x[2 * p + 1] : 0;
            const std::int16_t* wp = w + p * kBlockRows * 2;
            for (std::size_t lane = 0; lane < kBlockRows; ++lane) {
                acc[lane] += wp[2 * lane] * x0 + wp[2 * lane + 1] * x1;
            }
        }
#endif
        const std::size_t n = std::min(kBlockRows, rows - blk * kBlockRows);
        std::copy(acc, acc + n, out + blk * kBlockRows);
    }
}


QuantizedInteraction::QuantizedInteraction(const InteractionScorer& full)
    : variant_(full.variant_), dim_(full.dim_), out_(full.out_)
{
    if (variant_ != InteractionVariant::Final && variant_ != InteractionVariant::FinalNoCosEuc) {
        throw UsageError("quantized interaction supports the final variants only, not " +
                         std::string(to_string(variant_)));
    }
    w1_.rows = 2 * dim_;
    w1_.cols = dim_;
    pack_rows(full.a_, w1_.rows, w1_.cols, w1_.data, w1_.scale);
    w2_.rows = dim_;
    w2_.cols = 2 * dim_;
    pack_rows(full.b_, w2_.rows, w2_.cols, w2_.data, w2_.scale);
}

float QuantizedInteraction::score(std::span<const float> eq, std::span<const float> ed) const
{
    const std::size_t n = dim_;
    if (eq.size() != n || ed.size() != n) {
        throw NumericError("quantized interaction: embedding dims " + std::to_string(eq.size()) + " and " +
                           std::to_string(ed.size()) + ", expected " + std::to_string(n));
    }
    Scratch& s = scratch(n);
    for (std::size_t i = 0; i < n; ++i) {
        s.m[i] = std::max(eq[i], ed[i]);
    }
    float sm = quantize_vector(s.m.data(), n, s.q.data());
    w1_.matvec(s.q.data(), s.acc.data());
    for (std::size_t r = 0; r < 2 * n; ++r) {
        s.h1[r] = gelu_table(static_cast<float>(s.acc[r]) * (w1_.scale[r] * sm));
    }
    float sh = quantize_vector(s.h1.data(), 2 * n, s.q.data());
    w2_.matvec(s.q.data(), s.acc.data());
    float logit = 0;
    for (std::size_t r = 0; r < n; ++r) {
        float pre = static_cast<float>(s.acc[r]) * (w2_.scale[r] * sh);
        logit += out_[r] * (gelu_table(pre) + s.m[r]);
    }
    if (variant_ == InteractionVariant::Final) {
        logit += out_[n] * cosine(eq, ed) + out_[n + 1] * euclid(eq, ed);
    }
    return std::tanh(logit);
}

}  // namespace siamrank

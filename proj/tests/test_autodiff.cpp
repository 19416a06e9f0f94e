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
#include <filesystem>

#include "grad_check.hpp"
#include "siamrank/optim.hpp"

using namespace siamrank;
using namespace siamrank::testing;

class OpGradient : public ::testing::TestWithParam<std::size_t> {};

TEST_P(OpGradient, MatchesCentralDifferences)
{
    const auto cases = op_cases();
    const auto& c = cases.at(GetParam());
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        EXPECT_LT(check_case(c, seed), kGradTolerance) << c.name << " seed " << seed;
    }
}

INSTANTIATE_TEST_SUITE_P(AllOps, OpGradient, ::testing::Range<std::size_t>(0, op_cases().size()),
                         [](const auto& info) { return op_cases()[info.param].name; });

TEST(Tape, DropoutIsIdentityInEvalMode)
{
    Tape<double> t;
    Var x = t.leaf({2, 3}, {1, 2, 3, 4, 5, 6});
    Var y = t.dropout(x, 0.5, 9, false);
    EXPECT_EQ(y.id, x.id);
}

TEST(Tape, DropoutPreservesExpectation)
{
    Tape<double> t(false);
    const std::size_t n = 200000;
    Var x = t.constant({1, n}, std::vector<double>(n, 1.0));
    Var y = t.dropout(x, 0.25, 3, true);
    double mean = 0;
    std::size_t zeros = 0;
    for (double v : t.value(y)) {
        mean += v;
        zeros += v == 0.0;
    }
    mean /= n;
    EXPECT_NEAR(mean, 1.0, 0.01);
    EXPECT_NEAR(static_cast<double>(zeros) / n, 0.25, 0.005);
    for (double v : t.value(y)) {
        EXPECT_TRUE(v == 0.0 || std::abs(v - 1.0 / 0.75) < 1e-12);
    }
}

TEST(Tape, DropoutIsDeterministicPerSeed)
{
    Tape<double> a(false), b(false);
    Var xa = a.constant({1, 64}, std::vector<double>(64, 1.0));
    Var xb = b.constant({1, 64}, std::vector<double>(64, 1.0));
    auto ya = a.value(a.dropout(xa, 0.5, 11, true));
    auto yb = b.value(b.dropout(xb, 0.5, 11, true));
    EXPECT_TRUE(std::equal(ya.begin(), ya.end(), yb.begin()));
}

TEST(Tape, SoftmaxRowsAreDistributions)
{
    Tape<double> t(false);
    Rng rng(4);
    std::vector<double> v(5 * 7);
    for (auto& x : v) {
        x = 10 * rng.normal();
    }
    Var s = t.softmax_rows(t.constant({5, 7}, v), 4);
    auto out = t.value(s);
    for (std::size_t r = 0; r < 5; ++r) {
        double sum = 0;
        for (std::size_t c = 0; c < 7; ++c) {
            EXPECT_GE(out[r * 7 + c], 0.0);
            if (c >= 4) {
                EXPECT_EQ(out[r * 7 + c], 0.0);
            }
            sum += out[r * 7 + c];
        }
        EXPECT_NEAR(sum, 1.0, 1e-12);
    }
}

TEST(Tape, ShapeMismatchThrows)
{
    Tape<double> t;
    Var a = t.leaf({2, 3}, std::vector<double>(6, 1.0));
    Var b = t.leaf({3, 2}, std::vector<double>(6, 1.0));
    EXPECT_THROW(t.mul(a, b), NumericError);
    EXPECT_THROW(t.matmul_bt(a, b), NumericError);
}

TEST(Tape, GradientsAccumulateIntoParams)
{
    ParamSet<double> ps;
    auto& w = ps.add("w", {1, 2});
    w.value = {2.0, -1.0};
    for (int rep = 0; rep < 2; ++rep) {
        Tape<double> t;
        Var x = t.constant({1, 2}, {3.0, 4.0});
        Var y = t.sum(t.mul(t.param(w), x));
        t.backward(y);
    }
    EXPECT_DOUBLE_EQ(w.grad[0], 6.0);
    EXPECT_DOUBLE_EQ(w.grad[1], 8.0);
}

TEST(Adam, FirstStepMovesByLearningRate)
{
    ParamSet<float> ps;
    auto& p = ps.add("p", {1, 3});
    p.value = {1.0F, 1.0F, 1.0F};
    p.grad = {0.5F, -2.0F, 0.0F};
    auto state = AdamState::for_params(ps);
    adam_step(ps, state, 0.01, {});
    EXPECT_NEAR(p.value[0], 0.99F, 1e-6);
    EXPECT_NEAR(p.value[1], 1.01F, 1e-6);
    EXPECT_FLOAT_EQ(p.value[2], 1.0F);
}

TEST(Adam, NonFiniteGradientThrows)
{
    ParamSet<float> ps;
    auto& p = ps.add("p", {1, 1});
    p.grad = {std::nanf("")};
    auto state = AdamState::for_params(ps);
    EXPECT_THROW(adam_step(ps, state, 0.01, {}), NumericError);
}

TEST(Checkpoint, RoundTripIsByteIdentical)
{
    ParamSet<float> ps;
    Rng rng(8);
    for (auto [name, shape] : {std::pair<const char*, Shape>{"a/w", {3, 4}}, {"a/b", {1, 4}}, {"z", {2, 2}}}) {
        auto& p = ps.add(name, shape);
        for (auto& x : p.value) {
            x = static_cast<float>(rng.normal());
        }
    }
    const auto bytes = serialize_checkpoint(ps);
    const auto back = deserialize_checkpoint(bytes);
    EXPECT_EQ(serialize_checkpoint(back), bytes);
    const auto path = std::filesystem::temp_directory_path() / "siamrank_ckpt_test.bin";
    save_checkpoint(ps, path);
    EXPECT_EQ(read_file_bytes(path), bytes);
    EXPECT_EQ(serialize_checkpoint(load_checkpoint(path)), bytes);
    std::filesystem::remove(path);
}

TEST(Checkpoint, TruncatedFileIsDataError)
{
    ParamSet<float> ps;
    ps.add("w", {2, 2});
    auto bytes = serialize_checkpoint(ps);
    bytes.resize(bytes.size() - 3);
    EXPECT_THROW(deserialize_checkpoint(bytes), DataError);
    std::vector<char> bad = {'N', 'O', 'P', 'E', 1, 0};
    EXPECT_THROW(deserialize_checkpoint(bad), DataError);
}

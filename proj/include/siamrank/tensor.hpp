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

// Dense row-major tensors (rank <= 2) with a reverse-mode tape. Templated on
// the scalar so the same graph runs in float for training and in double for
// finite-difference checks.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "siamrank/common.hpp"

namespace siamrank {

struct Shape {
    std::size_t rows = 0;
    std::size_t cols = 0;

    std::size_t numel() const { return rows * cols; }
    bool operator==(const Shape&) const = default;
    std::string str() const { return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]"; }
};

/// A named trainable matrix with its gradient accumulator.
template <typename T>
struct Param {
    std::string name;
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;
};

/// Ordered collection of parameters. Order is insertion order and is what
/// checkpoints serialize.
template <typename T>
class ParamSet {
  public:
    Param<T>& add(const std::string& name, Shape shape)
    {
        if (index_.contains(name)) {
            throw UsageError("duplicate parameter '" + name + "'");
        }
        index_.emplace(name, params_.size());
        params_.push_back({name, shape, std::vector<T>(shape.numel(), T(0)), std::vector<T>(shape.numel(), T(0))});
        return params_.back();
    }

    Param<T>& get(const std::string& name)
    {
        auto it = index_.find(name);
        if (it == index_.end()) {
            throw UsageError("missing parameter '" + name + "'");
        }
        return params_[it->second];
    }
    const Param<T>& get(const std::string& name) const { return const_cast<ParamSet*>(this)->get(name); }
    bool contains(const std::string& name) const { return index_.contains(name); }

    std::vector<Param<T>>& all() { return params_; }
    const std::vector<Param<T>>& all() const { return params_; }
    std::size_t size() const { return params_.size(); }

    void zero_grad()
    {
        for (auto& p : params_) {
            std::fill(p.grad.begin(), p.grad.end(), T(0));
        }
    }

    std::size_t numel() const
    {
        std::size_t n = 0;
        for (const auto& p : params_) {
            n += p.value.size();
        }
        return n;
    }

    template <typename U>
    ParamSet<U> cast() const
    {
        ParamSet<U> out;
        for (const auto& p : params_) {
            auto& q = out.add(p.name, p.shape);
            std::transform(p.value.begin(), p.value.end(), q.value.begin(), [](T x) { return static_cast<U>(x); });
        }
        return out;
    }

    /// Copies values of every parameter whose name starts with prefix.
    void copy_values_from(const ParamSet& other, const std::string& prefix)
    {
        for (auto& p : params_) {
            if (p.name.starts_with(prefix)) {
                const auto& src = other.get(p.name);
                if (src.shape != p.shape) {
                    throw UsageError("shape mismatch copying '" + p.name + "'");
                }
                p.value = src.value;
            }
        }
    }

  private:
    std::vector<Param<T>> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct Var {
    std::uint32_t id = 0;
};

template <typename T>
T gelu_value(T x)
{
    return T(0.5) * x * (T(1) + std::erf(x * T(0.5 * std::numbers::sqrt2)));
}

template <typename T>
T gelu_derivative(T x)
{
    const T cdf = T(0.5) * (T(1) + std::erf(x * T(0.5 * std::numbers::sqrt2)));
    const T pdf = std::exp(T(-0.5) * x * x) * T(0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
    return cdf + x * pdf;
}

/// Records forward operations; backward() replays them in reverse creation
/// order, so every node's gradient is complete before it propagates.
template <typename T>
class Tape {
    using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using Map = Eigen::Map<RowMat>;
    using CMap = Eigen::Map<const RowMat>;

    struct Node {
        Shape shape;
        std::vector<T> own_value;
        std::vector<T> own_grad;
        const T* value = nullptr;
        T* grad = nullptr;
        bool requires_grad = false;
        std::function<void(Tape&)> backward;
    };

  public:
    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool grad_enabled() const { return grad_enabled_; }
    std::size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

    Shape shape(Var v) const { return nodes_[v.id].shape; }
    std::span<const T> value(Var v) const { return {nodes_[v.id].value, nodes_[v.id].shape.numel()}; }
    T scalar(Var v) const { return nodes_[v.id].value[0]; }
    std::span<T> grad(Var v)
    {
        auto& n = nodes_[v.id];
        return n.grad ? std::span<T>(n.grad, n.shape.numel()) : std::span<T>();
    }

    // -- leaves -------------------------------------------------------------

    Var constant(Shape shape, std::vector<T> data)
    {
        if (data.size() != shape.numel()) {
            throw NumericError("constant: " + std::to_string(data.size()) + " values for shape " + shape.str());
        }
        return emplace(shape, std::move(data), false);
    }

    Var constant(std::span<const T> row)
    {
        return constant({1, row.size()}, std::vector<T>(row.begin(), row.end()));
    }

    /// Differentiable input owned by the tape (its gradient is readable).
    Var leaf(Shape shape, std::vector<T> data)
    {
        Var v = constant(shape, std::move(data));
        if (grad_enabled_) {
            auto& n = nodes_[v.id];
            n.own_grad.assign(shape.numel(), T(0));
            n.grad = n.own_grad.data();
            n.requires_grad = true;
        }
        return v;
    }

    /// Binds a parameter without copying; gradients accumulate in p.grad.
    Var param(Param<T>& p)
    {
        Node n;
        n.shape = p.shape;
        n.value = p.value.data();
        if (grad_enabled_) {
            if (p.grad.size() != p.value.size()) {
                p.grad.assign(p.value.size(), T(0));
            }
            n.grad = p.grad.data();
            n.requires_grad = true;
        }
        nodes_.push_back(std::move(n));
        return {static_cast<std::uint32_t>(nodes_.size() - 1)};
    }

    Var param(const Param<T>& p)
    {
        Node n;
        n.shape = p.shape;
        n.value = p.value.data();
        nodes_.push_back(std::move(n));
        return {static_cast<std::uint32_t>(nodes_.size() - 1)};
    }

    // -- linear algebra -----------------------------------------------------

    /// a[m x k] * b[k x n]
    Var matmul(Var a, Var b)
    {
        Shape sa = shape(a), sb = shape(b);
        if (sa.cols != sb.rows) {
            throw NumericError("matmul: shapes " + sa.str() + " and " + sb.str());
        }
        Shape so{sa.rows, sb.cols};
        std::vector<T> out(so.numel());
        Map(out.data(), so.rows, so.cols).noalias() = cmap(a) * cmap(b);
        return record(so, std::move(out), {a, b}, [a, b](Tape& t, Var o) {
            if (t.needs(a)) {
                t.gmap(a).noalias() += t.cgmap(o) * t.cmap(b).transpose();
            }
            if (t.needs(b)) {
                t.gmap(b).noalias() += t.cmap(a).transpose() * t.cgmap(o);
            }
        });
    }

    /// a[m x k] * b[n x k]^T -- linear layer with an [out x in] weight.
    Var matmul_bt(Var a, Var b)
    {
        Shape sa = shape(a), sb = shape(b);
        if (sa.cols != sb.cols) {
            throw NumericError("matmul_bt: shapes " + sa.str() + " and " + sb.str());
        }
        Shape so{sa.rows, sb.rows};
        std::vector<T> out(so.numel());
        Map(out.data(), so.rows, so.cols).noalias() = cmap(a) * cmap(b).transpose();
        return record(so, std::move(out), {a, b}, [a, b](Tape& t, Var o) {
            if (t.needs(a)) {
                t.gmap(a).noalias() += t.cgmap(o) * t.cmap(b);
            }
            if (t.needs(b)) {
                t.gmap(b).noalias() += t.cgmap(o).transpose() * t.cmap(a);
            }
        });
    }

    /// x * w^T + bias, bias broadcast over rows.
    Var linear(Var x, Var w, Var bias) { return add(matmul_bt(x, w), bias); }

    /// Elementwise sum; b may also be a single row broadcast over a's rows.
    Var add(Var a, Var b) { return add_scaled(a, b, T(1)); }
    Var sub(Var a, Var b) { return add_scaled(a, b, T(-1)); }

    Var mul(Var a, Var b)
    {
        Shape s = shape(a);
        require_same(s, shape(b), "mul");
        std::vector<T> out(s.numel());
        const T* pa = val(a);
        const T* pb = val(b);
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = pa[i] * pb[i];
        }
        return record(s, std::move(out), {a, b}, [a, b](Tape& t, Var o) {
            const T* go = t.gr(o);
            std::size_t n = t.shape(o).numel();
            if (t.needs(a)) {
                T* ga = t.gr(a);
                const T* pb = t.val(b);
                for (std::size_t i = 0; i < n; ++i) {
                    ga[i] += go[i] * pb[i];
                }
            }
            if (t.needs(b)) {
                T* gb = t.gr(b);
                const T* pa = t.val(a);
                for (std::size_t i = 0; i < n; ++i) {
                    gb[i] += go[i] * pa[i];
                }
            }
        });
    }

    Var scale(Var a, T factor)
    {
        return unary(a, [factor](T x) { return x * factor; }, [factor](T, T) { return factor; });
    }

    Var maximum(Var a, Var b)
    {
        Shape s = shape(a);
        require_same(s, shape(b), "maximum");
        std::vector<T> out(s.numel());
        const T* pa = val(a);
        const T* pb = val(b);
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = pa[i] > pb[i] ? pa[i] : pb[i];
        }
        return record(s, std::move(out), {a, b}, [a, b](Tape& t, Var o) {
            const T* go = t.gr(o);
            const T* pa = t.val(a);
            const T* pb = t.val(b);
            std::size_t n = t.shape(o).numel();
            for (std::size_t i = 0; i < n; ++i) {
                bool left = pa[i] > pb[i];
                if (left && t.needs(a)) {
                    t.gr(a)[i] += go[i];
                } else if (!left && t.needs(b)) {
                    t.gr(b)[i] += go[i];
                }
            }
        });
    }

    // -- shape ops ----------------------------------------------------------

    /// Concatenates along columns; all inputs share the row count.
    Var concat_cols(const std::vector<Var>& parts)
    {
        std::size_t rows = shape(parts.at(0)).rows;
        std::size_t cols = 0;
        for (Var p : parts) {
            if (shape(p).rows != rows) {
                throw NumericError("concat_cols: shapes " + shape(parts[0]).str() + " and " + shape(p).str());
            }
            cols += shape(p).cols;
        }
        Shape so{rows, cols};
        std::vector<T> out(so.numel());
        std::size_t offset = 0;
        for (Var p : parts) {
            std::size_t pc = shape(p).cols;
            const T* src = val(p);
            for (std::size_t r = 0; r < rows; ++r) {
                std::copy(src + r * pc, src + (r + 1) * pc, out.data() + r * cols + offset);
            }
            offset += pc;
        }
        return record(so, std::move(out), parts, [parts](Tape& t, Var o) {
            std::size_t rows = t.shape(o).rows;
            std::size_t cols = t.shape(o).cols;
            const T* go = t.gr(o);
            std::size_t offset = 0;
            for (Var p : parts) {
                std::size_t pc = t.shape(p).cols;
                if (t.needs(p)) {
                    T* gp = t.gr(p);
                    for (std::size_t r = 0; r < rows; ++r) {
                        for (std::size_t c = 0; c < pc; ++c) {
                            gp[r * pc + c] += go[r * cols + offset + c];
                        }
                    }
                }
                offset += pc;
            }
        });
    }

    /// Columns [begin, end).
    Var slice_cols(Var a, std::size_t begin, std::size_t end)
    {
        Shape s = shape(a);
        if (begin > end || end > s.cols) {
            throw NumericError("slice_cols: [" + std::to_string(begin) + "," + std::to_string(end) + ") of " + s.str());
        }
        Shape so{s.rows, end - begin};
        std::vector<T> out(so.numel());
        const T* src = val(a);
        for (std::size_t r = 0; r < s.rows; ++r) {
            std::copy(src + r * s.cols + begin, src + r * s.cols + end, out.data() + r * so.cols);
        }
        return record(so, std::move(out), {a}, [a, begin](Tape& t, Var o) {
            Shape s = t.shape(a);
            Shape so = t.shape(o);
            T* ga = t.gr(a);
            const T* go = t.gr(o);
            for (std::size_t r = 0; r < so.rows; ++r) {
                for (std::size_t c = 0; c < so.cols; ++c) {
                    ga[r * s.cols + begin + c] += go[r * so.cols + c];
                }
            }
        });
    }

    /// Rows [begin, end).
    Var slice_rows(Var a, std::size_t begin, std::size_t end)
    {
        Shape s = shape(a);
        if (begin > end || end > s.rows) {
            throw NumericError("slice_rows: [" + std::to_string(begin) + "," + std::to_string(end) + ") of " + s.str());
        }
        Shape so{end - begin, s.cols};
        const T* src = val(a) + begin * s.cols;
        std::vector<T> out(src, src + so.numel());
        return record(so, std::move(out), {a}, [a, begin](Tape& t, Var o) {
            std::size_t cols = t.shape(a).cols;
            T* ga = t.gr(a) + begin * cols;
            const T* go = t.gr(o);
            std::size_t n = t.shape(o).numel();
            for (std::size_t i = 0; i < n; ++i) {
                ga[i] += go[i];
            }
        });
    }

    /// Rows of a table selected by id; backward scatters into the table.
    Var gather_rows(Var table, std::span<const std::int32_t> ids)
    {
        Shape s = shape(table);
        Shape so{ids.size(), s.cols};
        std::vector<T> out(so.numel());
        const T* src = val(table);
        std::vector<std::int32_t> idx(ids.begin(), ids.end());
        for (std::size_t r = 0; r < idx.size(); ++r) {
            if (idx[r] < 0 || static_cast<std::size_t>(idx[r]) >= s.rows) {
                throw NumericError("gather_rows: id " + std::to_string(idx[r]) + " outside table " + s.str());
            }
            std::copy(src + idx[r] * s.cols, src + (idx[r] + 1) * s.cols, out.data() + r * s.cols);
        }
        return record(so, std::move(out), {table}, [table, idx = std::move(idx)](Tape& t, Var o) {
            std::size_t cols = t.shape(table).cols;
            T* gt = t.gr(table);
            const T* go = t.gr(o);
            for (std::size_t r = 0; r < idx.size(); ++r) {
                T* dst = gt + static_cast<std::size_t>(idx[r]) * cols;
                for (std::size_t c = 0; c < cols; ++c) {
                    dst[c] += go[r * cols + c];
                }
            }
        });
    }

    // -- nonlinearities -----------------------------------------------------

    Var gelu(Var a) { return unary(a, gelu_value<T>, [](T x, T) { return gelu_derivative(x); }); }

    Var tanh(Var a)
    {
        return unary(a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
    }

    Var sigmoid(Var a)
    {
        return unary(
            a, [](T x) { return T(1) / (T(1) + std::exp(-x)); }, [](T, T y) { return y * (T(1) - y); });
    }

    /// Inverted dropout. Mask bits come from a counter-based hash of seed, so
    /// a given seed always drops the same positions. Identity when !train.
    Var dropout(Var a, double p, std::uint64_t seed, bool train)
    {
        if (!train || p <= 0.0) {
            return a;
        }
        if (p >= 1.0) {
            throw UsageError("dropout probability must be < 1");
        }
        Shape s = shape(a);
        std::vector<T> mask(s.numel());
        const T keep_scale = T(1.0 / (1.0 - p));
        for (std::size_t i = 0; i < mask.size(); ++i) {
            mask[i] = unit_hash(seed, i) < p ? T(0) : keep_scale;
        }
        std::vector<T> out(s.numel());
        const T* pa = val(a);
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = pa[i] * mask[i];
        }
        return record(s, std::move(out), {a}, [a, mask = std::move(mask)](Tape& t, Var o) {
            T* ga = t.gr(a);
            const T* go = t.gr(o);
            for (std::size_t i = 0; i < mask.size(); ++i) {
                ga[i] += go[i] * mask[i];
            }
        });
    }

    /// Row-wise softmax. When valid_cols < cols, the trailing columns are
    /// masked out (probability exactly 0).
    Var softmax_rows(Var a, std::size_t valid_cols = SIZE_MAX)
    {
        Shape s = shape(a);
        std::size_t valid = std::min(valid_cols, s.cols);
        if (valid == 0) {
            throw NumericError("softmax_rows: no valid columns in " + s.str());
        }
        std::vector<T> out(s.numel(), T(0));
        const T* pa = val(a);
        for (std::size_t r = 0; r < s.rows; ++r) {
            softmax_row(pa + r * s.cols, out.data() + r * s.cols, valid);
        }
        return record(s, std::move(out), {a}, [a](Tape& t, Var o) {
            Shape s = t.shape(o);
            const T* y = t.val(o);
            const T* go = t.gr(o);
            T* ga = t.gr(a);
            for (std::size_t r = 0; r < s.rows; ++r) {
                softmax_row_backward(y + r * s.cols, go + r * s.cols, ga + r * s.cols, s.cols);
            }
        });
    }

    /// Row-wise layer normalization with per-column gain and bias rows.
    Var layer_norm(Var a, Var gain, Var bias, T eps = T(1e-5))
    {
        Shape s = shape(a);
        if (shape(gain) != Shape{1, s.cols} || shape(bias) != Shape{1, s.cols}) {
            throw NumericError("layer_norm: input " + s.str() + " with gain " + shape(gain).str() + " and bias " +
                               shape(bias).str());
        }
        std::vector<T> out(s.numel());
        std::vector<T> xhat(s.numel());
        std::vector<T> inv_std(s.rows);
        const T* pa = val(a);
        const T* g = val(gain);
        const T* bb = val(bias);
        for (std::size_t r = 0; r < s.rows; ++r) {
            const T* x = pa + r * s.cols;
            T mean = 0;
            for (std::size_t c = 0; c < s.cols; ++c) {
                mean += x[c];
            }
            mean /= T(s.cols);
            T var = 0;
            for (std::size_t c = 0; c < s.cols; ++c) {
                var += (x[c] - mean) * (x[c] - mean);
            }
            var /= T(s.cols);
            inv_std[r] = T(1) / std::sqrt(var + eps);
            for (std::size_t c = 0; c < s.cols; ++c) {
                T xh = (x[c] - mean) * inv_std[r];
                xhat[r * s.cols + c] = xh;
                out[r * s.cols + c] = xh * g[c] + bb[c];
            }
        }
        return record(s, std::move(out), {a, gain, bias},
                      [a, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, Var o) {
                          Shape s = t.shape(o);
                          const T* go = t.gr(o);
                          const T* g = t.val(gain);
                          for (std::size_t r = 0; r < s.rows; ++r) {
                              const T* gr = go + r * s.cols;
                              const T* xh = xhat.data() + r * s.cols;
                              if (t.needs(gain)) {
                                  T* gg = t.gr(gain);
                                  for (std::size_t c = 0; c < s.cols; ++c) {
                                      gg[c] += gr[c] * xh[c];
                                  }
                              }
                              if (t.needs(bias)) {
                                  T* gb = t.gr(bias);
                                  for (std::size_t c = 0; c < s.cols; ++c) {
                                      gb[c] += gr[c];
                                  }
                              }
                              if (t.needs(a)) {
                                  T sum_dxh = 0;
                                  T sum_dxh_xh = 0;
                                  for (std::size_t c = 0; c < s.cols; ++c) {
                                      T dxh = gr[c] * g[c];
                                      sum_dxh += dxh;
                                      sum_dxh_xh += dxh * xh[c];
                                  }
                                  T n = T(s.cols);
                                  T* ga = t.gr(a) + r * s.cols;
                                  for (std::size_t c = 0; c < s.cols; ++c) {
                                      T dxh = gr[c] * g[c];
                                      ga[c] += inv_std[r] / n * (n * dxh - sum_dxh - xh[c] * sum_dxh_xh);
                                  }
                              }
                          }
                      });
    }

    // -- reductions and comparisons ----------------------------------------

    /// Cosine similarity of two equally shaped tensors viewed as vectors.
    /// Returns 0 (and no gradient) when either norm is below 1e-12.
    Var cosine_similarity(Var a, Var b)
    {
        require_same(shape(a), shape(b), "cosine_similarity");
        std::size_t n = shape(a).numel();
        const T* pa = val(a);
        const T* pb = val(b);
        T dot = 0, na = 0, nb = 0;
        for (std::size_t i = 0; i < n; ++i) {
            dot += pa[i] * pb[i];
            na += pa[i] * pa[i];
            nb += pb[i] * pb[i];
        }
        na = std::sqrt(na);
        nb = std::sqrt(nb);
        bool degenerate = na < T(1e-12) || nb < T(1e-12);
        T cos = degenerate ? T(0) : dot / (na * nb);
        return record({1, 1}, {cos}, {a, b}, [a, b, na, nb, cos, degenerate](Tape& t, Var o) {
            if (degenerate) {
                return;
            }
            T go = t.gr(o)[0];
            std::size_t n = t.shape(a).numel();
            const T* pa = t.val(a);
            const T* pb = t.val(b);
            if (t.needs(a)) {
                T* ga = t.gr(a);
                for (std::size_t i = 0; i < n; ++i) {
                    ga[i] += go * (pb[i] / (na * nb) - cos * pa[i] / (na * na));
                }
            }
            if (t.needs(b)) {
                T* gb = t.gr(b);
                for (std::size_t i = 0; i < n; ++i) {
                    gb[i] += go * (pa[i] / (na * nb) - cos * pb[i] / (nb * nb));
                }
            }
        });
    }

    /// ||a - b||_2 as a 1x1 tensor. Gradient is taken as 0 at distance 0.
    Var euclidean_distance(Var a, Var b)
    {
        require_same(shape(a), shape(b), "euclidean_distance");
        std::size_t n = shape(a).numel();
        const T* pa = val(a);
        const T* pb = val(b);
        T sq = 0;
        for (std::size_t i = 0; i < n; ++i) {
            sq += (pa[i] - pb[i]) * (pa[i] - pb[i]);
        }
        T dist = std::sqrt(sq);
        return record({1, 1}, {dist}, {a, b}, [a, b, dist](Tape& t, Var o) {
            if (dist <= T(0)) {
                return;
            }
            T go = t.gr(o)[0];
            std::size_t n = t.shape(a).numel();
            const T* pa = t.val(a);
            const T* pb = t.val(b);
            for (std::size_t i = 0; i < n; ++i) {
                T d = go * (pa[i] - pb[i]) / dist;
                if (t.needs(a)) {
                    t.gr(a)[i] += d;
                }
                if (t.needs(b)) {
                    t.gr(b)[i] -= d;
                }
            }
        });
    }

    /// (prediction - target)^2 for a 1x1 prediction.
    Var mse_loss(Var prediction, T target)
    {
        if (shape(prediction) != Shape{1, 1}) {
            throw NumericError("mse_loss: prediction shape " + shape(prediction).str() + " and target shape [1x1]");
        }
        T diff = val(prediction)[0] - target;
        return record({1, 1}, {diff * diff}, {prediction}, [prediction, diff](Tape& t, Var o) {
            t.gr(prediction)[0] += T(2) * diff * t.gr(o)[0];
        });
    }

    Var sum(Var a)
    {
        const T* pa = val(a);
        std::size_t n = shape(a).numel();
        T total = 0;
        for (std::size_t i = 0; i < n; ++i) {
            total += pa[i];
        }
        return record({1, 1}, {total}, {a}, [a](Tape& t, Var o) {
            T go = t.gr(o)[0];
            T* ga = t.gr(a);
            std::size_t n = t.shape(a).numel();
            for (std::size_t i = 0; i < n; ++i) {
                ga[i] += go;
            }
        });
    }

    /// Mean over the first `count` rows.
    Var mean_rows(Var a, std::size_t count)
    {
        Shape s = shape(a);
        count = std::min(count, s.rows);
        if (count == 0) {
            throw NumericError("mean_rows: no rows in " + s.str());
        }
        std::vector<T> out(s.cols, T(0));
        const T* pa = val(a);
        for (std::size_t r = 0; r < count; ++r) {
            for (std::size_t c = 0; c < s.cols; ++c) {
                out[c] += pa[r * s.cols + c];
            }
        }
        for (auto& x : out) {
            x /= T(count);
        }
        return record({1, s.cols}, std::move(out), {a}, [a, count](Tape& t, Var o) {
            std::size_t cols = t.shape(a).cols;
            const T* go = t.gr(o);
            T* ga = t.gr(a);
            for (std::size_t r = 0; r < count; ++r) {
                for (std::size_t c = 0; c < cols; ++c) {
                    ga[r * cols + c] += go[c] / T(count);
                }
            }
        });
    }

    /// Column-wise max over the first `count` rows.
    Var max_rows(Var a, std::size_t count)
    {
        Shape s = shape(a);
        count = std::min(count, s.rows);
        if (count == 0) {
            throw NumericError("max_rows: no rows in " + s.str());
        }
        std::vector<T> out(s.cols);
        std::vector<std::size_t> argmax(s.cols, 0);
        const T* pa = val(a);
        for (std::size_t c = 0; c < s.cols; ++c) {
            out[c] = pa[c];
            for (std::size_t r = 1; r < count; ++r) {
                if (pa[r * s.cols + c] > out[c]) {
                    out[c] = pa[r * s.cols + c];
                    argmax[c] = r;
                }
            }
        }
        return record({1, s.cols}, std::move(out), {a}, [a, argmax = std::move(argmax)](Tape& t, Var o) {
            std::size_t cols = t.shape(a).cols;
            const T* go = t.gr(o);
            T* ga = t.gr(a);
            for (std::size_t c = 0; c < cols; ++c) {
                ga[argmax[c] * cols + c] += go[c];
            }
        });
    }

    /// sum_l weights[l] * parts[l]; weights is a 1 x L row.
    Var weighted_sum(const std::vector<Var>& parts, Var weights)
    {
        Shape s = shape(parts.at(0));
        if (shape(weights) != Shape{1, parts.size()}) {
            throw NumericError("weighted_sum: weights " + shape(weights).str() + " for " +
                               std::to_string(parts.size()) + " parts");
        }
        for (Var p : parts) {
            require_same(s, shape(p), "weighted_sum");
        }
        std::vector<T> out(s.numel(), T(0));
        const T* w = val(weights);
        for (std::size_t l = 0; l < parts.size(); ++l) {
            const T* pp = val(parts[l]);
            for (std::size_t i = 0; i < out.size(); ++i) {
                out[i] += w[l] * pp[i];
            }
        }
        std::vector<Var> inputs = parts;
        inputs.push_back(weights);
        return record(s, std::move(out), inputs, [parts, weights](Tape& t, Var o) {
            const T* go = t.gr(o);
            const T* w = t.val(weights);
            std::size_t n = t.shape(o).numel();
            for (std::size_t l = 0; l < parts.size(); ++l) {
                const T* pp = t.val(parts[l]);
                if (t.needs(weights)) {
                    T acc = 0;
                    for (std::size_t i = 0; i < n; ++i) {
                        acc += go[i] * pp[i];
                    }
                    t.gr(weights)[l] += acc;
                }
                if (t.needs(parts[l])) {
                    T* gp = t.gr(parts[l]);
                    for (std::size_t i = 0; i < n; ++i) {
                        gp[i] += go[i] * w[l];
                    }
                }
            }
        });
    }

    /// Multi-head scaled dot-product attention over [T x n] projections.
    /// Keys at positions >= valid_len are masked.
    Var attention(Var q, Var k, Var v, std::size_t heads, std::size_t valid_len)
    {
        Shape s = shape(q);
        require_same(s, shape(k), "attention");
        require_same(s, shape(v), "attention");
        if (heads == 0 || s.cols % heads != 0) {
            throw NumericError("attention: width " + std::to_string(s.cols) + " not divisible by " +
                               std::to_string(heads) + " heads");
        }
        std::size_t len = s.rows;
        std::size_t dh = s.cols / heads;
        std::size_t valid = std::min(valid_len, len);
        T inv_scale = T(1) / std::sqrt(T(dh));
        std::vector<T> probs(heads * len * len, T(0));
        std::vector<T> out(s.numel(), T(0));
        const T* pq = val(q);
        const T* pk = val(k);
        const T* pv = val(v);
        std::vector<T> logits(len);
        for (std::size_t h = 0; h < heads; ++h) {
            std::size_t off = h * dh;
            for (std::size_t i = 0; i < len; ++i) {
                for (std::size_t j = 0; j < valid; ++j) {
                    T acc = 0;
                    for (std::size_t d = 0; d < dh; ++d) {
                        acc += pq[i * s.cols + off + d] * pk[j * s.cols + off + d];
                    }
                    logits[j] = acc * inv_scale;
                }
                T* p = probs.data() + (h * len + i) * len;
                softmax_row(logits.data(), p, valid);
                for (std::size_t j = 0; j < valid; ++j) {
                    T pij = p[j];
                    for (std::size_t d = 0; d < dh; ++d) {
                        out[i * s.cols + off + d] += pij * pv[j * s.cols + off + d];
                    }
                }
            }
        }
        return record(s, std::move(out), {q, k, v},
                      [q, k, v, heads, valid, inv_scale, probs = std::move(probs)](Tape& t, Var o) {
                          Shape s = t.shape(o);
                          std::size_t len = s.rows;
                          std::size_t dh = s.cols / heads;
                          const T* go = t.gr(o);
                          const T* pq = t.val(q);
                          const T* pk = t.val(k);
                          const T* pv = t.val(v);
                          T* gq = t.needs(q) ? t.gr(q) : nullptr;
                          T* gk = t.needs(k) ? t.gr(k) : nullptr;
                          T* gv = t.needs(v) ? t.gr(v) : nullptr;
                          std::vector<T> dp(len);
                          std::vector<T> dl(len);
                          for (std::size_t h = 0; h < heads; ++h) {
                              std::size_t off = h * dh;
                              for (std::size_t i = 0; i < len; ++i) {
                                  const T* p = probs.data() + (h * len + i) * len;
                                  for (std::size_t j = 0; j < valid; ++j) {
                                      T acc = 0;
                                      for (std::size_t d = 0; d < dh; ++d) {
                                          acc += go[i * s.cols + off + d] * pv[j * s.cols + off + d];
                                          if (gv) {
                                              gv[j * s.cols + off + d] += p[j] * go[i * s.cols + off + d];
                                          }
                                      }
                                      dp[j] = acc;
                                  }
                                  std::fill(dl.begin(), dl.end(), T(0));
                                  softmax_row_backward(p, dp.data(), dl.data(), valid);
                                  for (std::size_t j = 0; j < valid; ++j) {
                                      T g = dl[j] * inv_scale;
                                      if (g == T(0)) {
                                          continue;
                                      }
                                      for (std::size_t d = 0; d < dh; ++d) {
                                          if (gq) {
                                              gq[i * s.cols + off + d] += g * pk[j * s.cols + off + d];
                                          }
                                          if (gk) {
                                              gk[j * s.cols + off + d] += g * pq[i * s.cols + off + d];
                                          }
                                      }
                                  }
                              }
                          }
                      });
    }

    // -- backward -------------------------------------------------------------

    /// Seeds d(root)/d(root) = 1 for every element of root and propagates.
    void backward(Var root)
    {
        if (!grad_enabled_) {
            throw UsageError("backward on a tape recorded without gradients");
        }
        auto& r = nodes_[root.id];
        if (!r.requires_grad) {
            return;
        }
        std::fill(r.grad, r.grad + r.shape.numel(), T(1));
        for (std::size_t i = root.id + 1; i-- > 0;) {
            auto& n = nodes_[i];
            if (n.requires_grad && n.backward) {
                n.backward(*this);
            }
        }
    }

  private:
    bool grad_enabled_;
    std::vector<Node> nodes_;

    bool needs(Var v) const { return nodes_[v.id].requires_grad; }
    const T* val(Var v) const { return nodes_[v.id].value; }
    T* gr(Var v) { return nodes_[v.id].grad; }

    CMap cmap(Var v) const
    {
        const auto& n = nodes_[v.id];
        return CMap(n.value, static_cast<Eigen::Index>(n.shape.rows), static_cast<Eigen::Index>(n.shape.cols));
    }
    Map gmap(Var v)
    {
        auto& n = nodes_[v.id];
        return Map(n.grad, static_cast<Eigen::Index>(n.shape.rows), static_cast<Eigen::Index>(n.shape.cols));
    }
    CMap cgmap(Var v) const
    {
        const auto& n = nodes_[v.id];
        return CMap(n.grad, static_cast<Eigen::Index>(n.shape.rows), static_cast<Eigen::Index>(n.shape.cols));
    }

    static void require_same(Shape a, Shape b, const char* op)
    {
        if (a != b) {
            throw NumericError(std::string(op) + ": shapes " + a.str() + " and " + b.str());
        }
    }

    static void softmax_row(const T* in, T* out, std::size_t valid)
    {
        T mx = in[0];
        for (std::size_t j = 1; j < valid; ++j) {
            mx = std::max(mx, in[j]);
        }
        T total = 0;
        for (std::size_t j = 0; j < valid; ++j) {
            out[j] = std::exp(in[j] - mx);
            total += out[j];
        }
        for (std::size_t j = 0; j < valid; ++j) {
            out[j] /= total;
        }
    }

    /// dx += y * (dy - <dy, y>) over one row.
    static void softmax_row_backward(const T* y, const T* dy, T* dx, std::size_t cols)
    {
        T dot = 0;
        for (std::size_t j = 0; j < cols; ++j) {
            dot += dy[j] * y[j];
        }
        for (std::size_t j = 0; j < cols; ++j) {
            dx[j] += y[j] * (dy[j] - dot);
        }
    }

    Var emplace(Shape shape, std::vector<T> data, bool requires_grad)
    {
        Node n;
        n.shape = shape;
        n.own_value = std::move(data);
        n.value = n.own_value.data();
        n.requires_grad = requires_grad;
        nodes_.push_back(std::move(n));
        return {static_cast<std::uint32_t>(nodes_.size() - 1)};
    }

    template <typename Backward>
    Var record(Shape shape, std::vector<T> data, std::initializer_list<Var> inputs, Backward&& bw)
    {
        return record(shape, std::move(data), std::vector<Var>(inputs), std::forward<Backward>(bw));
    }

    template <typename Backward>
    Var record(Shape shape, std::vector<T> data, const std::vector<Var>& inputs, Backward&& bw)
    {
#ifndef NDEBUG
        for (T x : data) {
            if (!std::isfinite(x)) {
                throw NumericError("non-finite value produced by a forward op of shape " + shape.str());
            }
        }
#endif
        bool any = false;
        if (grad_enabled_) {
            for (Var in : inputs) {
                any = any || needs(in);
            }
        }
        Var out = emplace(shape, std::move(data), any);
        if (any) {
            auto& n = nodes_[out.id];
            n.own_grad.assign(shape.numel(), T(0));
            n.grad = n.own_grad.data();
            n.backward = [out, bw = std::forward<Backward>(bw)](Tape& t) { bw(t, out); };
        }
        return out;
    }

    Var add_scaled(Var a, Var b, T sign)
    {
        Shape sa = shape(a), sb = shape(b);
        bool broadcast = sb.rows == 1 && sa.rows != 1 && sb.cols == sa.cols;
        if (!(sa == sb || broadcast)) {
            throw NumericError(std::string(sign > 0 ? "add" : "sub") + ": shapes " + sa.str() + " and " + sb.str());
        }
        std::vector<T> out(sa.numel());
        const T* pa = val(a);
        const T* pb = val(b);
        for (std::size_t r = 0; r < sa.rows; ++r) {
            const T* rb = broadcast ? pb : pb + r * sa.cols;
            for (std::size_t c = 0; c < sa.cols; ++c) {
                out[r * sa.cols + c] = pa[r * sa.cols + c] + sign * rb[c];
            }
        }
        return record(sa, std::move(out), {a, b}, [a, b, sign, broadcast](Tape& t, Var o) {
            Shape s = t.shape(o);
            const T* go = t.gr(o);
            if (t.needs(a)) {
                T* ga = t.gr(a);
                for (std::size_t i = 0; i < s.numel(); ++i) {
                    ga[i] += go[i];
                }
            }
            if (t.needs(b)) {
                T* gb = t.gr(b);
                for (std::size_t r = 0; r < s.rows; ++r) {
                    T* rb = broadcast ? gb : gb + r * s.cols;
                    for (std::size_t c = 0; c < s.cols; ++c) {
                        rb[c] += sign * go[r * s.cols + c];
                    }
                }
            }
        });
    }

    /// Elementwise op; derivative receives (input, output).
    template <typename F, typename D>
    Var unary(Var a, F f, D d)
    {
        Shape s = shape(a);
        std::vector<T> out(s.numel());
        const T* pa = val(a);
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = f(pa[i]);
        }
        return record(s, std::move(out), {a}, [a, d](Tape& t, Var o) {
            std::size_t n = t.shape(o).numel();
            const T* x = t.val(a);
            const T* y = t.val(o);
            const T* go = t.gr(o);
            T* ga = t.gr(a);
            for (std::size_t i = 0; i < n; ++i) {
                ga[i] += go[i] * d(x[i], y[i]);
            }
        });
    }
};

}  // namespace siamrank

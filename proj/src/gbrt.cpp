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

#include "siamrank/gbrt.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "siamrank/common.hpp"

namespace siamrank {

// ---------------------------------------------------------------------------
// BM25

CorpusStats CorpusStats::build(std::span<const std::vector<std::string>> docs)
{
    if (docs.empty()) {
        throw UsageError("BM25 statistics need a non-empty corpus");
    }
    CorpusStats s;
    s.n_docs_ = docs.size();
    std::size_t total = 0;
    for (const auto& d : docs) {
        total += d.size();
        std::set<std::string_view> seen(d.begin(), d.end());
        for (auto t : seen) {
            ++s.df_[std::string(t)];
        }
    }
    s.avg_len_ = static_cast<double>(total) / static_cast<double>(docs.size());
    return s;
}

std::size_t CorpusStats::df(const std::string& term) const
{
    auto it = df_.find(term);
    return it == df_.end() ? 0 : it->second;
}

double CorpusStats::idf(const std::string& term) const
{
    const double n = static_cast<double>(n_docs_);
    const double d = static_cast<double>(df(term));
    return std::max(0.0, std::log((n - d + 0.5) / (d + 0.5)));
}

double bm25(std::span<const std::string> query_terms, std::span<const std::string> doc_terms,
            const CorpusStats& stats, const Bm25Params& params)
{
    const double len = static_cast<double>(doc_terms.size());
    const double avg = stats.avg_len() > 0.0 ? stats.avg_len() : 1.0;
    const double norm = params.k1 * (1.0 - params.b + params.b * len / avg);
    double score = 0.0;
    for (const auto& q : query_terms) {
        const auto tf = static_cast<double>(std::count(doc_terms.begin(), doc_terms.end(), q));
        if (tf == 0.0) {
            continue;
        }
        score += stats.idf(q) * tf * (params.k1 + 1.0) / (tf + norm);
    }
    return score;
}

// ---------------------------------------------------------------------------
// Features

std::vector<std::string> lexical_feature_names()
{
    return {"bm25_bte", "bm25_title", "query_title_overlap", "query_len", "doc_len", "static_doc_score"};
}

std::vector<std::string> feature_names(bool with_neural)
{
    auto names = lexical_feature_names();
    if (with_neural) {
        names.emplace_back(kNeuralFeature);
    }
    return names;
}

void FeatureMatrix::append(std::span<const double> row)
{
    if (row.size() != cols()) {
        throw UsageError("feature row of width " + std::to_string(row.size()) + " for a schema of " +
                         std::to_string(cols()));
    }
    values.insert(values.end(), row.begin(), row.end());
    ++rows;
}

FeatureMatrix FeatureMatrix::select_rows(std::span<const std::size_t> keep) const
{
    FeatureMatrix out{names, 0, {}};
    out.values.reserve(keep.size() * cols());
    for (std::size_t r : keep) {
        out.append(row(r));
    }
    return out;
}

FeatureMatrix FeatureMatrix::without(std::string_view name) const
{
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) {
        throw UsageError("feature '" + std::string(name) + "' is not in the schema");
    }
    const auto drop = static_cast<std::size_t>(it - names.begin());
    FeatureMatrix out;
    for (std::size_t j = 0; j < names.size(); ++j) {
        if (j != drop) {
            out.names.push_back(names[j]);
        }
    }
    out.rows = rows;
    out.values.reserve(rows * out.names.size());
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < names.size(); ++j) {
            if (j != drop) {
                out.values.push_back(at(i, j));
            }
        }
    }
    return out;
}

double static_doc_score(std::string_view url)
{
    return unit_hash(fnv1a(url), 0x7374617469635fULL);
}

FeatureExtractor FeatureExtractor::fit(const DatasetSplit& corpus, const Bm25Params& params)
{
    std::set<std::string_view> seen;
    std::vector<std::vector<std::string>> bodies;
    std::vector<std::vector<std::string>> titles;
    for (const auto& r : corpus.records()) {
        if (seen.insert(r.url_raw).second) {
            bodies.push_back(split_words(r.bte));
            titles.push_back(split_words(r.title));
        }
    }
    FeatureExtractor fx;
    fx.body_ = CorpusStats::build(bodies);
    fx.title_ = CorpusStats::build(titles);
    fx.params_ = params;
    return fx;
}

std::vector<double> FeatureExtractor::lexical(const RelevanceRecord& record) const
{
    const auto query = split_words(record.query);
    const auto body = split_words(record.bte);
    const auto title = split_words(record.title);
    std::set<std::string_view> distinct(query.begin(), query.end());
    std::size_t in_title = 0;
    for (auto q : distinct) {
        in_title += std::find(title.begin(), title.end(), q) != title.end() ? 1 : 0;
    }
    return {
        bm25(query, body, body_, params_),
        bm25(query, title, title_, params_),
        distinct.empty() ? 0.0 : static_cast<double>(in_title) / static_cast<double>(distinct.size()),
        static_cast<double>(query.size()),
        static_cast<double>(body.size()),
        static_doc_score(record.url_raw),
    };
}

FeatureMatrix FeatureExtractor::extract(const DatasetSplit& split, std::span<const float> neural) const
{
    const bool with_neural = !neural.empty();
    if (with_neural && neural.size() != split.size()) {
        throw UsageError("neural scores for " + std::to_string(neural.size()) + " of " +
                         std::to_string(split.size()) + " records");
    }
    FeatureMatrix m{feature_names(with_neural), 0, {}};
    m.values.reserve(split.size() * m.cols());
    for (std::size_t i = 0; i < split.size(); ++i) {
        auto row = lexical(split.records()[i]);
        if (with_neural) {
            row.push_back(static_cast<double>(neural[i]));
        }
        m.append(row);
    }
    return m;
}

// ---------------------------------------------------------------------------
// Trees

void GbrtConfig::validate() const
{
    if (depth < 1) {
        throw UsageError("tree depth must be at least 1");
    }
    if (!(shrinkage > 0.0 && shrinkage <= 1.0)) {
        throw UsageError("shrinkage must lie in (0, 1]");
    }
    if (early_stop_rounds == 0 || min_leaf == 0 || workers == 0) {
        throw UsageError("early_stop_rounds, min_leaf and workers must be positive");
    }
}

double RegressionTree::predict(std::span<const double> x) const
{
    std::size_t i = 0;
    while (nodes[i].feature >= 0) {
        const auto& n = nodes[i];
        i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
    }
    return nodes[i].value;
}

std::size_t RegressionTree::depth() const
{
    std::vector<std::size_t> level(nodes.size(), 0);
    std::size_t deepest = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        deepest = std::max(deepest, level[i]);
        if (nodes[i].feature >= 0) {
            level[static_cast<std::size_t>(nodes[i].left)] = level[i] + 1;
            level[static_cast<std::size_t>(nodes[i].right)] = level[i] + 1;
        }
    }
    return deepest;
}

bool GbrtModel::uses(std::string_view feature) const
{
    return std::find(schema_.begin(), schema_.end(), feature) != schema_.end();
}

double GbrtModel::predict(std::span<const double> x) const
{
    if (x.size() != schema_.size()) {
        throw DataError("feature row of width " + std::to_string(x.size()) + " for a model with " +
                        std::to_string(schema_.size()) + " features");
    }
    double sum = 0.0;
    for (const auto& t : trees_) {
        sum += t.predict(x);
    }
    return base_ + shrinkage_ * sum;
}

std::vector<double> GbrtModel::predict(const FeatureMatrix& features) const
{
    if (features.names != schema_) {
        throw DataError("feature schema [" + join(features.names, ",") + "] does not match model schema [" +
                        join(schema_, ",") + "]");
    }
    std::vector<double> out(features.rows);
    for (std::size_t i = 0; i < features.rows; ++i) {
        out[i] = predict(features.row(i));
    }
    return out;
}

namespace {

std::string fmt17(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

std::string GbrtModel::str() const
{
    std::ostringstream out;
    out << "gbrt_model 1\n";
    out << "schema " << join(schema_, " ") << "\n";
    out << "base " << fmt17(base_) << "\n";
    out << "shrinkage " << fmt17(shrinkage_) << "\n";
    out << "trees " << trees_.size() << "\n";
    for (std::size_t t = 0; t < trees_.size(); ++t) {
        for (std::size_t i = 0; i < trees_[t].nodes.size(); ++i) {
            const auto& n = trees_[t].nodes[i];
            out << t << " " << i << " " << n.feature << " " << fmt17(n.threshold) << " " << n.left << " " << n.right
                << " " << fmt17(n.value) << "\n";
        }
    }
    return out.str();
}

GbrtModel GbrtModel::parse(std::string_view text)
{
    std::istringstream in{std::string(text)};
    std::string line;
    auto expect = [&](const char* key) {
        if (!std::getline(in, line) || !line.starts_with(key)) {
            throw DataError(std::string("GBRT model: expected '") + key + "' line");
        }
        return line.size() > std::strlen(key) ? line.substr(std::strlen(key) + 1) : std::string();
    };
    if (expect("gbrt_model") != "1") {
        throw DataError("GBRT model: unsupported version");
    }
    GbrtModel m;
    m.schema_ = split_words(expect("schema"));
    try {
        m.base_ = std::stod(expect("base"));
        m.shrinkage_ = std::stod(expect("shrinkage"));
        const std::size_t n_trees = std::stoul(expect("trees"));
        m.trees_.resize(n_trees);
        std::size_t line_no = 5;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) {
                continue;
            }
            std::istringstream ls(line);
            std::size_t t = 0;
            std::size_t i = 0;
            TreeNode n;
            std::string thr;
            std::string val;
            if (!(ls >> t >> i >> n.feature >> thr >> n.left >> n.right >> val) || t >= n_trees ||
                i != m.trees_[t].nodes.size()) {
                throw DataError("GBRT model: malformed node at line " + std::to_string(line_no));
            }
            n.threshold = std::stod(thr);
            n.value = std::stod(val);
            m.trees_[t].nodes.push_back(n);
        }
    } catch (const std::logic_error&) {
        throw DataError("GBRT model: malformed number");
    }
    for (const auto& t : m.trees_) {
        if (t.nodes.empty()) {
            throw DataError("GBRT model: empty tree");
        }
        for (const auto& n : t.nodes) {
            if (n.feature >= static_cast<std::int32_t>(m.schema_.size()) ||
                (n.feature >= 0 && (n.left <= 0 || n.right <= 0 ||
                                    static_cast<std::size_t>(std::max(n.left, n.right)) >= t.nodes.size()))) {
                throw DataError("GBRT model: node references out of range");
            }
        }
    }
    return m;
}

void GbrtModel::save(const std::filesystem::path& path) const
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    out << str();
}

GbrtModel GbrtModel::load(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open GBRT model " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

namespace {

struct Split {
    double gain = 0.0;
    std::int32_t feature = -1;
    double threshold = 0.0;
};

/// Level-wise exact greedy fitting over presorted feature columns.
class TreeFitter {
  public:
    explicit TreeFitter(const FeatureMatrix& x) : x_(x)
    {
        sorted_.resize(x.cols());
        for (std::size_t f = 0; f < x.cols(); ++f) {
            auto& idx = sorted_[f];
            idx.resize(x.rows);
            std::iota(idx.begin(), idx.end(), 0U);
            std::stable_sort(idx.begin(), idx.end(),
                             [&](std::uint32_t a, std::uint32_t b) { return x.at(a, f) < x.at(b, f); });
        }
    }

    /// Returns false when the root admits no useful split.
    bool fit(std::span<const double> residual, const GbrtConfig& cfg, RegressionTree& tree)
    {
        const std::size_t n = x_.rows;
        tree.nodes.assign(1, TreeNode{});
        std::vector<std::int32_t> node_of(n, 0);
        std::vector<Stats> stats(1);
        for (std::size_t i = 0; i < n; ++i) {
            stats[0].add(residual[i]);
        }
        std::vector<std::int32_t> frontier{0};
        for (std::size_t level = 0; level < cfg.depth && !frontier.empty(); ++level) {
            std::vector<std::int32_t> slot(tree.nodes.size(), -1);
            for (std::size_t k = 0; k < frontier.size(); ++k) {
                slot[static_cast<std::size_t>(frontier[k])] = static_cast<std::int32_t>(k);
            }
            // best[f][k]: best split of frontier node k on feature f.
            std::vector<std::vector<Split>> best(x_.cols(), std::vector<Split>(frontier.size()));
            parallel_for(x_.cols(), cfg.workers, [&](std::size_t fb, std::size_t fe) {
                for (std::size_t f = fb; f < fe; ++f) {
                    scan_feature(f, residual, node_of, slot, frontier, stats, cfg.min_leaf, best[f]);
                }
            });
            std::vector<std::int32_t> next;
            for (std::size_t k = 0; k < frontier.size(); ++k) {
                Split chosen;
                for (std::size_t f = 0; f < x_.cols(); ++f) {
                    if (best[f][k].gain > chosen.gain) {
                        chosen = best[f][k];
                    }
                }
                const auto node = static_cast<std::size_t>(frontier[k]);
                const Stats& s = stats[node];
                const double sse = std::max(0.0, s.sq - s.sum * s.sum / static_cast<double>(s.count));
                if (chosen.feature < 0 || !(chosen.gain > 1e-10 * sse) || !(chosen.gain > 1e-300)) {
                    continue;
                }
                auto left = static_cast<std::int32_t>(tree.nodes.size());
                tree.nodes[node].feature = chosen.feature;
                tree.nodes[node].threshold = chosen.threshold;
                tree.nodes[node].left = left;
                tree.nodes[node].right = left + 1;
                tree.nodes.emplace_back();
                tree.nodes.emplace_back();
                stats.resize(tree.nodes.size());
                next.push_back(left);
                next.push_back(left + 1);
            }
            if (next.empty()) {
                break;
            }
            // Route samples of nodes split at this level to their children.
            for (std::size_t i = 0; i < n; ++i) {
                const auto node = static_cast<std::size_t>(node_of[i]);
                const auto& parent = tree.nodes[node];
                if (slot[node] < 0 || parent.feature < 0) {
                    continue;
                }
                std::int32_t child =
                    x_.at(i, static_cast<std::size_t>(parent.feature)) <= parent.threshold ? parent.left : parent.right;
                node_of[i] = child;
                stats[static_cast<std::size_t>(child)].add(residual[i]);
            }
            frontier = std::move(next);
        }
        if (tree.nodes[0].feature < 0) {
            return false;
        }
        for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
            auto& node = tree.nodes[i];
            if (node.feature < 0) {
                node.value = stats[i].count > 0 ? stats[i].sum / static_cast<double>(stats[i].count) : 0.0;
            }
        }
        return true;
    }

  private:
    struct Stats {
        double sum = 0.0;
        double sq = 0.0;
        std::size_t count = 0;
        void add(double r)
        {
            sum += r;
            sq += r * r;
            ++count;
        }
    };

    void scan_feature(std::size_t f, std::span<const double> residual, const std::vector<std::int32_t>& node_of,
                      const std::vector<std::int32_t>& slot, const std::vector<std::int32_t>& frontier,
                      const std::vector<Stats>& stats, std::size_t min_leaf, std::vector<Split>& best) const
    {
        struct Acc {
            double sum = 0.0;
            std::size_t count = 0;
            double last = 0.0;
        };
        std::vector<Acc> acc(frontier.size());
        for (std::uint32_t i : sorted_[f]) {
            const auto node = static_cast<std::size_t>(node_of[i]);
            if (node >= slot.size() || slot[node] < 0) {
                continue;
            }
            const auto k = static_cast<std::size_t>(slot[node]);
            Acc& a = acc[k];
            const double x = x_.at(i, f);
            const Stats& s = stats[node];
            if (a.count >= min_leaf && x != a.last && s.count - a.count >= min_leaf) {
                const double nl = static_cast<double>(a.count);
                const double nr = static_cast<double>(s.count - a.count);
                const double rs = s.sum - a.sum;
                const double gain =
                    a.sum * a.sum / nl + rs * rs / nr - s.sum * s.sum / static_cast<double>(s.count);
                if (gain > best[k].gain) {
                    double thr = a.last + (x - a.last) / 2.0;
                    if (!(thr < x)) {
                        thr = a.last;
                    }
                    best[k] = {gain, static_cast<std::int32_t>(f), thr};
                }
            }
            a.sum += residual[i];
            ++a.count;
            a.last = x;
        }
    }

    const FeatureMatrix& x_;
    std::vector<std::vector<std::uint32_t>> sorted_;
};

}  // namespace

double rmse(std::span<const double> predictions, std::span<const double> labels)
{
    if (predictions.size() != labels.size()) {
        throw UsageError("rmse: size mismatch");
    }
    if (labels.empty()) {
        return 0.0;
    }
    double total = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double d = predictions[i] - labels[i];
        total += d * d;
    }
    return std::sqrt(total / static_cast<double>(labels.size()));
}

std::vector<double> labels_of(const DatasetSplit& split)
{
    std::vector<double> out;
    out.reserve(split.size());
    for (const auto& r : split.records()) {
        out.push_back(r.label);
    }
    return out;
}

GbrtModel train_gbrt(const FeatureMatrix& train, std::span<const double> labels, const FeatureMatrix& dev,
                     std::span<const double> dev_labels, const GbrtConfig& cfg, GbrtTrainLog* log)
{
    cfg.validate();
    if (train.rows == 0 || labels.size() != train.rows) {
        throw UsageError("GBRT training needs one label per non-empty feature row");
    }
    if (dev.rows != dev_labels.size() || (dev.rows > 0 && dev.names != train.names)) {
        throw UsageError("GBRT dev features do not match the training schema");
    }
    for (double y : labels) {
        if (!(y >= 0.0 && y <= 1.0)) {
            throw DataError("GBRT labels must lie in [0, 1]");
        }
    }
    const double base = std::accumulate(labels.begin(), labels.end(), 0.0) / static_cast<double>(labels.size());
    GbrtModel model(train.names, base, cfg.shrinkage);
    std::vector<double> pred(train.rows, base);
    std::vector<double> dev_pred(dev.rows, base);
    std::vector<double> residual(train.rows);

    GbrtTrainLog local;
    GbrtTrainLog& out = log != nullptr ? *log : local;
    out = {};
    out.train_rmse.push_back(rmse(pred, labels));
    out.dev_rmse.push_back(rmse(dev_pred, dev_labels));
    double best_dev = out.dev_rmse.back();
    std::size_t best_iter = 0;

    TreeFitter fitter(train);
    std::vector<double> candidate(train.rows);
    for (std::size_t t = 1; t <= cfg.n_trees; ++t) {
        for (std::size_t i = 0; i < train.rows; ++i) {
            residual[i] = labels[i] - pred[i];
        }
        RegressionTree tree;
        if (!fitter.fit(residual, cfg, tree)) {
            break;
        }
        for (std::size_t i = 0; i < train.rows; ++i) {
            candidate[i] = pred[i] + cfg.shrinkage * tree.predict(train.row(i));
        }
        const double train_rmse = rmse(candidate, labels);
        if (train_rmse > out.train_rmse.back()) {
            break;
        }
        pred.swap(candidate);
        for (std::size_t i = 0; i < dev.rows; ++i) {
            dev_pred[i] += cfg.shrinkage * tree.predict(dev.row(i));
        }
        model.trees().push_back(std::move(tree));
        out.train_rmse.push_back(train_rmse);
        out.dev_rmse.push_back(rmse(dev_pred, dev_labels));
        if (dev.rows == 0 || out.dev_rmse.back() < best_dev) {
            best_dev = out.dev_rmse.back();
            best_iter = t;
        } else if (t - best_iter >= cfg.early_stop_rounds) {
            break;
        }
    }
    model.trees().resize(best_iter);
    out.best_iteration = best_iter;
    return model;
}

}  // namespace siamrank

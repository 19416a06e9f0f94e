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

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "siamrank/ablation.hpp"
#include "siamrank/config.hpp"
#include "siamrank/dataset.hpp"
#include "siamrank/embedding_store.hpp"
#include "siamrank/gbrt.hpp"
#include "siamrank/metrics.hpp"
#include "siamrank/models.hpp"
#include "siamrank/optim.hpp"
#include "siamrank/pipeline.hpp"
#include "siamrank/tokenizer.hpp"

namespace fs = std::filesystem;
using namespace siamrank;

namespace {

struct GlobalFlags {
    std::string config;
    std::vector<std::string> overrides;
    std::uint64_t seed = 1;
    std::size_t workers = 1;
    std::string out = "out";
};

/// Resolved settings of one run. Every value read through it lands in the
/// manifest, defaults included.
class Run {
  public:
    Run(std::string subcommand, const GlobalFlags& flags) : sub_(std::move(subcommand)), flags_(flags)
    {
        if (!flags.config.empty()) {
            cfg_ = KeyValues::load(flags.config);
            add_input("config", flags.config);
        }
        for (const auto& o : flags.overrides) {
            auto eq = o.find('=');
            if (eq == std::string::npos || eq == 0) {
                throw UsageError("--set expects key=value, got '" + o + "'");
            }
            cfg_.set(o.substr(0, eq), o.substr(eq + 1));
        }
        if (flags.workers == 0) {
            throw UsageError("--workers must be positive");
        }
        fs::create_directories(flags.out);
    }

    std::uint64_t seed() const { return flags_.seed; }
    std::size_t workers() const { return flags_.workers; }
    fs::path out(const std::string& name) const { return fs::path(flags_.out) / name; }

    std::string str(const std::string& key, const std::string& fallback)
    {
        auto v = cfg_.get_string(key, fallback);
        resolved_.set(key, v);
        return v;
    }
    std::size_t size(const std::string& key, std::size_t fallback)
    {
        auto v = cfg_.get_size(key, fallback);
        resolved_.set(key, std::to_string(v));
        return v;
    }
    double real(const std::string& key, double fallback)
    {
        auto v = cfg_.get_double(key, fallback);
        resolved_.set(key, format_double(v));
        return v;
    }
    bool flag(const std::string& key, bool fallback)
    {
        auto v = cfg_.get_bool(key, fallback);
        resolved_.set(key, v ? "true" : "false");
        return v;
    }
    void note(const std::string& key, const std::string& value) { resolved_.set(key, value); }

    void add_input(const std::string& name, const fs::path& path)
    {
        if (!fs::exists(path)) {
            throw DataError("missing input " + name + ": " + path.string());
        }
        inputs_.emplace_back(name, path);
    }
    fs::path declare_output(const std::string& name)
    {
        outputs_.emplace_back(name, out(name));
        return out(name);
    }

    void write_manifest(bool with_outputs) const
    {
        KeyValues m = resolved_;
        m.set("run.subcommand", sub_);
        m.set("run.seed", std::to_string(flags_.seed));
        m.set("run.workers", std::to_string(flags_.workers));
        m.set("run.out", flags_.out);
        for (const auto& [name, path] : inputs_) {
            m.set("input." + name + ".path", path.string());
            m.set("input." + name + ".fnv1a", file_hash(path));
        }
        for (const auto& [name, path] : outputs_) {
            m.set("output." + name + ".path", path.string());
            if (with_outputs) {
                m.set("output." + name + ".fnv1a", file_hash(path));
            }
        }
        m.save(out(sub_ + ".manifest"));
    }

    void finish() const
    {
        for (const auto& [name, path] : outputs_) {
            if (!fs::exists(path) || fs::file_size(path) == 0) {
                throw DataError("output " + name + " was not written: " + path.string());
            }
        }
        write_manifest(true);
    }

  private:
    static std::string file_hash(const fs::path& path)
    {
        auto bytes = read_file_bytes(path);
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx",
                      static_cast<unsigned long long>(fnv1a(std::string_view(bytes.data(), bytes.size()))));
        return buf;
    }

    std::string sub_;
    GlobalFlags flags_;
    KeyValues cfg_;
    KeyValues resolved_;
    std::vector<std::pair<std::string, fs::path>> inputs_;
    std::vector<std::pair<std::string, fs::path>> outputs_;
};

SynthConfig synth_config(Run& run)
{
    SynthConfig c;
    c.vocab_size = run.size("synth.vocab_size", 200);
    c.n_queries = run.size("synth.n_queries", 800);
    c.docs_per_query = run.size("synth.docs_per_query", 20);
    c.relevant_fraction = run.real("synth.relevant_fraction", c.relevant_fraction);
    c.noise = run.real("synth.noise", c.noise);
    c.body_words = run.size("synth.body_words", 6);
    c.seed = run.seed();
    c.validate();
    return c;
}

EncoderConfig encoder_config(Run& run)
{
    EncoderConfig c;
    c.layers = run.size("encoder.layers", c.layers);
    c.hidden = run.size("encoder.hidden", c.hidden);
    c.heads = run.size("encoder.heads", c.heads);
    c.ff_dim = run.size("encoder.ff_dim", c.ff_dim);
    c.max_pos = run.size("encoder.max_pos", c.max_pos);
    c.dropout_p = run.real("encoder.dropout_p", c.dropout_p);
    c.weight_embedding_layer = run.flag("encoder.weight_embedding_layer", c.weight_embedding_layer);
    return c;
}

TrainConfig train_config(Run& run)
{
    TrainConfig c;
    c.lr = run.real("train.lr", c.lr);
    c.batch = run.size("train.batch", c.batch);
    c.max_len = run.size("train.max_len", c.max_len);
    c.epochs = run.size("train.epochs", c.epochs);
    c.patience = run.size("train.patience", c.patience);
    c.base_seed = run.size("train.base_seed", c.base_seed);
    c.seed = run.seed();
    c.workers = run.workers();
    c.validate();
    return c;
}

SiameseModel::Options siamese_options(Run& run, std::size_t max_len)
{
    SiameseModel::Options o;
    o.variant = parse_interaction(run.str("siamese.variant", std::string(to_string(o.variant))));
    o.pooling = parse_pooling(run.str("siamese.pooling", std::string(to_string(o.pooling))));
    o.layer_weighting = run.flag("siamese.layer_weighting", o.layer_weighting);
    o.max_len = max_len;
    return o;
}

GbrtConfig gbrt_config(Run& run)
{
    GbrtConfig c;
    c.n_trees = run.size("gbrt.n_trees", c.n_trees);
    c.depth = run.size("gbrt.depth", c.depth);
    c.shrinkage = run.real("gbrt.shrinkage", c.shrinkage);
    c.early_stop_rounds = run.size("gbrt.early_stop_rounds", c.early_stop_rounds);
    c.min_leaf = run.size("gbrt.min_leaf", c.min_leaf);
    c.seed = run.seed();
    c.workers = run.workers();
    c.validate();
    return c;
}

PartMask part_mask(Run& run) { return PartMask::parse(run.str("data.parts", "title,url,bte")); }

DatasetSplit load_split(Run& run, const std::string& name, const std::string& path, SplitKind kind)
{
    if (path.empty()) {
        throw UsageError("--" + name + " is required");
    }
    run.add_input(name, path);
    return load_tsv(path, kind, part_mask(run));
}

Vocab load_vocab(Run& run, const std::string& path)
{
    if (path.empty()) {
        throw UsageError("--vocab is required");
    }
    run.add_input("vocab", path);
    return Vocab::load(path);
}

std::string model_kind(const fs::path& path)
{
    const fs::path cfg(path.string() + ".cfg");
    if (!fs::exists(cfg)) {
        throw DataError("model config not found: " + cfg.string());
    }
    return KeyValues::load(cfg).get_string("model.kind", "");
}

std::vector<std::size_t> parse_sizes(const std::string& text)
{
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t pos = 0;
            out.push_back(std::stoull(item, &pos));
            if (pos != item.size()) {
                throw std::invalid_argument(item);
            }
        } catch (const std::exception&) {
            throw UsageError("bad size list '" + text + "'");
        }
    }
    if (out.empty()) {
        throw UsageError("empty size list");
    }
    return out;
}

void write_ranking(const std::vector<RankedList>& lists, const fs::path& path)
{
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    out << "query_id\trank\tdoc\tscore\tlabel\n";
    for (const auto& l : lists) {
        for (std::size_t i = 0; i < l.items.size(); ++i) {
            const auto& it = l.items[i];
            out << l.query_id << '\t' << i + 1 << '\t' << it.doc_key << '\t' << format_double(it.score) << '\t'
                << format_double(it.label) << '\n';
        }
    }
}

std::vector<RankedList> read_ranking(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    std::string line;
    std::getline(in, line);
    if (line != "query_id\trank\tdoc\tscore\tlabel") {
        throw DataError(path.string() + ": not a ranking file");
    }
    std::vector<RankedList> lists;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, '\t')) {
            f.push_back(cell);
        }
        if (f.size() != 5) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected 5 columns");
        }
        if (lists.empty() || lists.back().query_id != f[0]) {
            lists.push_back({f[0], {}});
        }
        try {
            lists.back().items.push_back({f[2], std::stod(f[3]), std::stod(f[4])});
        } catch (const std::exception&) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": bad number");
        }
    }
    return lists;
}

void print_log(const std::vector<EpochLog>& log)
{
    for (const auto& e : log) {
        std::printf("epoch %zu  train_loss %.5f  dev_p@10 %.2f\n", e.epoch, e.train_loss, e.dev_p_at_10);
    }
}

void print_rows(const std::vector<AblationRow>& rows)
{
    for (const auto& r : rows) {
        auto a = mean_std(r.standalone);
        std::printf("%-16s %.2f +- %.2f", r.name.c_str(), a.mean, a.std);
        if (!r.with_gbrt.empty()) {
            auto g = mean_std(r.with_gbrt);
            std::printf("   with GBRT %.2f +- %.2f", g.mean, g.std);
        }
        std::printf("\n");
    }
}

struct Paths {
    std::string train, dev, test, data, vocab, model, teacher, embeddings, gbrt, stage1, init_weights, ranking_file;
    std::vector<std::string> corpus;
    std::string ranking = "random";
    std::string sizes;
    std::size_t runs = 100;
    bool quantized = false;
};

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"siamrank: siamese transformer relevance ranking"};
    app.require_subcommand(1);
    GlobalFlags g;
    Paths p;
    std::function<void()> action;

    auto sub = [&](const char* name, const char* help) {
        CLI::App* s = app.add_subcommand(name, help);
        s->add_option("--config", g.config, "key=value configuration file");
        s->add_option("--set", g.overrides, "Configuration override key=value (repeatable)");
        s->add_option("--seed", g.seed, "Run seed")->capture_default_str();
        s->add_option("--workers", g.workers, "Worker threads")->capture_default_str();
        s->add_option("--out", g.out, "Output directory")->capture_default_str();
        return s;
    };
    auto data_flags = [&](CLI::App* s, bool test) {
        s->add_option("--train", p.train, "Training TSV")->required();
        s->add_option("--dev", p.dev, "Dev TSV")->required();
        if (test) {
            s->add_option("--test", p.test, "Test TSV")->required();
        }
    };

    // synth-data
    auto* synth = sub("synth-data", "Generate the planted synthetic dataset");
    synth->callback([&] {
        action = [&] {
            Run run("synth-data", g);
            auto cfg = synth_config(run);
            const char* names[] = {"train_big.tsv", "train_small.tsv", "dev.tsv", "test.tsv"};
            std::vector<fs::path> outs;
            for (const char* n : names) {
                outs.push_back(run.declare_output(n));
            }
            run.write_manifest(false);
            auto d = generate_synthetic(cfg);
            save_tsv(d.train_big, outs[0]);
            save_tsv(d.train_small, outs[1]);
            save_tsv(d.dev, outs[2]);
            save_tsv(d.test, outs[3]);
            std::printf("train_big %zu  train_small %zu  dev %zu  test %zu records\n", d.train_big.size(),
                        d.train_small.size(), d.dev.size(), d.test.size());
            run.finish();
        };
    });

    // tokenizer-train
    auto* tok = sub("tokenizer-train", "Train a WordPiece vocabulary on queries and documents");
    tok->add_option("--data", p.corpus, "TSV files")->required();
    tok->callback([&] {
        action = [&] {
            Run run("tokenizer-train", g);
            const auto max_size = run.size("tokenizer.vocab_size", 2000);
            const auto min_freq = run.size("tokenizer.min_freq", 2);
            std::vector<DatasetSplit> splits;
            for (std::size_t i = 0; i < p.corpus.size(); ++i) {
                splits.push_back(load_split(run, "data" + std::to_string(i), p.corpus[i], SplitKind::TrainBig));
            }
            auto out = run.declare_output("vocab.txt");
            run.write_manifest(false);
            std::vector<std::string> text;
            for (const auto& s : splits) {
                for (const auto& r : s.records()) {
                    text.push_back(r.query);
                    text.push_back(r.doc_repr);
                }
            }
            auto vocab = train_vocab(text, max_size, min_freq);
            vocab.save(out);
            std::printf("vocabulary of %zu tokens\n", vocab.size());
            run.finish();
        };
    });

    // train-teacher
    auto* teacher = sub("train-teacher", "Train the query-doc cross-encoder");
    data_flags(teacher, false);
    teacher->add_option("--vocab", p.vocab, "Vocabulary file")->required();
    teacher->add_option("--init-weights", p.init_weights, "Checkpoint with encoder/* weights to start from");
    teacher->callback([&] {
        action = [&] {
            Run run("train-teacher", g);
            auto train = load_split(run, "train", p.train, SplitKind::TrainBig);
            auto dev = load_split(run, "dev", p.dev, SplitKind::Dev);
            auto vocab = load_vocab(run, p.vocab);
            auto ec = encoder_config(run);
            auto tc = train_config(run);
            auto pooling = parse_pooling(run.str("model.pooling", "cls"));
            if (!p.init_weights.empty()) {
                run.add_input("init_weights", p.init_weights);
            }
            auto out = run.declare_output("teacher.bin");
            auto log_path = run.declare_output("teacher_metrics.tsv");
            run.write_manifest(false);
            auto model = QueryDocModel::create(ec, vocab, tc.base_seed, tc.max_len, pooling);
            if (!p.init_weights.empty()) {
                model.params().copy_values_from(load_checkpoint(p.init_weights), "encoder/");
            }
            std::vector<EpochLog> log;
            model = train_query_doc(std::move(model), train, dev, tc, &log);
            print_log(log);
            model.save(out);
            write_metrics_log(log, log_path);
            run.finish();
        };
    });

    // train-siamese and distill
    auto siamese_cmd = [&](const char* name, const char* help, bool distill) {
        auto* s = sub(name, help);
        data_flags(s, false);
        s->add_option("--vocab", p.vocab, "Vocabulary file")->required();
        s->add_option("--init-weights", p.init_weights, "Checkpoint with encoder/* weights to start from");
        if (distill) {
            s->add_option("--teacher", p.teacher, "Trained query-doc model")->required();
        }
        s->callback([&, name, distill] {
            action = [&, name, distill] {
                Run run(name, g);
                auto train = load_split(run, "train", p.train, SplitKind::TrainBig);
                auto dev = load_split(run, "dev", p.dev, SplitKind::Dev);
                auto vocab = load_vocab(run, p.vocab);
                DistillConfig dc;
                std::optional<QueryDocModel> t;
                EncoderConfig ec;
                if (distill) {
                    dc.target_mode = parse_target_mode(run.str("distill.target_mode", "loss_average"));
                    dc.init_from_teacher = run.flag("distill.init_from_teacher", true);
                    run.add_input("teacher", p.teacher);
                    t = QueryDocModel::load(p.teacher);
                    ec = t->encoder();
                    for (const auto& [k, v] : to_key_values(ec)) {
                        run.note(k, v);
                    }
                } else {
                    ec = encoder_config(run);
                }
                auto tc = train_config(run);
                auto opt = siamese_options(run, tc.max_len);
                if (!p.init_weights.empty()) {
                    run.add_input("init_weights", p.init_weights);
                }
                const std::string base = distill ? "student" : "siamese";
                auto out = run.declare_output(base + ".bin");
                auto log_path = run.declare_output(base + "_metrics.tsv");
                run.write_manifest(false);
                auto model = SiameseModel::create(ec, vocab, opt, tc.base_seed, tc.seed);
                if (!p.init_weights.empty()) {
                    model.params().copy_values_from(load_checkpoint(p.init_weights), "encoder/");
                }
                std::vector<EpochLog> log;
                model = train_siamese(std::move(model), train, dev, tc, t ? &*t : nullptr, dc, &log);
                print_log(log);
                model.save(out);
                write_metrics_log(log, log_path);
                run.finish();
            };
        });
    };
    siamese_cmd("train-siamese", "Train a siamese model without a teacher", false);
    siamese_cmd("distill", "Train a siamese student from a query-doc teacher", true);

    // precompute
    auto* pre = sub("precompute", "Embed every distinct document into a store");
    pre->add_option("--model", p.model, "Siamese model")->required();
    pre->add_option("--data", p.corpus, "TSV files with the documents")->required();
    pre->callback([&] {
        action = [&] {
            Run run("precompute", g);
            run.add_input("model", p.model);
            std::vector<RelevanceRecord> all;
            for (std::size_t i = 0; i < p.corpus.size(); ++i) {
                auto s = load_split(run, "data" + std::to_string(i), p.corpus[i], SplitKind::Test);
                for (const auto& r : s.records()) {
                    all.push_back(r);
                    all.back().query_id += "#" + std::to_string(i);
                }
            }
            auto out = run.declare_output("embeddings.drse");
            run.write_manifest(false);
            auto model = SiameseModel::load(p.model);
            auto docs = DatasetSplit::from_records(SplitKind::Test, std::move(all));
            auto store = precompute(model, docs, run.workers());
            store.save(out);
            std::printf("%zu documents, dim %zu\n", store.size(), store.dim());
            run.finish();
        };
    });

    // quantize
    auto* quant = sub("quantize", "Quantize a precomputed embedding store to uint8");
    quant->add_option("--embeddings", p.embeddings, "Float32 store from precompute")->required();
    quant->callback([&] {
        action = [&] {
            Run run("quantize", g);
            if (!fs::exists(p.embeddings)) {
                throw DataError("embedding store not found: " + p.embeddings + " (run precompute first)");
            }
            run.add_input("embeddings", p.embeddings);
            auto out = run.declare_output("embeddings_q8.drse");
            run.write_manifest(false);
            auto store = quantize_store(EmbeddingStore::load(p.embeddings));
            store.save(out);
            std::printf("%zu documents quantized\n", store.size());
            run.finish();
        };
    });

    // train-gbrt
    auto* gb = sub("train-gbrt", "Train the GBRT ranker, optionally with the neural score");
    data_flags(gb, false);
    gb->add_option("--model", p.model, "Siamese model providing neural_score");
    gb->add_option("--embeddings", p.embeddings, "Store covering the train and dev documents");
    gb->callback([&] {
        action = [&] {
            Run run("train-gbrt", g);
            auto train = load_split(run, "train", p.train, SplitKind::TrainBig);
            auto dev = load_split(run, "dev", p.dev, SplitKind::Dev);
            auto cfg = gbrt_config(run);
            const bool neural = !p.model.empty();
            if (neural && p.embeddings.empty()) {
                throw UsageError("--model needs --embeddings (precompute required)");
            }
            if (!neural && !p.embeddings.empty()) {
                throw UsageError("--embeddings given without --model");
            }
            if (neural) {
                run.add_input("model", p.model);
                run.add_input("embeddings", p.embeddings);
            }
            run.note("gbrt.neural", neural ? "true" : "false");
            auto out = run.declare_output("gbrt.txt");
            auto log_path = run.declare_output("gbrt_log.tsv");
            run.write_manifest(false);
            auto fx = FeatureExtractor::fit(train);
            std::vector<float> ts, ds;
            if (neural) {
                auto model = SiameseModel::load(p.model);
                auto store = EmbeddingStore::load(p.embeddings);
                ts = score_split(model, store, train);
                ds = score_split(model, store, dev);
            }
            GbrtTrainLog log;
            auto model = train_gbrt(fx.extract(train, ts), labels_of(train), fx.extract(dev, ds), labels_of(dev),
                                    cfg, &log);
            model.save(out);
            std::ofstream lf(log_path);
            lf << "trees\ttrain_rmse\tdev_rmse\n";
            for (std::size_t i = 0; i < log.train_rmse.size(); ++i) {
                lf << i << '\t' << format_double(log.train_rmse[i]) << '\t' << format_double(log.dev_rmse[i])
                   << '\n';
            }
            lf.close();
            std::printf("%zu trees, best dev rmse %.5f\n", model.trees().size(),
                        log.dev_rmse[std::min(log.dev_rmse.size() - 1, model.trees().size())]);
            run.finish();
        };
    });

    // rank
    auto* rank = sub("rank", "Rank the candidates of a TSV with a model or the staged pipeline");
    rank->add_option("--data", p.data, "Candidates TSV")->required();
    rank->add_option("--model", p.model, "Query-doc or siamese model");
    rank->add_option("--embeddings", p.embeddings, "Precomputed store (siamese models)");
    rank->add_flag("--quantized", p.quantized, "Use the int8 interaction path");
    rank->add_option("--gbrt", p.gbrt, "Stage-2 GBRT; enables the staged pipeline");
    rank->add_option("--stage1", p.stage1, "Stage-1 GBRT without neural_score");
    rank->callback([&] {
        action = [&] {
            Run run("rank", g);
            auto data = load_split(run, "data", p.data, SplitKind::Test);
            const bool pipeline = !p.gbrt.empty();
            std::string kind;
            if (!p.model.empty()) {
                run.add_input("model", p.model);
                kind = model_kind(p.model);
                if (kind == "siamese" && p.embeddings.empty()) {
                    throw UsageError("precompute required: siamese ranking needs --embeddings");
                }
            }
            if (!p.embeddings.empty()) {
                run.add_input("embeddings", p.embeddings);
            }
            PipelineConfig pc;
            if (pipeline) {
                if (p.stage1.empty()) {
                    throw UsageError("--gbrt needs --stage1");
                }
                run.add_input("gbrt", p.gbrt);
                run.add_input("stage1", p.stage1);
                pc.stage1_k = run.size("pipeline.stage1_k", pc.stage1_k);
                pc.stage2_k = run.size("pipeline.stage2_k", pc.stage2_k);
                pc.workers = run.workers();
                pc.validate();
            } else if (p.model.empty()) {
                throw UsageError("rank needs --model or --gbrt");
            }
            run.note("rank.quantized", p.quantized ? "true" : "false");
            auto out = run.declare_output("ranking.tsv");
            run.write_manifest(false);

            std::optional<SiameseModel> siamese;
            std::optional<EmbeddingStore> store;
            std::optional<QuantizedInteraction> qi;
            if (kind == "siamese") {
                siamese = SiameseModel::load(p.model);
                store = EmbeddingStore::load(p.embeddings);
                if (p.quantized) {
                    qi.emplace(siamese->scorer());
                }
            } else if (!kind.empty() && kind != "query_doc") {
                throw DataError("unknown model kind '" + kind + "'");
            }
            std::vector<RankedList> lists;
            if (pipeline) {
                auto stage2 = GbrtModel::load(p.gbrt);
                if (stage2.uses(kNeuralFeature) && !siamese) {
                    throw UsageError("Stage-2 model uses neural_score: --model (siamese) and --embeddings required");
                }
                auto fx = FeatureExtractor::fit(data);
                NeuralScorer ns{siamese ? &*siamese : nullptr, store ? &*store : nullptr, qi ? &*qi : nullptr};
                auto res = run_pipeline_split(data, fx, pc, GbrtModel::load(p.stage1), stage2, ns);
                lists = std::move(res.lists);
                std::printf("P@10 %.2f over %zu queries (%zu with no retrieved documents)\n", res.report.p_at_10,
                            res.report.n_queries, res.report.n_empty);
            } else {
                std::vector<float> scores;
                if (siamese) {
                    scores = score_split(*siamese, *store, data, qi ? &*qi : nullptr);
                } else {
                    scores = QueryDocModel::load(p.model).predict_split(data, run.workers());
                }
                lists = rank_split(data, scores);
                std::printf("P@10 %.2f over %zu queries\n", evaluate(lists).p_at_10, lists.size());
            }
            write_ranking(lists, out);
            run.finish();
        };
    });

    // evaluate
    auto* ev = sub("evaluate", "Evaluate a ranking file or the random/oracle baselines");
    ev->add_option("--data", p.data, "Candidates TSV (random and oracle)");
    ev->add_option("--ranking", p.ranking, "random, oracle or file")->capture_default_str();
    ev->add_option("--ranking-file", p.ranking_file, "ranking.tsv from rank");
    ev->add_option("--runs", p.runs, "Random runs")->capture_default_str();
    ev->callback([&] {
        action = [&] {
            Run run("evaluate", g);
            const auto gain = run.str("eval.gain", "linear");
            if (gain != "linear" && gain != "exponential") {
                throw UsageError("eval.gain must be linear or exponential");
            }
            const DcgGain dg = gain == "linear" ? DcgGain::Linear : DcgGain::Exponential;
            run.note("eval.ranking", p.ranking);
            std::optional<DatasetSplit> data;
            if (p.ranking == "random" || p.ranking == "oracle") {
                data = load_split(run, "data", p.data, SplitKind::Test);
            } else if (p.ranking == "file") {
                if (p.ranking_file.empty()) {
                    throw UsageError("--ranking file needs --ranking-file");
                }
                run.add_input("ranking", p.ranking_file);
            } else {
                throw UsageError("--ranking must be random, oracle or file");
            }
            if (p.ranking == "random") {
                if (p.runs == 0) {
                    throw UsageError("--runs must be positive");
                }
                run.note("eval.runs", std::to_string(p.runs));
            }
            auto out = run.declare_output("report.tsv");
            auto per_query = run.declare_output("per_query.tsv");
            run.write_manifest(false);
            EvalReport report;
            if (p.ranking == "random") {
                report = random_baseline(*data, p.runs, run.seed(), dg);
            } else if (p.ranking == "oracle") {
                report = evaluate(oracle_split(*data), dg);
            } else {
                report = evaluate(read_ranking(p.ranking_file), dg);
            }
            write_report_tsv(report, out);
            write_per_query_tsv(report, per_query);
            std::printf("P@10 %.4f  DCG %.4f  queries %zu\n", report.p_at_10, report.dcg, report.n_queries);
            run.finish();
        };
    });

    // ablations
    auto ablation_cmd = [&](const char* name, const char* help, int which) {
        auto* s = sub(name, help);
        data_flags(s, true);
        s->add_option("--vocab", p.vocab, "Vocabulary file")->required();
        if (which == 2) {
            s->add_option("--sizes", p.sizes, "Comma-separated training set sizes");
        }
        s->callback([&, name, which] {
            action = [&, name, which] {
                Run run(name, g);
                ExperimentData data{load_split(run, "train", p.train, SplitKind::TrainBig),
                                    load_split(run, "dev", p.dev, SplitKind::Dev),
                                    load_split(run, "test", p.test, SplitKind::Test)};
                auto vocab = load_vocab(run, p.vocab);
                AblationConfig ac;
                ac.encoder = encoder_config(run);
                ac.train = train_config(run);
                ac.gbrt = gbrt_config(run);
                ac.siamese = siamese_options(run, ac.train.max_len);
                ac.seeds = run.size("ablate.seeds", 4);
                ac.with_gbrt = run.flag("ablate.with_gbrt", true);
                std::vector<std::size_t> sizes;
                if (which == 2) {
                    sizes = parse_sizes(run.str("ablate.sizes", p.sizes.empty() ? "500,1000,2000,4000" : p.sizes));
                }
                const std::string file = std::string(name) + ".tsv";
                auto out = run.declare_output(file);
                run.write_manifest(false);
                std::vector<AblationRow> rows;
                if (which == 0) {
                    rows = ablate_parts(data, vocab, ac);
                } else if (which == 1) {
                    rows = ablate_interaction(data, vocab, ac);
                } else {
                    rows = ablate_volume(data, vocab, ac, sizes);
                }
                print_rows(rows);
                write_ablation_tsv(rows, out, which == 0 ? "parts" : which == 1 ? "variant" : "train_size");
                run.finish();
            };
        });
    };
    ablation_cmd("ablate-parts", "Single and cumulative document-part masks", 0);
    ablation_cmd("ablate-interaction", "Every interaction variant over several seeds", 1);
    ablation_cmd("ablate-volume", "Siamese P@10 against training set size", 2);

    // bench
    auto* be = sub("bench", "Latency of embedding, interaction and cross-encoder forwards");
    be->add_option("--vocab", p.vocab, "Vocabulary file (a small synthetic one by default)");
    be->callback([&] {
        action = [&] {
            Run run("bench", g);
            BenchConfig bc;
            bc.dims = parse_sizes(run.str("bench.dims", "32,64,128"));
            bc.layers = run.size("bench.layers", bc.layers);
            bc.warmup = run.size("bench.warmup", bc.warmup);
            bc.samples = run.size("bench.samples", bc.samples);
            bc.inner_reps = run.size("bench.inner_reps", bc.inner_reps);
            bc.seed = run.seed();
            Vocab vocab;
            if (!p.vocab.empty()) {
                vocab = load_vocab(run, p.vocab);
            }
            auto out = run.declare_output("bench.tsv");
            run.write_manifest(false);
            if (p.vocab.empty()) {
                SynthConfig sc;
                sc.seed = run.seed();
                auto d = generate_synthetic(sc);
                std::vector<std::string> text;
                for (const auto& r : d.train_big.records()) {
                    text.push_back(r.doc_repr);
                }
                vocab = train_vocab(text, 2000, 2);
            }
            auto res = bench(vocab, bc);
            for (const auto& r : res.rows) {
                std::printf("dim %4zu  %-22s median %10.3f us  p95 %10.3f us\n", r.dim, r.measure.c_str(),
                            r.median_us, r.p95_us);
            }
            for (auto d : bc.dims) {
                std::printf("dim %4zu  cross/interaction %.1fx  quantized speedup %.2fx\n", d,
                            res.cross_over_interaction(d), res.quantized_speedup(d));
            }
            write_bench_tsv(res, out);
            run.finish();
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    try {
        if (action) {
            action();
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}

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

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "siamrank/dataset.hpp"
#include "siamrank/embedding_store.hpp"
#include "siamrank/gbrt.hpp"
#include "siamrank/metrics.hpp"
#include "siamrank/models.hpp"
#include "siamrank/tokenizer.hpp"

namespace py = pybind11;
using namespace siamrank;

namespace {

py::dict record_dict(const RelevanceRecord& r)
{
    py::dict d;
    d["query_id"] = r.query_id;
    d["query"] = r.query;
    d["url"] = r.url_raw;
    d["title"] = r.title;
    d["bte"] = r.bte;
    d["doc_repr"] = r.doc_repr;
    d["label"] = r.label;
    return d;
}

RankedList list_from_labels(const std::vector<double>& labels)
{
    RankedList l{"q", {}};
    for (std::size_t i = 0; i < labels.size(); ++i) {
        l.items.push_back({std::to_string(i), static_cast<double>(labels.size() - i), labels[i]});
    }
    return l;
}

DcgGain parse_gain(const std::string& name)
{
    if (name == "linear") {
        return DcgGain::Linear;
    }
    if (name == "exponential") {
        return DcgGain::Exponential;
    }
    throw UsageError("unknown gain '" + name + "' (linear, exponential)");
}

}  // namespace

PYBIND11_MODULE(_core, m)
{
    m.doc() = "Siamese transformer relevance ranking";

    auto usage = py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
    py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
    (void)usage;

    m.def("preprocess_url", &preprocess_url, py::arg("url"));
    m.def(
        "assemble_doc_repr",
        [](const std::string& title, const std::string& url, const std::string& bte, const std::string& parts) {
            return assemble_doc_repr(title, url, bte, PartMask::parse(parts));
        },
        py::arg("title"), py::arg("url"), py::arg("bte"), py::arg("parts") = "all");
    m.def(
        "map_label",
        [](const std::string& annotation, const std::string& split) {
            static const std::map<std::string, Annotation> names = {{"useful", Annotation::Useful},
                                                                     {"little_useful", Annotation::LittleUseful},
                                                                     {"almost_not_useful", Annotation::AlmostNotUseful},
                                                                     {"not_useful", Annotation::NotUseful}};
            auto it = names.find(annotation);
            if (it == names.end()) {
                throw UsageError("unknown annotation '" + annotation + "'");
            }
            return map_label(it->second, parse_split_kind(split));
        },
        py::arg("annotation"), py::arg("split"));

    py::class_<DatasetSplit>(m, "DatasetSplit")
        .def_static(
            "load",
            [](const std::filesystem::path& path, const std::string& kind, const std::string& parts) {
                return load_tsv(path, parse_split_kind(kind), PartMask::parse(parts));
            },
            py::arg("path"), py::arg("kind") = "test", py::arg("parts") = "all")
        .def("save", [](const DatasetSplit& s, const std::filesystem::path& p) { save_tsv(s, p); })
        .def("__len__", &DatasetSplit::size)
        .def_property_readonly("kind", [](const DatasetSplit& s) { return std::string(to_string(s.kind())); })
        .def_property_readonly("dropped_empty", &DatasetSplit::dropped_empty)
        .def("record", [](const DatasetSplit& s, std::size_t i) { return record_dict(s.records().at(i)); })
        .def("records",
             [](const DatasetSplit& s) {
                 py::list out;
                 for (const auto& r : s.records()) {
                     out.append(record_dict(r));
                 }
                 return out;
             })
        .def("query_ids", [](const DatasetSplit& s) {
            std::vector<std::string> ids;
            for (const auto& g : s.groups()) {
                ids.push_back(g.query_id);
            }
            return ids;
        });

    m.def(
        "generate_synthetic",
        [](std::size_t n_queries, std::size_t docs_per_query, std::size_t vocab_size, std::size_t body_words,
           std::uint64_t seed) {
            SynthConfig cfg;
            cfg.n_queries = n_queries;
            cfg.docs_per_query = docs_per_query;
            cfg.vocab_size = vocab_size;
            cfg.body_words = body_words;
            cfg.seed = seed;
            auto d = generate_synthetic(cfg);
            py::dict out;
            out["train_big"] = d.train_big;
            out["train_small"] = d.train_small;
            out["dev"] = d.dev;
            out["test"] = d.test;
            return out;
        },
        py::arg("n_queries") = 200, py::arg("docs_per_query") = 20, py::arg("vocab_size") = 400,
        py::arg("body_words") = 12, py::arg("seed") = 1);

    py::class_<Vocab>(m, "Vocab")
        .def_static("load", &Vocab::load)
        .def_static(
            "train",
            [](const std::vector<std::string>& corpus, std::size_t max_size, std::size_t min_freq) {
                return train_vocab(corpus, max_size, min_freq);
            },
            py::arg("corpus"), py::arg("max_size") = 2000, py::arg("min_freq") = 2)
        .def("save", &Vocab::save)
        .def("__len__", &Vocab::size)
        .def("tokens", &Vocab::tokens)
        .def(
            "encode", [](const Vocab& v, const std::string& text, std::size_t max_len) { return encode(text, v, max_len).ids; },
            py::arg("text"), py::arg("max_len") = kDefaultMaxLen)
        .def(
            "encode_pair",
            [](const Vocab& v, const std::string& q, const std::string& d, std::size_t max_len) {
                auto s = encode_pair(q, d, v, max_len);
                return py::make_tuple(s.ids, s.segments);
            },
            py::arg("query"), py::arg("doc"), py::arg("max_len") = kDefaultMaxLen)
        .def("decode", [](const Vocab& v, const std::vector<TokenId>& ids) { return decode(ids, v); });

    m.def(
        "p_at_10", [](const std::vector<double>& labels) { return p_at_10(list_from_labels(labels)); },
        py::arg("labels"), "Precision at 10 of labels listed in rank order.");
    m.def(
        "dcg",
        [](const std::vector<double>& labels, std::size_t cutoff, const std::string& gain) {
            return dcg(list_from_labels(labels), cutoff, parse_gain(gain));
        },
        py::arg("labels"), py::arg("cutoff") = 10, py::arg("gain") = "linear");
    m.def(
        "evaluate_scores",
        [](const DatasetSplit& split, const std::vector<float>& scores) {
            if (scores.size() != split.size()) {
                throw UsageError("one score per record required");
            }
            auto r = evaluate(rank_split(split, scores));
            return py::dict(py::arg("p_at_10") = r.p_at_10, py::arg("dcg") = r.dcg,
                            py::arg("n_queries") = r.n_queries);
        },
        py::arg("split"), py::arg("scores"));
    m.def(
        "random_baseline",
        [](const DatasetSplit& split, std::size_t runs, std::uint64_t seed) {
            return random_baseline(split, runs, seed).p_at_10;
        },
        py::arg("split"), py::arg("runs") = 100, py::arg("seed") = 0);
    m.def(
        "oracle_p_at_10", [](const DatasetSplit& split) { return evaluate(oracle_split(split)).p_at_10; },
        py::arg("split"));

    py::class_<QueryDocModel>(m, "QueryDocModel")
        .def_static("load", &QueryDocModel::load)
        .def("save", &QueryDocModel::save)
        .def("predict", &QueryDocModel::predict, py::arg("query"), py::arg("doc_repr"))
        .def("predict_split", &QueryDocModel::predict_split, py::arg("split"), py::arg("workers") = 1);

    py::class_<SiameseModel>(m, "SiameseModel")
        .def_static("load", &SiameseModel::load)
        .def_static(
            "create",
            [](const Vocab& vocab, std::size_t hidden, std::size_t layers, std::size_t heads, std::size_t ff_dim,
               const std::string& variant, std::uint64_t seed) {
                EncoderConfig ec;
                ec.hidden = hidden;
                ec.layers = layers;
                ec.heads = heads;
                ec.ff_dim = ff_dim;
                ec.vocab_size = vocab.size();
                SiameseModel::Options o;
                o.variant = parse_interaction(variant);
                return SiameseModel::create(ec, vocab, o, 1000, seed);
            },
            py::arg("vocab"), py::arg("hidden") = 64, py::arg("layers") = 2, py::arg("heads") = 2,
            py::arg("ff_dim") = 256, py::arg("variant") = "final", py::arg("seed") = 1)
        .def("save", &SiameseModel::save)
        .def_property_readonly("dim", &SiameseModel::dim)
        .def_property_readonly("variant", [](const SiameseModel& s) { return std::string(to_string(s.variant())); })
        .def("embed",
             [](const SiameseModel& s, const std::string& text) {
                 auto v = s.embed(text);
                 return py::array_t<float>(static_cast<py::ssize_t>(v.size()), v.data());
             })
        .def("score",
             [](const SiameseModel& s, py::array_t<float, py::array::c_style | py::array::forcecast> q,
                py::array_t<float, py::array::c_style | py::array::forcecast> d) {
                 return s.score({q.data(), static_cast<std::size_t>(q.size())},
                                {d.data(), static_cast<std::size_t>(d.size())});
             })
        .def("predict", &SiameseModel::predict, py::arg("query"), py::arg("doc_repr"))
        .def("predict_split", &SiameseModel::predict_split, py::arg("split"), py::arg("workers") = 1);

    py::class_<EmbeddingStore>(m, "EmbeddingStore")
        .def_static("load", &EmbeddingStore::load)
        .def_static(
            "precompute",
            [](const SiameseModel& model, const DatasetSplit& docs) { return precompute(model, docs); },
            py::arg("model"), py::arg("docs"))
        .def("quantized", [](const EmbeddingStore& s) { return quantize_store(s); })
        .def("save", &EmbeddingStore::save)
        .def("__len__", &EmbeddingStore::size)
        .def("__contains__", &EmbeddingStore::contains)
        .def_property_readonly("dim", &EmbeddingStore::dim)
        .def_property_readonly("is_quantized",
                               [](const EmbeddingStore& s) { return s.dtype() == StoreDtype::QuantU8; })
        .def("keys", &EmbeddingStore::keys)
        .def("lookup",
             [](const EmbeddingStore& s, const std::string& key) -> py::object {
                 auto v = s.lookup(key);
                 if (!v) {
                     return py::none();
                 }
                 return py::array_t<float>(static_cast<py::ssize_t>(v->size()), v->data());
             })
        .def(
            "score",
            [](const EmbeddingStore& s, const SiameseModel& model, const std::string& query,
               const std::vector<std::string>& keys) { return score_candidates(model, s, query, keys); },
            py::arg("model"), py::arg("query"), py::arg("keys"));

    py::class_<GbrtModel>(m, "GbrtModel")
        .def_static("load", &GbrtModel::load)
        .def("save", &GbrtModel::save)
        .def_property_readonly("schema", &GbrtModel::schema)
        .def_property_readonly("n_trees", [](const GbrtModel& g) { return g.trees().size(); })
        .def("predict", [](const GbrtModel& g, py::array_t<double, py::array::c_style | py::array::forcecast> x) {
            if (x.ndim() != 2 || static_cast<std::size_t>(x.shape(1)) != g.schema().size()) {
                throw DataError("expected a (rows, " + std::to_string(g.schema().size()) + ") feature array");
            }
            std::vector<double> out(static_cast<std::size_t>(x.shape(0)));
            for (std::size_t i = 0; i < out.size(); ++i) {
                out[i] = g.predict(std::span<const double>(x.data() + i * g.schema().size(), g.schema().size()));
            }
            return out;
        });

    m.def("lexical_feature_names", &lexical_feature_names);
}

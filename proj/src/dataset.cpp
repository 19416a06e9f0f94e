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

#include "siamrank/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "siamrank/common.hpp"

namespace siamrank {

std::string_view to_string(SplitKind kind)
{
    switch (kind) {
    case SplitKind::TrainBig:
        return "train_big";
    case SplitKind::TrainSmall:
        return "train_small";
    case SplitKind::Dev:
        return "dev";
    case SplitKind::Test:
        return "test";
    }
    return "test";
}

SplitKind parse_split_kind(std::string_view name)
{
    if (name == "train_big" || name == "train-big" || name == "train") {
        return SplitKind::TrainBig;
    }
    if (name == "train_small" || name == "train-small") {
        return SplitKind::TrainSmall;
    }
    if (name == "dev") {
        return SplitKind::Dev;
    }
    if (name == "test") {
        return SplitKind::Test;
    }
    throw UsageError("unknown split kind '" + std::string(name) + "'");
}

DatasetSplit DatasetSplit::from_records(SplitKind kind, std::vector<RelevanceRecord> records)
{
    DatasetSplit split;
    split.kind_ = kind;
    std::unordered_map<std::string, std::size_t> group_of;
    std::set<std::pair<std::string, std::string>> seen_pairs;
    for (std::size_t i = 0; i < records.size(); ++i) {
        auto& r = records[i];
        r.split = kind;
        if (split_words(r.query).empty()) {
            throw DataError("record " + std::to_string(i) + ": empty query");
        }
        if (!(r.label >= 0.0 && r.label <= 1.0)) {
            throw DataError("record " + std::to_string(i) + ": label outside [0,1]");
        }
        if (!seen_pairs.emplace(r.query, r.url_raw).second) {
            throw DataError("duplicate (query, url) pair: '" + r.query + "', '" + r.url_raw + "'");
        }
        auto [it, inserted] = group_of.emplace(r.query_id, split.groups_.size());
        if (inserted) {
            split.groups_.push_back({r.query_id, {}});
        }
        split.groups_[it->second].indices.push_back(i);
    }
    split.records_ = std::move(records);
    return split;
}

DatasetSplit DatasetSplit::subset_groups(const std::vector<std::size_t>& group_positions) const
{
    std::vector<RelevanceRecord> out;
    for (std::size_t g : group_positions) {
        for (std::size_t idx : groups_.at(g).indices) {
            out.push_back(records_[idx]);
        }
    }
    return from_records(kind_, std::move(out));
}

PartMask PartMask::parse(std::string_view spec)
{
    PartMask mask{false, false, false};
    std::string s(spec);
    std::replace(s.begin(), s.end(), ',', ' ');
    std::replace(s.begin(), s.end(), '+', ' ');
    for (const auto& part : split_words(s)) {
        if (part == "title") {
            mask.title = true;
        } else if (part == "url") {
            mask.url = true;
        } else if (part == "bte") {
            mask.bte = true;
        } else if (part == "all") {
            mask = all();
        } else {
            throw UsageError("unknown document part '" + part + "'");
        }
    }
    return mask;
}

double map_label(Annotation annotation, SplitKind split)
{
    switch (annotation) {
    case Annotation::Useful:
        return 1.0;
    case Annotation::LittleUseful:
        return split == SplitKind::Test ? 0.75 : 0.5;
    case Annotation::AlmostNotUseful:
        return (split == SplitKind::Test || split == SplitKind::TrainBig) ? 0.25 : 0.5;
    case Annotation::NotUseful:
        return 0.0;
    }
    return 0.0;
}

namespace {

int hex_value(char c)
{
    if (c >= '0' && c <= '9') {
        return c - '0';
    }
    if (c >= 'a' && c <= 'f') {
        return c - 'a' + 10;
    }
    if (c >= 'A' && c <= 'F') {
        return c - 'A' + 10;
    }
    return -1;
}

bool starts_with_at(std::string_view s, std::size_t pos, std::string_view prefix)
{
    return s.substr(pos, prefix.size()) == prefix;
}

}  // namespace

std::string preprocess_url(std::string_view url_raw)
{
    std::string decoded;
    decoded.reserve(url_raw.size());
    for (std::size_t i = 0; i < url_raw.size(); ++i) {
        char c = url_raw[i];
        if (c == '%' && i + 2 < url_raw.size()) {
            int hi = hex_value(url_raw[i + 1]);
            int lo = hex_value(url_raw[i + 2]);
            if (hi >= 0 && lo >= 0) {
                decoded.push_back(static_cast<char>(hi * 16 + lo));
                i += 2;
                continue;
            }
        }
        decoded.push_back(c == '+' ? ' ' : c);
    }

    std::string stripped;
    stripped.reserve(decoded.size());
    for (std::size_t i = 0; i < decoded.size();) {
        std::size_t scheme = 0;
        if (starts_with_at(decoded, i, "https://")) {
            scheme = 8;
        } else if (starts_with_at(decoded, i, "http://")) {
            scheme = 7;
        }
        if (scheme > 0) {
            i += scheme;
            if (starts_with_at(decoded, i, "www.")) {
                i += 4;
            }
            continue;
        }
        char c = decoded[i];
        stripped.push_back((c == '-' || c == '_' || c == '\t') ? ' ' : c);
        ++i;
    }
    return utf8_lower(stripped);
}

std::string assemble_doc_repr(std::string_view title, std::string_view url_processed,
                              std::string_view bte, PartMask mask)
{
    std::string out;
    auto add = [&](std::string_view prefix, std::string_view value) {
        if (!out.empty()) {
            out.push_back(' ');
        }
        out.append(prefix);
        out.append(value);
    };
    if (mask.title) {
        add("title: ", title);
    }
    if (mask.url) {
        add("url: ", url_processed);
    }
    if (mask.bte) {
        add("bte: ", bte);
    }
    return out;
}

namespace {

std::vector<std::string_view> split_tabs(std::string_view line)
{
    std::vector<std::string_view> cols;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find('\t', start);
        if (pos == std::string_view::npos) {
            cols.push_back(line.substr(start));
            break;
        }
        cols.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return cols;
}

double parse_label(std::string_view text, std::size_t line_no)
{
    std::string s(text);
    std::size_t used = 0;
    double value = 0.0;
    try {
        value = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != s.size()) {
        throw DataError("line " + std::to_string(line_no) + ": label '" + s + "' is not a decimal");
    }
    if (!(value >= 0.0 && value <= 1.0)) {
        throw DataError("line " + std::to_string(line_no) + ": label " + s + " outside [0,1]");
    }
    return value;
}

RelevanceRecord make_record(std::string query_id, std::string_view query, std::string_view url,
                            std::string_view bte, std::string_view title, double label,
                            SplitKind kind, PartMask mask)
{
    RelevanceRecord r;
    r.query_id = std::move(query_id);
    r.query = join(split_words(utf8_lower(query)), " ");
    r.url_raw = std::string(url);
    r.title = utf8_lower(title);
    r.bte = utf8_lower(bte);
    r.doc_repr = assemble_doc_repr(r.title, preprocess_url(r.url_raw), r.bte, mask);
    r.label = label;
    r.split = kind;
    return r;
}

constexpr std::string_view kHeader = "id\tquery\turl\tdoc\ttitle\tlabel";

}  // namespace

DatasetSplit load_tsv(const std::filesystem::path& path, SplitKind kind, PartMask mask)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw DataError(path.string() + ": missing header row");
    }
    if (line != kHeader) {
        throw DataError(path.string() + ": line 1: expected header '" + std::string(kHeader) + "'");
    }
    std::vector<RelevanceRecord> records;
    std::size_t dropped = 0;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() && in.peek() == EOF) {
            break;
        }
        if (line.find('\r') != std::string::npos) {
            throw DataError(path.string() + ": line " + std::to_string(line_no) +
                            ": carriage return inside a field");
        }
        auto cols = split_tabs(line);
        if (cols.size() != 6) {
            throw DataError(path.string() + ": line " + std::to_string(line_no) + ": expected 6 columns, got " +
                            std::to_string(cols.size()));
        }
        double label = parse_label(cols[5], line_no);
        if (is_training(kind) && cols[3].empty() && cols[4].empty()) {
            ++dropped;
            continue;
        }
        records.push_back(make_record(std::string(cols[0]), cols[1], cols[2], cols[3], cols[4], label, kind, mask));
    }
    DatasetSplit split;
    try {
        split = DatasetSplit::from_records(kind, std::move(records));
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
    split.set_dropped_empty(dropped);
    return split;
}

namespace {

std::string format_label(double label)
{
    std::ostringstream os;
    os.precision(17);
    os << label;
    std::string s = os.str();
    if (s.find_first_of(".e") == std::string::npos) {
        s += ".0";
    }
    return s;
}

void check_field(const std::string& field)
{
    if (field.find_first_of("\t\n\r") != std::string::npos) {
        throw DataError("field contains a tab or newline: '" + field + "'");
    }
}

}  // namespace

void save_tsv(const DatasetSplit& split, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    out << kHeader << '\n';
    for (const auto& r : split.records()) {
        for (const auto* f : {&r.query_id, &r.query, &r.url_raw, &r.bte, &r.title}) {
            check_field(*f);
        }
        out << r.query_id << '\t' << r.query << '\t' << r.url_raw << '\t' << r.bte << '\t' << r.title << '\t'
            << format_label(r.label) << '\n';
    }
    if (!out) {
        throw DataError("write failed: " + path.string());
    }
}

DatasetSplit with_mask(const DatasetSplit& split, PartMask mask)
{
    std::vector<RelevanceRecord> records = split.records();
    for (auto& r : records) {
        r.doc_repr = assemble_doc_repr(r.title, preprocess_url(r.url_raw), r.bte, mask);
    }
    auto out = DatasetSplit::from_records(split.kind(), std::move(records));
    out.set_dropped_empty(split.dropped_empty());
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic data

void SynthConfig::validate() const
{
    if (vocab_size < 60) {
        throw UsageError("synthetic vocab_size must be at least 60");
    }
    if (n_queries < 8) {
        throw UsageError("synthetic n_queries must be at least 8");
    }
    if (docs_per_query < 10) {
        throw UsageError("docs_per_query must be at least 10 for P@10");
    }
    if (!(relevant_fraction > 0.0 && relevant_fraction < 1.0)) {
        throw UsageError("relevant_fraction must lie in (0,1)");
    }
    if (!(noise >= 0.0 && noise <= 1.0)) {
        throw UsageError("noise must lie in [0,1]");
    }
    if (body_words < 6) {
        throw UsageError("body_words must be at least 6");
    }
}

namespace {

constexpr std::size_t kConceptsPerTopic = 8;

struct Lexicon {
    std::vector<std::string> common;
    std::vector<std::string> sites;
    // concept -> two synonymous surface forms
    std::vector<std::array<std::string, 2>> concepts;
    std::size_t n_topics = 0;

    std::size_t topic_of(std::size_t concept_id) const { return concept_id / kConceptsPerTopic; }
    std::size_t topic_size(std::size_t topic) const
    {
        std::size_t begin = topic * kConceptsPerTopic;
        return std::min(kConceptsPerTopic, concepts.size() - begin);
    }
};

Lexicon build_lexicon(std::size_t vocab_size, Rng& rng)
{
    static constexpr std::string_view kConsonants = "bcdfghjklmnprstvz";
    static constexpr std::string_view kVowels = "aeiouy";
    std::set<std::string> seen;
    std::vector<std::string> words;
    while (words.size() < vocab_size) {
        std::size_t syllables = 2 + rng.uniform(2);
        std::string w;
        for (std::size_t s = 0; s < syllables; ++s) {
            w.push_back(kConsonants[rng.uniform(kConsonants.size())]);
            w.push_back(kVowels[rng.uniform(kVowels.size())]);
        }
        if (seen.insert(w).second) {
            words.push_back(std::move(w));
        }
    }
    Lexicon lex;
    std::size_t n_common = std::max<std::size_t>(4, vocab_size / 10);
    std::size_t n_sites = std::max<std::size_t>(4, vocab_size / 20);
    std::size_t pos = 0;
    for (; pos < n_common; ++pos) {
        lex.common.push_back(words[pos]);
    }
    for (; pos < n_common + n_sites; ++pos) {
        lex.sites.push_back(words[pos]);
    }
    for (; pos + 1 < words.size(); pos += 2) {
        lex.concepts.push_back({words[pos], words[pos + 1]});
    }
    // Drop a trailing partial topic so every topic has kConceptsPerTopic.
    std::size_t full = (lex.concepts.size() / kConceptsPerTopic) * kConceptsPerTopic;
    lex.concepts.resize(full);
    lex.n_topics = full / kConceptsPerTopic;
    return lex;
}

std::size_t sample_query_length(Rng& rng)
{
    // Mean 2.75 terms, mode 2-3.
    double u = rng.uniform01();
    if (u < 0.15) {
        return 1;
    }
    if (u < 0.45) {
        return 2;
    }
    if (u < 0.75) {
        return 3;
    }
    if (u < 0.90) {
        return 4;
    }
    return 5;
}

enum class DocKind { Relevant, Partial, OffTopic, UrlDistractor };

struct Query {
    std::size_t topic;
    std::vector<std::size_t> concepts;
    std::vector<std::size_t> forms;
};

struct DocBuilder {
    const Lexicon& lex;
    Rng& rng;

    std::string concept_word(std::size_t c, std::size_t preferred_form)
    {
        std::size_t form = rng.uniform01() < 0.75 ? preferred_form : 1 - preferred_form;
        return lex.concepts[c][form];
    }

    std::size_t random_concept_in_topic(std::size_t topic, const std::vector<std::size_t>& exclude)
    {
        for (int attempt = 0; attempt < 64; ++attempt) {
            std::size_t c = topic * kConceptsPerTopic + rng.uniform(lex.topic_size(topic));
            if (std::find(exclude.begin(), exclude.end(), c) == exclude.end()) {
                return c;
            }
        }
        return lex.concepts.size();
    }

    std::string filler(std::size_t topic, const std::vector<std::size_t>& exclude)
    {
        if (rng.uniform01() < 0.45) {
            return lex.common[rng.uniform(lex.common.size())];
        }
        std::size_t c = random_concept_in_topic(topic, exclude);
        if (c >= lex.concepts.size()) {
            return lex.common[rng.uniform(lex.common.size())];
        }
        return lex.concepts[c][rng.uniform(2)];
    }
};

}  // namespace

SyntheticData generate_synthetic(const SynthConfig& cfg)
{
    cfg.validate();
    Rng rng(cfg.seed);
    Lexicon lex = build_lexicon(cfg.vocab_size, rng);
    if (lex.n_topics < 2) {
        throw UsageError("synthetic vocab_size too small for two topics");
    }
    DocBuilder builder{lex, rng};

    std::size_t n_rel = static_cast<std::size_t>(std::llround(cfg.relevant_fraction * cfg.docs_per_query));
    n_rel = std::clamp<std::size_t>(n_rel, 1, cfg.docs_per_query - 1);
    std::size_t n_rest = cfg.docs_per_query - n_rel;
    std::size_t n_partial = n_rest * 2 / 5;
    std::size_t n_distract = n_rest / 4;
    std::size_t n_off = n_rest - n_partial - n_distract;

    std::size_t n_big = cfg.n_queries * 55 / 100;
    std::size_t n_small = cfg.n_queries * 15 / 100;
    std::size_t n_dev = cfg.n_queries * 15 / 100;

    std::vector<RelevanceRecord> parts[4];
    std::size_t doc_counter = 0;

    for (std::size_t qi = 0; qi < cfg.n_queries; ++qi) {
        Query q;
        q.topic = rng.uniform(lex.n_topics);
        std::size_t k = std::min(sample_query_length(rng), kConceptsPerTopic);
        while (q.concepts.size() < k) {
            std::size_t c = builder.random_concept_in_topic(q.topic, q.concepts);
            q.concepts.push_back(c);
        }
        std::vector<std::string> query_words;
        for (std::size_t c : q.concepts) {
            q.forms.push_back(rng.uniform(2));
            query_words.push_back(lex.concepts[c][q.forms.back()]);
        }
        std::string query_text = join(query_words, " ");
        std::string query_id = "q" + std::to_string(qi);

        std::vector<DocKind> kinds;
        kinds.insert(kinds.end(), n_rel, DocKind::Relevant);
        kinds.insert(kinds.end(), n_partial, DocKind::Partial);
        kinds.insert(kinds.end(), n_off, DocKind::OffTopic);
        kinds.insert(kinds.end(), n_distract, DocKind::UrlDistractor);
        rng.shuffle(kinds);

        std::size_t part = qi < n_big ? 0 : qi < n_big + n_small ? 1 : qi < n_big + n_small + n_dev ? 2 : 3;

        for (DocKind kind : kinds) {
            std::size_t topic = q.topic;
            std::vector<std::size_t> present;
            if (kind == DocKind::Relevant) {
                present = q.concepts;
            } else if (kind == DocKind::Partial) {
                std::size_t max_shared = k / 2;
                std::size_t shared = max_shared == 0 ? 0 : rng.uniform(max_shared + 1);
                std::vector<std::size_t> pool = q.concepts;
                rng.shuffle(pool);
                present.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(shared));
            } else {
                topic = (q.topic + 1 + rng.uniform(lex.n_topics - 1)) % lex.n_topics;
            }
            // Concepts of the query that must not leak into this document.
            std::vector<std::size_t> exclude;
            for (std::size_t c : q.concepts) {
                if (std::find(present.begin(), present.end(), c) == present.end()) {
                    exclude.push_back(c);
                }
            }

            std::vector<std::string> title;
            std::vector<std::string> bte;
            for (std::size_t i = 0; i < present.size(); ++i) {
                std::size_t c = present[i];
                std::size_t form = q.forms[std::find(q.concepts.begin(), q.concepts.end(), c) - q.concepts.begin()];
                bte.push_back(builder.concept_word(c, form));
                if (i == 0 || rng.uniform01() < 0.5) {
                    title.push_back(builder.concept_word(c, form));
                } else if (rng.uniform01() < 0.5) {
                    bte.push_back(builder.concept_word(c, form));
                }
            }
            std::size_t title_len = 3 + rng.uniform(4);
            while (title.size() < title_len) {
                title.push_back(builder.filler(topic, exclude));
            }
            std::size_t bte_len = cfg.body_words + rng.uniform(cfg.body_words);
            while (bte.size() < bte_len) {
                bte.push_back(builder.filler(topic, exclude));
            }
            rng.shuffle(title);
            rng.shuffle(bte);

            std::string site = lex.sites[rng.uniform(lex.sites.size())];
            std::vector<std::string> path_words;
            if (kind == DocKind::UrlDistractor) {
                path_words = query_words;
            } else {
                for (std::size_t i = 0; i < 3 && i < title.size(); ++i) {
                    path_words.push_back(title[i]);
                }
            }
            std::string url = "https://www." + site + ".cz/" + lex.concepts[topic * kConceptsPerTopic][0] + "/" +
                              join(path_words, "-") + "-" + std::to_string(doc_counter++);

            std::size_t matched = 0;
            for (std::size_t c : q.concepts) {
                bool hit = false;
                for (const auto* words : {&title, &bte}) {
                    for (const auto& w : *words) {
                        if (w == lex.concepts[c][0] || w == lex.concepts[c][1]) {
                            hit = true;
                        }
                    }
                }
                matched += hit ? 1 : 0;
            }
            double fraction = static_cast<double>(matched) / static_cast<double>(k);
            double label = std::floor(4.0 * fraction + 1e-9) / 4.0;
            if (cfg.noise > 0.0 && rng.uniform01() < cfg.noise) {
                label = 1.0 - label;
            }

            RelevanceRecord r;
            r.query_id = query_id;
            r.query = query_text;
            r.url_raw = url;
            r.title = join(title, " ");
            r.bte = join(bte, " ");
            r.doc_repr = assemble_doc_repr(r.title, preprocess_url(r.url_raw), r.bte);
            r.label = label;
            parts[part].push_back(std::move(r));
        }
    }

    SyntheticData data;
    data.train_big = DatasetSplit::from_records(SplitKind::TrainBig, std::move(parts[0]));
    data.train_small = DatasetSplit::from_records(SplitKind::TrainSmall, std::move(parts[1]));
    data.dev = DatasetSplit::from_records(SplitKind::Dev, std::move(parts[2]));
    data.test = DatasetSplit::from_records(SplitKind::Test, std::move(parts[3]));
    return data;
}

}  // namespace siamrank

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

#include "siamrank/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <unordered_map>

#include "siamrank/common.hpp"

namespace siamrank {

namespace {

constexpr std::string_view kSpecials[] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]"};
constexpr std::size_t kMaxWordBytes = 100;

std::size_t utf8_char_len(unsigned char lead)
{
    if (lead < 0x80) {
        return 1;
    }
    if ((lead & 0xE0) == 0xC0) {
        return 2;
    }
    if ((lead & 0xF0) == 0xE0) {
        return 3;
    }
    if ((lead & 0xF8) == 0xF0) {
        return 4;
    }
    return 1;
}

/// Byte offsets of code point boundaries, including 0 and size().
std::vector<std::size_t> char_boundaries(std::string_view word)
{
    std::vector<std::size_t> cuts{0};
    std::size_t i = 0;
    while (i < word.size()) {
        i = std::min(word.size(), i + utf8_char_len(static_cast<unsigned char>(word[i])));
        cuts.push_back(i);
    }
    return cuts;
}

std::string_view strip_continuation(std::string_view piece)
{
    return piece.starts_with("##") ? piece.substr(2) : piece;
}

}  // namespace

Vocab::Vocab()
{
    for (auto s : kSpecials) {
        ids_.emplace(std::string(s), static_cast<TokenId>(tokens_.size()));
        tokens_.emplace_back(s);
    }
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens)
{
    if (tokens.size() < 4) {
        throw DataError("vocabulary must hold the four special tokens");
    }
    for (std::size_t i = 0; i < 4; ++i) {
        if (tokens[i] != kSpecials[i]) {
            throw DataError("vocabulary line " + std::to_string(i) + " must be " + std::string(kSpecials[i]));
        }
    }
    Vocab v;
    v.tokens_.clear();
    v.ids_.clear();
    for (auto& t : tokens) {
        if (t.empty() || t.find_first_of(" \t\n\r") != std::string::npos) {
            throw DataError("invalid vocabulary token '" + t + "'");
        }
        if (!v.ids_.emplace(t, static_cast<TokenId>(v.tokens_.size())).second) {
            throw DataError("duplicate vocabulary token '" + t + "'");
        }
        v.tokens_.push_back(std::move(t));
    }
    return v;
}

Vocab Vocab::load(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open vocabulary " + path.string());
    }
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
        tokens.push_back(line);
    }
    return from_tokens(std::move(tokens));
}

void Vocab::save(const std::filesystem::path& path) const
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw DataError("cannot write vocabulary " + path.string());
    }
    for (const auto& t : tokens_) {
        out << t << '\n';
    }
}

std::optional<TokenId> Vocab::find(std::string_view piece) const
{
    auto it = ids_.find(std::string(piece));
    if (it == ids_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::size_t TokenSequence::content_length() const
{
    std::size_t n = ids.size();
    while (n > 0 && ids[n - 1] == kPadId) {
        --n;
    }
    return n;
}

std::vector<std::string> pre_tokenize(std::string_view text)
{
    std::vector<std::string> words;
    for (const auto& chunk : split_words(text)) {
        std::string current;
        for (char c : chunk) {
            auto uc = static_cast<unsigned char>(c);
            if (uc < 0x80 && std::ispunct(uc)) {
                if (!current.empty()) {
                    words.push_back(std::move(current));
                    current.clear();
                }
                words.emplace_back(1, c);
            } else {
                current.push_back(c);
            }
        }
        if (!current.empty()) {
            words.push_back(std::move(current));
        }
    }
    return words;
}

Vocab train_vocab(std::span<const std::string> corpus, std::size_t max_size, std::size_t min_freq)
{
    std::map<std::string, std::size_t> word_freq;
    for (const auto& text : corpus) {
        for (auto& w : pre_tokenize(text)) {
            if (w.size() <= kMaxWordBytes) {
                ++word_freq[w];
            }
        }
    }
    if (word_freq.empty()) {
        throw DataError("cannot train a vocabulary on an empty corpus");
    }
    min_freq = std::max<std::size_t>(min_freq, 1);

    // Symbol table shared by the alphabet and merge results.
    std::vector<std::string> symbols;
    std::unordered_map<std::string, int> symbol_id;
    auto intern = [&](const std::string& s) {
        auto [it, inserted] = symbol_id.emplace(s, static_cast<int>(symbols.size()));
        if (inserted) {
            symbols.push_back(s);
        }
        return it->second;
    };

    struct Word {
        std::vector<int> pieces;
        std::size_t freq;
    };
    std::vector<Word> words;
    std::map<std::string, std::size_t> alphabet_freq;
    for (const auto& [w, f] : word_freq) {
        auto cuts = char_boundaries(w);
        Word word{{}, f};
        for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
            std::string piece = (i == 0 ? "" : "##") + w.substr(cuts[i], cuts[i + 1] - cuts[i]);
            alphabet_freq[piece] += f;
            word.pieces.push_back(intern(piece));
        }
        words.push_back(std::move(word));
    }

    std::vector<std::pair<std::string, std::size_t>> alphabet(alphabet_freq.begin(), alphabet_freq.end());
    std::stable_sort(alphabet.begin(), alphabet.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });

    std::vector<std::string> vocab_tokens(std::begin(kSpecials), std::end(kSpecials));
    std::vector<bool> in_vocab(symbols.size(), false);
    for (const auto& [piece, f] : alphabet) {
        if (vocab_tokens.size() >= max_size) {
            break;
        }
        vocab_tokens.push_back(piece);
        in_vocab[static_cast<std::size_t>(symbol_id.at(piece))] = true;
    }

    struct PairHash {
        std::size_t operator()(std::pair<int, int> p) const
        {
            return std::hash<std::uint64_t>{}((static_cast<std::uint64_t>(p.first) << 32) ^
                                              static_cast<std::uint32_t>(p.second));
        }
    };

    while (vocab_tokens.size() < max_size) {
        std::unordered_map<std::pair<int, int>, std::size_t, PairHash> counts;
        for (const auto& w : words) {
            for (std::size_t i = 0; i + 1 < w.pieces.size(); ++i) {
                int a = w.pieces[i];
                int b = w.pieces[i + 1];
                if (in_vocab[static_cast<std::size_t>(a)] && in_vocab[static_cast<std::size_t>(b)]) {
                    counts[{a, b}] += w.freq;
                }
            }
        }
        std::pair<int, int> best{-1, -1};
        std::size_t best_count = 0;
        for (const auto& [pair, count] : counts) {
            bool better = count > best_count;
            if (!better && count == best_count && best.first >= 0) {
                const auto& sa = symbols[static_cast<std::size_t>(pair.first)];
                const auto& sb = symbols[static_cast<std::size_t>(pair.second)];
                const auto& ba = symbols[static_cast<std::size_t>(best.first)];
                const auto& bb = symbols[static_cast<std::size_t>(best.second)];
                better = sa < ba || (sa == ba && sb < bb);
            }
            if (better) {
                best = pair;
                best_count = count;
            }
        }
        if (best.first < 0 || best_count < min_freq) {
            break;
        }
        std::string merged = symbols[static_cast<std::size_t>(best.first)] +
                             std::string(strip_continuation(symbols[static_cast<std::size_t>(best.second)]));
        int merged_id = intern(merged);
        if (static_cast<std::size_t>(merged_id) >= in_vocab.size()) {
            in_vocab.resize(symbols.size(), false);
        }
        if (!in_vocab[static_cast<std::size_t>(merged_id)]) {
            in_vocab[static_cast<std::size_t>(merged_id)] = true;
            vocab_tokens.push_back(merged);
        }
        for (auto& w : words) {
            std::vector<int> next;
            next.reserve(w.pieces.size());
            for (std::size_t i = 0; i < w.pieces.size(); ++i) {
                if (i + 1 < w.pieces.size() && w.pieces[i] == best.first && w.pieces[i + 1] == best.second) {
                    next.push_back(merged_id);
                    ++i;
                } else {
                    next.push_back(w.pieces[i]);
                }
            }
            w.pieces = std::move(next);
        }
    }
    return Vocab::from_tokens(std::move(vocab_tokens));
}

std::vector<TokenId> wordpiece(std::string_view word, const Vocab& vocab)
{
    if (word.size() > kMaxWordBytes) {
        return {kUnkId};
    }
    auto cuts = char_boundaries(word);
    std::vector<TokenId> out;
    std::size_t start = 0;  // index into cuts
    std::string candidate;
    while (start + 1 < cuts.size()) {
        std::optional<TokenId> found;
        std::size_t end = cuts.size() - 1;
        for (; end > start; --end) {
            candidate.assign(start == 0 ? "" : "##");
            candidate.append(word.substr(cuts[start], cuts[end] - cuts[start]));
            found = vocab.find(candidate);
            if (found) {
                break;
            }
        }
        if (!found) {
            return {kUnkId};
        }
        out.push_back(*found);
        start = end;
    }
    return out;
}

namespace {

std::vector<TokenId> content_tokens(std::string_view text, const Vocab& vocab, std::size_t limit)
{
    std::vector<TokenId> out;
    for (const auto& w : pre_tokenize(text)) {
        for (TokenId id : wordpiece(w, vocab)) {
            if (out.size() >= limit) {
                return out;
            }
            out.push_back(id);
        }
    }
    return out;
}

}  // namespace

TokenSequence encode(std::string_view text, const Vocab& vocab, std::size_t max_len)
{
    if (max_len < 2) {
        throw UsageError("max_len must be at least 2");
    }
    TokenSequence seq;
    seq.ids.push_back(kClsId);
    auto content = content_tokens(text, vocab, max_len - 2);
    seq.ids.insert(seq.ids.end(), content.begin(), content.end());
    seq.ids.push_back(kSepId);
    return seq;
}

TokenSequence encode_pair(std::string_view query, std::string_view doc, const Vocab& vocab, std::size_t max_len)
{
    if (max_len < 3) {
        throw UsageError("max_len must be at least 3");
    }
    auto q = content_tokens(query, vocab, max_len);
    if (q.size() > max_len - 3) {
        throw DataError("query needs " + std::to_string(q.size()) + " tokens; at most " +
                        std::to_string(max_len - 3) + " fit a pair of length " + std::to_string(max_len));
    }
    auto d = content_tokens(doc, vocab, max_len - 3 - q.size());
    TokenSequence seq;
    seq.ids.reserve(q.size() + d.size() + 3);
    seq.ids.push_back(kClsId);
    seq.ids.insert(seq.ids.end(), q.begin(), q.end());
    seq.ids.push_back(kSepId);
    seq.ids.insert(seq.ids.end(), d.begin(), d.end());
    seq.ids.push_back(kSepId);
    seq.segments.assign(seq.ids.size(), 0);
    std::fill(seq.segments.begin() + static_cast<std::ptrdiff_t>(q.size() + 2), seq.segments.end(), 1);
    return seq;
}

std::string decode(std::span<const TokenId> ids, const Vocab& vocab)
{
    std::string out;
    for (TokenId id : ids) {
        if (id == kPadId || id == kClsId || id == kSepId) {
            continue;
        }
        const auto& piece = vocab.token(id);
        if (piece.starts_with("##")) {
            out.append(piece, 2);
        } else {
            if (!out.empty()) {
                out.push_back(' ');
            }
            out.append(piece);
        }
    }
    return out;
}

TokenSequence pad_to(const TokenSequence& seq, std::size_t length)
{
    TokenSequence out = seq;
    if (out.ids.size() < length) {
        out.ids.resize(length, kPadId);
        if (!out.segments.empty()) {
            out.segments.resize(length, out.segments.back());
        }
    }
    return out;
}

}  // namespace siamrank

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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace siamrank {

using TokenId = std::int32_t;

inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kUnkId = 1;
inline constexpr TokenId kClsId = 2;
inline constexpr TokenId kSepId = 3;
inline constexpr std::size_t kDefaultMaxLen = 128;

/// WordPiece vocabulary. Ids are positions in tokens(); ids 0-3 hold
/// [PAD] [UNK] [CLS] [SEP]; continuation pieces start with "##".
class Vocab {
  public:
    Vocab();

    static Vocab from_tokens(std::vector<std::string> tokens);
    static Vocab load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    std::size_t size() const { return tokens_.size(); }
    const std::vector<std::string>& tokens() const { return tokens_; }
    const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
    std::optional<TokenId> find(std::string_view piece) const;

    bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

  private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> ids_;
};

/// CLS ... SEP [PAD...]. Padding, if any, follows the last SEP.
struct TokenSequence {
    std::vector<TokenId> ids;
    /// Segment (token type) per position: 0 for the first text, 1 for the
    /// second text of a pair. Empty means all zero.
    std::vector<std::int32_t> segments;

    std::size_t size() const { return ids.size(); }
    /// Length without trailing padding.
    std::size_t content_length() const;
    bool operator==(const TokenSequence&) const = default;
};

/// Whitespace split, then every ASCII punctuation character becomes its own
/// word.
std::vector<std::string> pre_tokenize(std::string_view text);

/// Frequency-greedy WordPiece induction. Starts from the character alphabet
/// (word-initial and "##" continuation forms), then repeatedly merges the
/// most frequent adjacent pair until max_size tokens exist or no pair occurs
/// min_freq times. Ties go to the lexicographically smallest pair.
Vocab train_vocab(std::span<const std::string> corpus, std::size_t max_size = 2000, std::size_t min_freq = 2);

/// Greedy longest-match-first segmentation of a single pre-tokenized word.
/// Returns {kUnkId} when the word cannot be covered.
std::vector<TokenId> wordpiece(std::string_view word, const Vocab& vocab);

TokenSequence encode(std::string_view text, const Vocab& vocab, std::size_t max_len = kDefaultMaxLen);

/// [CLS] query [SEP] doc [SEP]; document tokens are truncated first. Throws
/// DataError when the query alone needs more than max_len - 3 tokens.
TokenSequence encode_pair(std::string_view query, std::string_view doc, const Vocab& vocab,
                          std::size_t max_len = kDefaultMaxLen);

/// Joins pieces back into words, dropping [CLS]/[SEP]/[PAD].
std::string decode(std::span<const TokenId> ids, const Vocab& vocab);

TokenSequence pad_to(const TokenSequence& seq, std::size_t length);

}  // namespace siamrank

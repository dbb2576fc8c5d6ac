#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "bpt/normalize.hpp"
#include "bpt/utf8.hpp"
#include "bpt/vocab.hpp"

namespace bpt {

inline constexpr std::size_t kDefaultMaxCharsPerWord = 100;

struct TokenSequence {
  std::vector<std::string> tokens;
  std::vector<TokenId> ids;
};

// Greedy longest-match-first WordPiece over a fixed vocabulary. Holds only a
// reference to the vocabulary; the vocabulary must outlive the tokenizer.
class WordPieceTokenizer {
 public:
  explicit WordPieceTokenizer(const Vocabulary& vocab, std::size_t max_chars_per_word = kDefaultMaxCharsPerWord)
      : vocab_(&vocab), max_chars_(max_chars_per_word) {}

  const Vocabulary& vocab() const { return *vocab_; }

  // Pieces of one already-normalized word; a lone [UNK] if any position has
  // no match or the word is longer than max_chars_per_word.
  void tokenize_word(std::string_view word, TokenSequence& out) const {
    const auto bounds = utf8::boundaries(word);
    const std::size_t n_chars = bounds.size() - 1;
    if (n_chars == 0) return;
    const std::size_t mark = out.ids.size();
    if (n_chars <= max_chars_) {
      std::string candidate;
      std::size_t start = 0;
      while (start < n_chars) {
        std::size_t end = n_chars;
        std::optional<TokenId> match;
        for (; end > start; --end) {
          candidate.assign(start > 0 ? kContinuationPrefix : std::string_view{});
          candidate.append(word.substr(bounds[start], bounds[end] - bounds[start]));
          if ((match = vocab_->find(candidate))) break;
        }
        if (!match) break;
        out.tokens.push_back(candidate);
        out.ids.push_back(*match);
        start = end;
      }
      if (start == n_chars) return;
    }
    out.tokens.resize(mark);
    out.ids.resize(mark);
    out.tokens.emplace_back(kUnk);
    out.ids.push_back(vocab_->unk_id());
  }

  TokenSequence tokenize(std::string_view text) const {
    TokenSequence out;
    for (const auto& word : pretokenize(normalize(text))) tokenize_word(word, out);
    return out;
  }

  std::vector<TokenId> encode(std::string_view text) const {
    std::vector<TokenId> ids;
    for (const auto& word : pretokenize(normalize(text))) {
      TokenSequence piece;
      tokenize_word(word, piece);
      ids.insert(ids.end(), piece.ids.begin(), piece.ids.end());
    }
    return ids;
  }

 private:
  const Vocabulary* vocab_;
  std::size_t max_chars_;
};

struct CoverageRow {
  std::string term;
  bool in_vocab = false;
  std::vector<std::string> pieces;
};

// Whether each term is a single vocabulary token, with its WordPiece split.
inline std::vector<CoverageRow> coverage_report(const Vocabulary& vocab, const std::vector<std::string>& terms) {
  WordPieceTokenizer tok(vocab);
  std::vector<CoverageRow> rows;
  for (const auto& term : terms) {
    CoverageRow row{term, false, tok.tokenize(term).tokens};
    row.in_vocab = row.pieces.size() == 1 && row.pieces[0] != kUnk;
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace bpt

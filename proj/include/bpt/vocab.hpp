#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "bpt/corpus.hpp"
#include "bpt/error.hpp"
#include "bpt/hash.hpp"

namespace bpt {

inline constexpr std::string_view kContinuationPrefix = "##";
inline constexpr std::string_view kPad = "[PAD]";
inline constexpr std::string_view kUnk = "[UNK]";
inline constexpr std::string_view kCls = "[CLS]";
inline constexpr std::string_view kSep = "[SEP]";
inline constexpr std::string_view kMask = "[MASK]";
inline constexpr std::array<std::string_view, 5> kSpecialTokens = {kPad, kUnk, kCls, kSep, kMask};

using TokenId = std::uint32_t;
using MergePair = std::pair<std::string, std::string>;

inline bool is_continuation(std::string_view token) { return token.starts_with(kContinuationPrefix); }

inline std::string_view strip_continuation(std::string_view token) {
  return is_continuation(token) ? token.substr(kContinuationPrefix.size()) : token;
}

// Merging (left, right) yields left followed by right without its "##".
inline std::string merged_form(std::string_view left, std::string_view right) {
  std::string s(left);
  s += strip_continuation(right);
  return s;
}

// Ordered subword inventory. Ids are positions in the token list. Immutable
// once built, so one instance can be shared by any number of threads.
class Vocabulary {
 public:
  Vocabulary() = default;

  explicit Vocabulary(std::vector<std::string> tokens, std::vector<MergePair> merges = {})
      : tokens_(std::move(tokens)), merges_(std::move(merges)) {
    index_.reserve(tokens_.size());
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      if (tokens_[i].empty()) throw data_error("vocabulary: empty token at line " + std::to_string(i + 1));
      if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second)
        throw data_error("vocabulary: duplicate token '" + tokens_[i] + "'");
    }
    is_special_.assign(tokens_.size(), false);
    for (std::size_t k = 0; k < kSpecialTokens.size(); ++k) {
      auto id = find(kSpecialTokens[k]);
      if (!id) throw data_error("vocabulary: missing special token " + std::string(kSpecialTokens[k]));
      special_ids_[k] = *id;
      is_special_[*id] = true;
    }
    regular_ids_.reserve(tokens_.size());
    for (std::size_t i = 0; i < tokens_.size(); ++i)
      if (!is_special_[i]) regular_ids_.push_back(static_cast<TokenId>(i));
    hash_ = fnv1a64(serialize());
  }

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::vector<MergePair>& merges() const { return merges_; }
  const std::string& token(TokenId id) const { return tokens_.at(id); }

  std::optional<TokenId> find(std::string_view token) const {
    auto it = index_.find(std::string(token));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  bool contains(std::string_view token) const { return find(token).has_value(); }

  TokenId pad_id() const { return special_ids_[0]; }
  TokenId unk_id() const { return special_ids_[1]; }
  TokenId cls_id() const { return special_ids_[2]; }
  TokenId sep_id() const { return special_ids_[3]; }
  TokenId mask_id() const { return special_ids_[4]; }
  bool is_special(TokenId id) const { return id < is_special_.size() && is_special_[id]; }

  // Ids of every non-special token, ascending.
  const std::vector<TokenId>& regular_ids() const { return regular_ids_; }

  // Canonical file form: one token per line, each newline-terminated.
  std::string serialize() const {
    std::string out;
    for (const auto& t : tokens_) {
      out += t;
      out += '\n';
    }
    return out;
  }

  std::string serialize_merges() const {
    std::string out;
    for (const auto& [l, r] : merges_) out += l + " " + r + "\n";
    return out;
  }

  // 64-bit FNV-1a of serialize(); recorded in instance file headers.
  std::uint64_t hash() const { return hash_; }

  bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_ && merges_ == o.merges_; }

 private:
  std::vector<std::string> tokens_;
  std::vector<MergePair> merges_;
  std::unordered_map<std::string, TokenId> index_;
  std::array<TokenId, kSpecialTokens.size()> special_ids_{};
  std::vector<bool> is_special_;
  std::vector<TokenId> regular_ids_;
  std::uint64_t hash_ = 0;
};

namespace detail {

inline std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.emplace_back(line);
    pos = eol + 1;
  }
  return lines;
}

inline void write_text(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw io_error("write failed: " + path.string());
}

}  // namespace detail

inline Vocabulary parse_vocab(std::string_view vocab_text, std::string_view merges_text = {}) {
  auto tokens = detail::split_lines(vocab_text);
  std::vector<MergePair> merges;
  std::size_t line_no = 0;
  for (const auto& line : detail::split_lines(merges_text)) {
    ++line_no;
    if (line.empty()) continue;
    const auto sp = line.find(' ');
    if (sp == std::string::npos || line.find(' ', sp + 1) != std::string::npos)
      throw data_error("merges: line " + std::to_string(line_no) + " is not a 'left right' pair");
    merges.emplace_back(line.substr(0, sp), line.substr(sp + 1));
  }
  return Vocabulary(std::move(tokens), std::move(merges));
}

inline Vocabulary read_vocab(const std::filesystem::path& vocab_path, const std::optional<std::filesystem::path>& merges_path = {}) {
  const std::string vocab_text = detail::read_file(vocab_path);
  const std::string merges_text = merges_path ? detail::read_file(*merges_path) : std::string{};
  return parse_vocab(vocab_text, merges_text);
}

inline void write_vocab(const Vocabulary& vocab, const std::filesystem::path& vocab_path,
                        const std::optional<std::filesystem::path>& merges_path = {}) {
  detail::write_text(vocab_path, vocab.serialize());
  if (merges_path) detail::write_text(*merges_path, vocab.serialize_merges());
}

}  // namespace bpt

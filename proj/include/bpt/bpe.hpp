#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <queue>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "bpt/corpus.hpp"
#include "bpt/normalize.hpp"
#include "bpt/parallel.hpp"
#include "bpt/utf8.hpp"
#include "bpt/vocab.hpp"

namespace bpt {

inline constexpr std::size_t kDefaultVocabSize = 32000;
inline constexpr std::uint64_t kDefaultMinFrequency = 2;

using WordCounts = std::unordered_map<std::string, std::uint64_t>;

// Pre-tokenized word counts of one corpus plus its size after normalization
// (sentence bytes plus one newline each, mirroring Document::byte_size).
struct CorpusWords {
  WordCounts counts;
  std::uint64_t normalized_bytes = 0;
};

inline void add_counts(WordCounts& into, const WordCounts& from, std::uint64_t times = 1) {
  for (const auto& [w, c] : from) into[w] += c * times;
}

inline CorpusWords count_words(const Corpus& corpus, unsigned threads = 1) {
  const std::size_t n_docs = corpus.documents.size();
  const std::size_t n_chunks = std::max<std::size_t>(1, std::min<std::size_t>(n_docs, threads * 4));
  std::vector<CorpusWords> partial(n_chunks);
  parallel_for(n_chunks, threads, [&](std::size_t c) {
    auto& out = partial[c];
    for (std::size_t d = c * n_docs / n_chunks; d < (c + 1) * n_docs / n_chunks; ++d) {
      for (const auto& sentence : corpus.documents[d].sentences) {
        const std::string norm = normalize(sentence);
        out.normalized_bytes += norm.size() + 1;
        for (auto& w : pretokenize(norm)) ++out.counts[std::move(w)];
      }
    }
  });
  CorpusWords total;
  for (auto& p : partial) {
    total.normalized_bytes += p.normalized_bytes;
    if (total.counts.empty())
      total.counts = std::move(p.counts);
    else
      add_counts(total.counts, p.counts);
  }
  return total;
}

struct AmplificationPlan {
  std::uint64_t small_bytes = 0;
  std::uint64_t large_bytes = 0;
  std::uint64_t repeat_factor = 1;
};

// Repeat factor for the small corpus: floor(large / small), never below 1 so
// the small corpus always stays in the training stream.
inline AmplificationPlan plan_amplification(std::uint64_t small_bytes, std::uint64_t large_bytes) {
  if (small_bytes == 0 || large_bytes == 0) throw usage_error("plan_amplification: both corpora must be non-empty");
  return {small_bytes, large_bytes, std::max<std::uint64_t>(1, large_bytes / small_bytes)};
}

inline AmplificationPlan plan_amplification(const CorpusWords& small, const CorpusWords& large) {
  return plan_amplification(small.normalized_bytes, large.normalized_bytes);
}

// Vocabulary training stream: the small corpus `repeat_factor` times, then the
// large one. Counts are additive, so repetition is a multiplication.
inline WordCounts amplified_stream(const CorpusWords& small, const CorpusWords& large, std::uint64_t repeat_factor) {
  WordCounts stream;
  add_counts(stream, small.counts, repeat_factor);
  add_counts(stream, large.counts);
  return stream;
}

struct BpeOptions {
  std::size_t target_size = kDefaultVocabSize;
  std::uint64_t min_frequency = kDefaultMinFrequency;
};

struct BpeReport {
  std::size_t target_size = 0;
  std::size_t final_size = 0;
  std::size_t alphabet_size = 0;
  std::size_t merges_performed = 0;
  std::size_t distinct_words = 0;
  bool reached_target = false;
  std::vector<std::string> warnings;
  std::optional<AmplificationPlan> amplification;

  nlohmann::json to_json() const {
    nlohmann::json j = {{"target_size", target_size},         {"final_size", final_size},
                        {"alphabet_size", alphabet_size},     {"merges_performed", merges_performed},
                        {"distinct_words", distinct_words},   {"reached_target", reached_target},
                        {"warnings", warnings}};
    if (amplification) {
      j["repeat_factor"] = amplification->repeat_factor;
      j["small_bytes"] = amplification->small_bytes;
      j["large_bytes"] = amplification->large_bytes;
    }
    return j;
  }
};

struct BpeResult {
  Vocabulary vocab;
  BpeReport report;
};

// Initial symbols of a word: first character bare, the rest "##"-prefixed.
inline std::vector<std::string> initial_symbols(std::string_view word) {
  std::vector<std::string> out;
  const auto b = utf8::boundaries(word);
  for (std::size_t i = 0; i + 1 < b.size(); ++i) {
    std::string s = i == 0 ? std::string() : std::string(kContinuationPrefix);
    s.append(word.substr(b[i], b[i + 1] - b[i]));
    out.push_back(std::move(s));
  }
  return out;
}

namespace detail {

// Frequency-greedy BPE with incremental pair counts. The heap may hold stale
// entries; an entry is live only while its count equals the current count.
class BpeTrainer {
 public:
  BpeTrainer(const std::vector<std::pair<std::string, std::uint64_t>>& words, const BpeOptions& opts) : opts_(opts) {
    for (const auto& [word, count] : words) {
      if (word.empty() || count == 0) continue;
      std::vector<std::uint32_t> seq;
      for (auto& s : initial_symbols(word)) seq.push_back(intern(std::move(s)));
      seqs_.push_back(std::move(seq));
      counts_.push_back(count);
    }
    stamp_.assign(seqs_.size(), 0);
  }

  BpeResult run() {
    if (seqs_.empty()) throw usage_error("train_bpe: empty training stream");
    BpeReport report;
    report.target_size = opts_.target_size;
    report.distinct_words = seqs_.size();

    std::vector<std::string> alphabet = symbols_;  // every symbol so far is a single character
    std::sort(alphabet.begin(), alphabet.end());
    report.alphabet_size = alphabet.size();
    if (opts_.target_size <= alphabet.size() + kSpecialTokens.size())
      throw usage_error("train_bpe: target_size " + std::to_string(opts_.target_size) +
                        " must exceed alphabet plus special tokens (" +
                        std::to_string(alphabet.size() + kSpecialTokens.size()) + ")");

    std::vector<std::string> tokens(kSpecialTokens.begin(), kSpecialTokens.end());
    std::unordered_set<std::string> present(tokens.begin(), tokens.end());
    for (auto& a : alphabet)
      if (present.insert(a).second) tokens.push_back(a);

    for (std::size_t w = 0; w < seqs_.size(); ++w) add_pairs(w, +1, nullptr);
    for (const auto& [key, count] : pair_count_) push(key, count);

    std::vector<MergePair> merges;
    std::string stop_reason;
    while (tokens.size() < opts_.target_size) {
      auto best = pop_live();
      if (!best) {
        stop_reason = "no adjacent pairs remain";
        break;
      }
      if (best->count < static_cast<std::int64_t>(opts_.min_frequency)) {
        stop_reason = "best pair frequency " + std::to_string(best->count) + " below min_frequency " +
                      std::to_string(opts_.min_frequency);
        break;
      }
      const auto left = static_cast<std::uint32_t>(best->key >> 32);
      const auto right = static_cast<std::uint32_t>(best->key & 0xffffffffu);
      merges.emplace_back(symbols_[left], symbols_[right]);
      const std::uint32_t merged = intern(best->merged);
      if (present.insert(best->merged).second) tokens.push_back(best->merged);
      apply_merge(best->key, left, right, merged);
    }

    report.merges_performed = merges.size();
    report.final_size = tokens.size();
    report.reached_target = tokens.size() >= opts_.target_size;
    if (!report.reached_target)
      report.warnings.push_back("target_size " + std::to_string(opts_.target_size) + " not reached; stopped at " +
                                std::to_string(tokens.size()) + " tokens: " + stop_reason);
    return {Vocabulary(std::move(tokens), std::move(merges)), std::move(report)};
  }

 private:
  struct Entry {
    std::int64_t count;
    std::string merged;
    std::string left;
    std::uint64_t key;
  };
  // Max-heap order: higher count, then lexicographically smaller merged form,
  // then smaller left symbol.
  struct Lower {
    bool operator()(const Entry& a, const Entry& b) const {
      if (a.count != b.count) return a.count < b.count;
      if (a.merged != b.merged) return a.merged > b.merged;
      return a.left > b.left;
    }
  };

  static std::uint64_t pair_key(std::uint32_t a, std::uint32_t b) { return (std::uint64_t{a} << 32) | b; }

  std::uint32_t intern(std::string s) {
    auto it = symbol_ids_.find(s);
    if (it != symbol_ids_.end()) return it->second;
    const auto id = static_cast<std::uint32_t>(symbols_.size());
    symbol_ids_.emplace(s, id);
    symbols_.push_back(std::move(s));
    return id;
  }

  void push(std::uint64_t key, std::int64_t count) {
    const auto& l = symbols_[key >> 32];
    const auto& r = symbols_[key & 0xffffffffu];
    heap_.push({count, merged_form(l, r), l, key});
  }

  std::optional<Entry> pop_live() {
    while (!heap_.empty()) {
      Entry e = heap_.top();
      heap_.pop();
      auto it = pair_count_.find(e.key);
      if (it != pair_count_.end() && it->second == e.count && e.count > 0) return e;
    }
    return std::nullopt;
  }

  void add_pairs(std::size_t w, int sign, std::vector<std::uint64_t>* changed) {
    const auto& seq = seqs_[w];
    const auto delta = sign * static_cast<std::int64_t>(counts_[w]);
    for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
      const auto key = pair_key(seq[i], seq[i + 1]);
      auto& c = pair_count_[key];
      c += delta;
      if (sign > 0 && !changed) where_[key].push_back(static_cast<std::uint32_t>(w));
      if (changed) changed->push_back(key);
      if (c == 0) pair_count_.erase(key);
    }
  }

  void apply_merge(std::uint64_t key, std::uint32_t left, std::uint32_t right, std::uint32_t merged) {
    ++epoch_;
    std::vector<std::uint64_t> changed;
    const std::vector<std::uint32_t> words = std::move(where_[key]);
    where_.erase(key);
    for (const auto w : words) {
      if (stamp_[w] == epoch_) continue;
      stamp_[w] = epoch_;
      auto& seq = seqs_[w];
      bool has = false;
      for (std::size_t i = 0; i + 1 < seq.size() && !has; ++i) has = seq[i] == left && seq[i + 1] == right;
      if (!has) continue;

      add_pairs(w, -1, &changed);
      std::vector<std::uint32_t> next;
      next.reserve(seq.size());
      for (std::size_t i = 0; i < seq.size();) {
        if (i + 1 < seq.size() && seq[i] == left && seq[i + 1] == right) {
          next.push_back(merged);
          i += 2;
        } else {
          next.push_back(seq[i++]);
        }
      }
      seq = std::move(next);
      add_pairs(w, +1, &changed);
      for (std::size_t i = 0; i + 1 < seq.size(); ++i)
        if (seq[i] == merged || seq[i + 1] == merged) where_[pair_key(seq[i], seq[i + 1])].push_back(static_cast<std::uint32_t>(w));
    }
    std::sort(changed.begin(), changed.end());
    changed.erase(std::unique(changed.begin(), changed.end()), changed.end());
    for (const auto k : changed) {
      auto it = pair_count_.find(k);
      if (it != pair_count_.end() && it->second > 0) push(k, it->second);
    }
  }

  BpeOptions opts_;
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, std::uint32_t> symbol_ids_;
  std::vector<std::vector<std::uint32_t>> seqs_;
  std::vector<std::uint64_t> counts_;
  std::unordered_map<std::uint64_t, std::int64_t> pair_count_;
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> where_;
  std::priority_queue<Entry, std::vector<Entry>, Lower> heap_;
  std::vector<std::uint64_t> stamp_;
  std::uint64_t epoch_ = 0;
};

}  // namespace detail

// Trains a continuation-prefix BPE vocabulary. Merges the most frequent
// adjacent pair (ties: smallest merged string, then smallest left symbol)
// until the vocabulary holds target_size tokens or no pair reaches
// min_frequency. Token order: specials, sorted alphabet, merges in order.
inline BpeResult train_bpe(const WordCounts& counts, const BpeOptions& opts = {}) {
  std::vector<std::pair<std::string, std::uint64_t>> words(counts.begin(), counts.end());
  std::sort(words.begin(), words.end());
  return detail::BpeTrainer(words, opts).run();
}

}  // namespace bpt

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "bpt/corpus.hpp"
#include "bpt/error.hpp"
#include "bpt/parallel.hpp"
#include "bpt/rng.hpp"
#include "bpt/tokenizer.hpp"
#include "bpt/vocab.hpp"

namespace bpt {

struct InstanceConfig {
  std::size_t max_seq_length = 128;
  double masked_lm_prob = 0.15;
  std::size_t max_predictions_per_seq = 20;
  double short_seq_prob = 0.10;
  std::size_t dupe_factor = 10;
  std::size_t n_rounds = 10;
  std::size_t n_splits = 10;
  std::size_t shards_per_corpus = 10;
  std::uint64_t master_seed = 12345;

  void validate() const {
    if (!(masked_lm_prob > 0.0 && masked_lm_prob < 1.0)) throw usage_error("masked_lm_prob must be in (0, 1)");
    if (!(short_seq_prob >= 0.0 && short_seq_prob <= 1.0)) throw usage_error("short_seq_prob must be in [0, 1]");
    if (max_predictions_per_seq < 1) throw usage_error("max_predictions_per_seq must be >= 1");
    if (max_seq_length < 8) throw usage_error("max_seq_length must be >= 8");
    if (max_seq_length > 65535) throw usage_error("max_seq_length must fit in 16 bits");
    if (dupe_factor < 1) throw usage_error("dupe_factor must be >= 1");
    if (n_splits < 1) throw usage_error("n_splits must be >= 1");
    if (shards_per_corpus < 1) throw usage_error("shards_per_corpus must be >= 1");
  }
};

struct TokenizedDocument {
  std::string doc_id;
  Origin origin = Origin::large;
  std::vector<std::vector<TokenId>> sentences;  // sentences that produced no tokens are dropped
};

struct TokenizedCorpus {
  std::string label;
  Origin origin = Origin::large;
  std::vector<TokenizedDocument> docs;
  std::vector<std::uint64_t> byte_sizes;  // source Document::byte_size, parallel to docs
  std::uint64_t total_bytes = 0;
};

inline TokenizedDocument tokenize_document(const Document& doc, const WordPieceTokenizer& tok) {
  TokenizedDocument out{doc.doc_id, doc.origin, {}};
  for (const auto& s : doc.sentences) {
    auto ids = tok.encode(s);
    if (!ids.empty()) out.sentences.push_back(std::move(ids));
  }
  return out;
}

inline TokenizedCorpus tokenize_corpus(const Corpus& corpus, const WordPieceTokenizer& tok, unsigned threads = 1) {
  TokenizedCorpus out{corpus.label, corpus.origin, {}, {}, corpus.total_bytes};
  out.docs.resize(corpus.documents.size());
  out.byte_sizes.reserve(corpus.documents.size());
  for (const auto& d : corpus.documents) out.byte_sizes.push_back(d.byte_size);
  parallel_for(corpus.documents.size(), threads,
               [&](std::size_t i) { out.docs[i] = tokenize_document(corpus.documents[i], tok); });
  return out;
}

struct PretrainInstance {
  std::vector<TokenId> token_ids;
  std::vector<std::uint8_t> segment_ids;
  std::vector<std::uint16_t> masked_positions;
  std::vector<TokenId> masked_labels;
  bool is_next = false;
  std::uint32_t origin_small_tokens = 0;
  std::uint32_t origin_large_tokens = 0;
  // Provenance; carried in sidecars and the JSONL form, not in the binary records.
  std::string doc_a;
  std::string doc_b;

  bool same_record(const PretrainInstance& o) const {
    return token_ids == o.token_ids && segment_ids == o.segment_ids && masked_positions == o.masked_positions &&
           masked_labels == o.masked_labels && is_next == o.is_next && origin_small_tokens == o.origin_small_tokens &&
           origin_large_tokens == o.origin_large_tokens;
  }
  bool operator==(const PretrainInstance&) const = default;

  // Token ids with every masked position restored to its label.
  std::vector<TokenId> original_ids() const {
    auto ids = token_ids;
    for (std::size_t k = 0; k < masked_positions.size(); ++k) ids[masked_positions[k]] = masked_labels[k];
    return ids;
  }
};

struct MaskedTokens {
  std::vector<TokenId> ids;
  std::vector<std::uint16_t> positions;  // ascending
  std::vector<TokenId> labels;           // original ids at `positions`
};

// Number of positions to mask for `candidates` maskable tokens.
inline std::size_t mask_count(std::size_t candidates, const InstanceConfig& cfg) {
  if (candidates == 0) return 0;
  const auto wanted = static_cast<std::size_t>(std::llround(cfg.masked_lm_prob * static_cast<double>(candidates)));
  return std::min(cfg.max_predictions_per_seq, std::max<std::size_t>(1, wanted));
}

// MLM corruption: picks mask_count() non-special positions uniformly without
// replacement; each becomes [MASK] (80%), a uniformly random non-special
// token (10%) or stays unchanged (10%).
inline MaskedTokens mask_tokens(const std::vector<TokenId>& ids, const std::vector<bool>& special,
                                const Vocabulary& vocab, const InstanceConfig& cfg, Rng& rng) {
  MaskedTokens out{ids, {}, {}};
  std::vector<std::uint16_t> candidates;
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (!special[i]) candidates.push_back(static_cast<std::uint16_t>(i));
  const std::size_t k = mask_count(candidates.size(), cfg);
  for (std::size_t j = 0; j < k; ++j) {
    const std::size_t pick = j + rng.below(candidates.size() - j);
    std::swap(candidates[j], candidates[pick]);
  }
  out.positions.assign(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(out.positions.begin(), out.positions.end());
  const auto& regular = vocab.regular_ids();
  for (const auto pos : out.positions) {
    out.labels.push_back(ids[pos]);
    const double u = rng.uniform();
    if (u < 0.8)
      out.ids[pos] = vocab.mask_id();
    else if (u < 0.9 && !regular.empty())
      out.ids[pos] = regular[rng.below(regular.size())];
  }
  return out;
}

enum class NspPolicy { sampled, force_positive, force_negative };

// Counters for situations where the pairing rule could not be followed.
struct CreationStats {
  std::uint64_t missing_negatives = 0;     // negative drawn but no partner document; emitted positive
  std::uint64_t degenerate_negatives = 0;  // single-sentence document, only a negative pairing exists
  std::uint64_t dropped_chunks = 0;        // no valid pairing at all
  std::uint64_t rebalanced_positives = 0;  // sampled negatives emitted positive to offset degenerate ones
  std::uint64_t zero_mask_instances = 0;

  CreationStats& operator+=(const CreationStats& o) {
    missing_negatives += o.missing_negatives;
    degenerate_negatives += o.degenerate_negatives;
    dropped_chunks += o.dropped_chunks;
    rebalanced_positives += o.rebalanced_positives;
    zero_mask_instances += o.zero_mask_instances;
    return *this;
  }
};

// Identifies the random streams of one work unit. Pairing draws for document
// d come from (seed, pairing_domain, unit, d); masking draws from
// (seed, masking_domain, unit, pass, d). Repeated passes over the same unit
// therefore pair identically and mask differently.
struct StreamKeys {
  std::uint64_t seed = 0;
  std::uint64_t pairing_domain = stream::simpt_pairing;
  std::uint64_t masking_domain = stream::simpt_masking;
  std::uint64_t unit = 0;
  std::uint64_t pass = 0;
};

namespace detail {

inline std::size_t token_len(const TokenizedDocument& doc, std::size_t s) { return doc.sentences[s].size(); }

inline void append_sentence(std::vector<TokenId>& seg, const TokenizedDocument& doc, std::size_t s) {
  seg.insert(seg.end(), doc.sentences[s].begin(), doc.sentences[s].end());
}

}  // namespace detail

// Builds MLM+NSP instances from a pool of documents. Each document is packed
// into chunks of up to max_seq_length - 3 tokens (a shorter random target
// with probability short_seq_prob); each chunk yields one sentence pair whose
// second segment is, with probability 1/2, the continuation inside the same
// document and otherwise text from a different pool document.
inline std::vector<PretrainInstance> create_instances_from_documents(const std::vector<const TokenizedDocument*>& docs,
                                                                     const Vocabulary& vocab, const InstanceConfig& cfg,
                                                                     const StreamKeys& keys, CreationStats& stats,
                                                                     NspPolicy policy = NspPolicy::sampled) {
  std::vector<PretrainInstance> out;
  const std::size_t max_tokens = cfg.max_seq_length - 3;
  // Forced degenerate negatives are paid back by turning later sampled
  // negatives into positives, keeping the is_next rate at one half. One flip
  // offsets two degenerate negatives.
  std::size_t owed_half_flips = 0;

  for (std::size_t d = 0; d < docs.size(); ++d) {
    const TokenizedDocument& doc = *docs[d];
    const std::size_t n = doc.sentences.size();
    if (n == 0) continue;
    Rng pr = Rng::derive(keys.seed, {keys.pairing_domain, keys.unit, d});
    Rng mr = Rng::derive(keys.seed, {keys.masking_domain, keys.unit, keys.pass, d});

    std::size_t target = max_tokens;
    if (pr.bernoulli(cfg.short_seq_prob)) target = static_cast<std::size_t>(pr.between(2, static_cast<std::int64_t>(max_tokens)));

    std::vector<std::size_t> chunk;
    std::size_t chunk_len = 0;
    for (std::size_t i = 0; i < n; ++i) {
      chunk.push_back(i);
      chunk_len += detail::token_len(doc, i);
      if (i + 1 < n && chunk_len < target) continue;

      bool want_next = pr.uniform() < 0.5;
      if (policy == NspPolicy::force_positive) want_next = true;
      if (policy == NspPolicy::force_negative) want_next = false;
      const std::size_t a_end =
          chunk.size() >= 2 ? static_cast<std::size_t>(pr.between(1, static_cast<std::int64_t>(chunk.size()) - 1)) : 1;

      const bool positive_possible = chunk.size() >= 2 || i + 1 < n;
      const bool negative_possible = docs.size() >= 2;
      bool is_next;
      if (!positive_possible) {
        if (n == 1 && negative_possible) {
          is_next = false;
          ++stats.degenerate_negatives;
          if (policy == NspPolicy::sampled) ++owed_half_flips;
        } else {
          ++stats.dropped_chunks;
          chunk.clear();
          chunk_len = 0;
          continue;
        }
      } else if (!want_next && !negative_possible) {
        is_next = true;
        ++stats.missing_negatives;
      } else if (!want_next && owed_half_flips >= 2) {
        is_next = true;
        owed_half_flips -= 2;
        ++stats.rebalanced_positives;
      } else {
        is_next = want_next;
      }

      std::vector<TokenId> seg_a, seg_b;
      for (std::size_t c = 0; c < a_end; ++c) detail::append_sentence(seg_a, doc, chunk[c]);
      const std::size_t target_b = std::max<std::size_t>(1, target > seg_a.size() ? target - seg_a.size() : 1);
      const TokenizedDocument* partner = &doc;

      if (is_next) {
        if (chunk.size() >= 2) {
          for (std::size_t c = a_end; c < chunk.size(); ++c) detail::append_sentence(seg_b, doc, chunk[c]);
        } else {
          while (i + 1 < n && seg_b.size() < target_b) detail::append_sentence(seg_b, doc, ++i);
        }
      } else {
        std::size_t other = static_cast<std::size_t>(pr.below(docs.size() - 1));
        if (other >= d) ++other;
        partner = docs[other];
        const std::size_t pn = partner->sentences.size();
        const bool degenerate = chunk.size() == 1 && n == 1;
        for (std::size_t s = static_cast<std::size_t>(pr.below(pn)); s < pn && seg_b.size() < target_b; ++s) {
          detail::append_sentence(seg_b, *partner, s);
          if (degenerate) break;  // one sentence from the partner
        }
        i -= chunk.size() - a_end;  // unused sentences go back to the document
      }

      while (seg_a.size() + seg_b.size() > max_tokens) (seg_a.size() > seg_b.size() ? seg_a : seg_b).pop_back();

      PretrainInstance inst;
      inst.is_next = is_next;
      inst.doc_a = doc.doc_id;
      inst.doc_b = partner->doc_id;
      std::vector<TokenId> ids;
      ids.reserve(seg_a.size() + seg_b.size() + 3);
      ids.push_back(vocab.cls_id());
      ids.insert(ids.end(), seg_a.begin(), seg_a.end());
      ids.push_back(vocab.sep_id());
      ids.insert(ids.end(), seg_b.begin(), seg_b.end());
      ids.push_back(vocab.sep_id());
      inst.segment_ids.assign(ids.size(), 0);
      std::fill(inst.segment_ids.begin() + static_cast<std::ptrdiff_t>(seg_a.size() + 2), inst.segment_ids.end(), 1);
      std::vector<bool> special(ids.size(), false);
      special[0] = special[seg_a.size() + 1] = special.back() = true;

      auto add_origin = [&](Origin o, std::size_t count) {
        (o == Origin::small ? inst.origin_small_tokens : inst.origin_large_tokens) += static_cast<std::uint32_t>(count);
      };
      add_origin(doc.origin, seg_a.size());
      add_origin(partner->origin, seg_b.size());

      auto masked = mask_tokens(ids, special, vocab, cfg, mr);
      if (masked.positions.empty()) ++stats.zero_mask_instances;
      inst.token_ids = std::move(masked.ids);
      inst.masked_positions = std::move(masked.positions);
      inst.masked_labels = std::move(masked.labels);
      out.push_back(std::move(inst));

      chunk.clear();
      chunk_len = 0;
    }
  }
  return out;
}

// Convenience overload for plain documents.
inline std::vector<PretrainInstance> create_instances_from_documents(const std::vector<Document>& docs,
                                                                     const WordPieceTokenizer& tok,
                                                                     const InstanceConfig& cfg, const StreamKeys& keys,
                                                                     CreationStats& stats,
                                                                     NspPolicy policy = NspPolicy::sampled) {
  std::vector<TokenizedDocument> tokenized;
  for (const auto& d : docs) tokenized.push_back(tokenize_document(d, tok));
  std::vector<const TokenizedDocument*> pool;
  for (const auto& t : tokenized) pool.push_back(&t);
  return create_instances_from_documents(pool, tok.vocab(), cfg, keys, stats, policy);
}

// Structural invariants of one instance; returns a description of the first
// violation, or an empty string.
inline std::string check_instance(const PretrainInstance& inst, std::size_t max_seq_length,
                                  std::size_t max_predictions, const Vocabulary* vocab = nullptr,
                                  std::optional<TokenId> cls = {}, std::optional<TokenId> sep = {}) {
  if (vocab) cls = vocab->cls_id(), sep = vocab->sep_id();
  const auto& t = inst.token_ids;
  if (t.size() > max_seq_length) return "sequence longer than max_seq_length";
  if (t.size() < 5) return "sequence too short for two segments";
  if (inst.segment_ids.size() != t.size()) return "segment_ids length differs from token_ids";
  if (cls && t[0] != *cls) return "first token is not [CLS]";
  std::vector<std::size_t> seps;
  if (sep)
    for (std::size_t i = 0; i < t.size(); ++i)
      if (t[i] == *sep) seps.push_back(i);
  if (sep && (seps.size() != 2 || seps[1] != t.size() - 1)) return "expected exactly two [SEP], the last one final";
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (inst.segment_ids[i] > 1) return "segment id outside {0,1}";
    if (i > 0 && inst.segment_ids[i] < inst.segment_ids[i - 1]) return "segment_ids decreasing";
  }
  if (sep) {
    if (seps[0] < 2 || seps[1] - seps[0] < 2) return "empty segment";
    if (inst.segment_ids[seps[0]] != 0 || inst.segment_ids[seps[0] + 1] != 1) return "segment boundary misplaced";
  }
  const auto& pos = inst.masked_positions;
  if (pos.size() != inst.masked_labels.size()) return "masked_positions and masked_labels differ in length";
  if (pos.size() > max_predictions) return "more masked positions than max_predictions_per_seq";
  for (std::size_t k = 0; k < pos.size(); ++k) {
    if (pos[k] >= t.size()) return "masked position out of range";
    if (k > 0 && pos[k] <= pos[k - 1]) return "masked positions not strictly ascending";
    if (pos[k] == 0 || (sep && (pos[k] == seps[0] || pos[k] == seps[1]))) return "masked position on [CLS]/[SEP]";
  }
  if (inst.origin_small_tokens + inst.origin_large_tokens != t.size() - 3)
    return "origin token counts do not sum to the non-special token count";
  return {};
}

}  // namespace bpt

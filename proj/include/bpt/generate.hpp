#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "bpt/corpus.hpp"
#include "bpt/instances.hpp"
#include "bpt/parallel.hpp"
#include "bpt/rng.hpp"

namespace bpt {

enum class Mode { simpt, conventional };

inline std::string_view to_string(Mode m) { return m == Mode::simpt ? "simpt" : "conventional"; }

// A contiguous run of whole documents [begin, end) of one tokenized corpus.
struct ShardView {
  std::size_t shard_id = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
  std::uint64_t byte_size = 0;
};

// Same greedy rule as split_corpus, over document indices.
inline std::vector<ShardView> shard_views(const TokenizedCorpus& corpus, std::uint64_t each_file_size) {
  if (each_file_size == 0) throw usage_error("each_file_size must be positive");
  std::vector<ShardView> shards;
  ShardView cur;
  for (std::size_t i = 0; i < corpus.byte_sizes.size(); ++i) {
    cur.end = i + 1;
    cur.byte_size += corpus.byte_sizes[i];
    if (cur.byte_size >= each_file_size) {
      shards.push_back(cur);
      cur = ShardView{shards.size(), i + 1, i + 1, 0};
    }
  }
  if (cur.end > cur.begin) shards.push_back(cur);
  return shards;
}

// Distinct unordered (doc_a, doc_b) pairs among negative instances.
inline std::size_t pair_diversity(const std::vector<PretrainInstance>& instances) {
  std::set<std::pair<std::string, std::string>> pairs;
  for (const auto& inst : instances) {
    if (inst.is_next) continue;
    pairs.insert(std::minmax(inst.doc_a, inst.doc_b));
  }
  return pairs.size();
}

struct GenerationReport {
  Mode mode = Mode::simpt;
  std::uint64_t units = 0;
  std::uint64_t instances = 0;
  std::uint64_t is_next_true = 0;
  std::uint64_t candidate_positions = 0;
  std::uint64_t masked_positions = 0;
  std::uint64_t mask_replaced = 0;
  std::uint64_t random_replaced = 0;
  std::uint64_t unchanged = 0;
  std::uint64_t origin_small_tokens = 0;
  std::uint64_t origin_large_tokens = 0;
  std::uint64_t distinct_negative_pairs = 0;
  std::uint64_t shard_combination_collisions = 0;
  std::uint64_t small_bytes = 0;
  std::uint64_t large_bytes = 0;
  CreationStats creation;

  double is_next_fraction() const { return instances ? double(is_next_true) / double(instances) : 0.0; }
  double mask_selection_rate() const {
    return candidate_positions ? double(masked_positions) / double(candidate_positions) : 0.0;
  }
  double small_origin_fraction() const {
    const auto total = origin_small_tokens + origin_large_tokens;
    return total ? double(origin_small_tokens) / double(total) : 0.0;
  }

  void tally(const std::vector<PretrainInstance>& all, TokenId mask_id) {
    for (const auto& inst : all) {
      ++instances;
      is_next_true += inst.is_next;
      candidate_positions += inst.token_ids.size() - 3;
      masked_positions += inst.masked_positions.size();
      for (std::size_t k = 0; k < inst.masked_positions.size(); ++k) {
        const TokenId now = inst.token_ids[inst.masked_positions[k]];
        if (now == mask_id)
          ++mask_replaced;
        else if (now == inst.masked_labels[k])
          ++unchanged;
        else
          ++random_replaced;
      }
      origin_small_tokens += inst.origin_small_tokens;
      origin_large_tokens += inst.origin_large_tokens;
    }
    distinct_negative_pairs = pair_diversity(all);
  }

  nlohmann::json to_json() const {
    const double m = masked_positions ? double(masked_positions) : 1.0;
    return {{"mode", to_string(mode)},
            {"units", units},
            {"instances", instances},
            {"is_next_true", is_next_true},
            {"is_next_fraction", is_next_fraction()},
            {"candidate_positions", candidate_positions},
            {"masked_positions", masked_positions},
            {"mask_selection_rate", mask_selection_rate()},
            {"mask_fraction", double(mask_replaced) / m},
            {"random_fraction", double(random_replaced) / m},
            {"unchanged_fraction", double(unchanged) / m},
            {"origin_small_tokens", origin_small_tokens},
            {"origin_large_tokens", origin_large_tokens},
            {"small_origin_fraction", small_origin_fraction()},
            {"small_bytes", small_bytes},
            {"large_bytes", large_bytes},
            {"distinct_negative_pairs", distinct_negative_pairs},
            {"shard_combination_collisions", shard_combination_collisions},
            {"missing_negatives", creation.missing_negatives},
            {"degenerate_negatives", creation.degenerate_negatives},
            {"dropped_chunks", creation.dropped_chunks},
            {"rebalanced_positives", creation.rebalanced_positives},
            {"zero_mask_instances", creation.zero_mask_instances}};
  }
};

struct GenerationResult {
  std::vector<PretrainInstance> instances;
  GenerationReport report;
};

namespace detail {

// k indices from [0, n): without replacement when n >= k, else with.
inline std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> out;
  if (n >= k) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t j = 0; j < k; ++j) std::swap(idx[j], idx[j + rng.below(n - j)]);
    out.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
  } else {
    for (std::size_t j = 0; j < k; ++j) out.push_back(rng.below(n));
  }
  return out;
}

inline void add_pool(std::vector<const TokenizedDocument*>& pool, const TokenizedCorpus& c, const ShardView& s) {
  for (std::size_t i = s.begin; i < s.end; ++i)
    if (!c.docs[i].sentences.empty()) pool.push_back(&c.docs[i]);
}

// Runs independent units in parallel and concatenates their output in unit order.
template <typename MakeUnit>
GenerationResult run_units(std::size_t n_units, unsigned threads, TokenId mask_id, MakeUnit&& make_unit) {
  std::vector<std::vector<PretrainInstance>> per_unit(n_units);
  std::vector<CreationStats> stats(n_units);
  parallel_for(n_units, threads, [&](std::size_t u) { per_unit[u] = make_unit(u, stats[u]); });
  GenerationResult res;
  std::size_t total = 0;
  for (const auto& v : per_unit) total += v.size();
  res.instances.reserve(total);
  for (std::size_t u = 0; u < n_units; ++u) {
    for (auto& inst : per_unit[u]) res.instances.push_back(std::move(inst));
    res.report.creation += stats[u];
  }
  res.report.units = n_units;
  res.report.tally(res.instances, mask_id);
  return res;
}

}  // namespace detail

// Balanced generation: every round pools shards_per_corpus shards drawn from
// each corpus, so both contribute about equal bytes regardless of their total
// sizes, and NSP negatives may pair documents across the two corpora.
inline GenerationResult generate_simpt(const TokenizedCorpus& small, const std::vector<ShardView>& small_shards,
                                       const TokenizedCorpus& large, const std::vector<ShardView>& large_shards,
                                       const Vocabulary& vocab, const InstanceConfig& cfg, unsigned threads = 1) {
  cfg.validate();
  if (small_shards.empty() || large_shards.empty()) throw usage_error("generate_simpt: shard lists must be non-empty");

  std::vector<std::vector<std::size_t>> picks_small(cfg.n_rounds), picks_large(cfg.n_rounds);
  std::set<std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> seen;
  std::uint64_t collisions = 0;
  for (std::size_t r = 0; r < cfg.n_rounds; ++r) {
    Rng rng = Rng::derive(cfg.master_seed, {stream::simpt_sample, r});
    picks_small[r] = detail::sample_indices(small_shards.size(), cfg.shards_per_corpus, rng);
    picks_large[r] = detail::sample_indices(large_shards.size(), cfg.shards_per_corpus, rng);
    auto a = picks_small[r], b = picks_large[r];
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    collisions += !seen.emplace(std::move(a), std::move(b)).second;
  }

  auto res = detail::run_units(cfg.n_rounds, threads, vocab.mask_id(), [&](std::size_t r, CreationStats& st) {
    std::vector<const TokenizedDocument*> pool;
    for (auto s : picks_small[r]) detail::add_pool(pool, small, small_shards[s]);
    for (auto s : picks_large[r]) detail::add_pool(pool, large, large_shards[s]);
    if (pool.empty()) return std::vector<PretrainInstance>{};
    StreamKeys keys{cfg.master_seed, stream::simpt_pairing, stream::simpt_masking, r, 0};
    return create_instances_from_documents(pool, vocab, cfg, keys, st);
  });
  res.report.mode = Mode::simpt;
  res.report.shard_combination_collisions = collisions;
  res.report.small_bytes = small.total_bytes;
  res.report.large_bytes = large.total_bytes;
  return res;
}

// Reference pipeline: the concatenated corpora are cut into n_splits groups
// and each group is turned into instances dupe_factor times. Passes over a
// group share their sentence pairs and differ only in masking; NSP partners
// never leave their group.
inline GenerationResult generate_conventional(const std::vector<const TokenizedCorpus*>& corpora,
                                              const Vocabulary& vocab, const InstanceConfig& cfg,
                                              unsigned threads = 1) {
  cfg.validate();
  std::vector<const TokenizedDocument*> all;
  std::uint64_t small_bytes = 0, large_bytes = 0;
  for (const auto* c : corpora) {
    (c->origin == Origin::small ? small_bytes : large_bytes) += c->total_bytes;
    for (const auto& d : c->docs)
      if (!d.sentences.empty()) all.push_back(&d);
  }
  if (all.empty()) throw usage_error("generate_conventional: no documents");

  const std::size_t n_groups = std::min(cfg.n_splits, all.size());
  const std::size_t n_units = n_groups * cfg.dupe_factor;
  auto res = detail::run_units(n_units, threads, vocab.mask_id(), [&](std::size_t u, CreationStats& st) {
    const std::size_t g = u / cfg.dupe_factor;
    const std::size_t pass = u % cfg.dupe_factor;
    const auto begin = all.begin() + static_cast<std::ptrdiff_t>(g * all.size() / n_groups);
    const auto end = all.begin() + static_cast<std::ptrdiff_t>((g + 1) * all.size() / n_groups);
    std::vector<const TokenizedDocument*> group(begin, end);
    StreamKeys keys{cfg.master_seed, stream::conventional_pairing, stream::conventional_masking, g, pass};
    return create_instances_from_documents(group, vocab, cfg, keys, st);
  });
  res.report.mode = Mode::conventional;
  res.report.small_bytes = small_bytes;
  res.report.large_bytes = large_bytes;
  return res;
}

}  // namespace bpt

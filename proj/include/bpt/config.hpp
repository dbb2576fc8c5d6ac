#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "bpt/bpe.hpp"
#include "bpt/corpus.hpp"
#include "bpt/error.hpp"
#include "bpt/generate.hpp"
#include "bpt/instances.hpp"
#include "bpt/parallel.hpp"
#include "bpt/tokenizer.hpp"
#include "bpt/verify.hpp"

namespace bpt {

// Flat run configuration shared by all subcommands. The JSON form uses the
// field names below; it is what --config files contain and what manifests echo.
struct RunConfig {
  Mode mode = Mode::simpt;
  bool amplify_vocab = false;
  std::string small_corpus, small_label = "small";
  std::string large_corpus, large_label = "large";
  std::string glob = "*";
  InstanceConfig instances;
  std::size_t target_size = kDefaultVocabSize;
  std::uint64_t min_frequency = kDefaultMinFrequency;
  std::size_t max_chars_per_word = kDefaultMaxCharsPerWord;
  std::uint64_t each_file_size = kDefaultShardBytes;
  std::string vocab, merges, out, report, format = "binary";
  std::string ruleset, in, rest;
  Tolerances tolerances;
  unsigned threads = default_threads();

  nlohmann::json to_json() const {
    return {{"mode", to_string(mode)},
            {"amplify_vocab", amplify_vocab},
            {"small_corpus", small_corpus},
            {"small_label", small_label},
            {"large_corpus", large_corpus},
            {"large_label", large_label},
            {"glob", glob},
            {"max_seq_length", instances.max_seq_length},
            {"masked_lm_prob", instances.masked_lm_prob},
            {"max_predictions_per_seq", instances.max_predictions_per_seq},
            {"short_seq_prob", instances.short_seq_prob},
            {"dupe_factor", instances.dupe_factor},
            {"n_rounds", instances.n_rounds},
            {"n_splits", instances.n_splits},
            {"shards_per_corpus", instances.shards_per_corpus},
            {"master_seed", instances.master_seed},
            {"target_size", target_size},
            {"min_frequency", min_frequency},
            {"max_chars_per_word", max_chars_per_word},
            {"each_file_size", each_file_size},
            {"vocab", vocab},
            {"merges", merges},
            {"out", out},
            {"report", report},
            {"format", format},
            {"ruleset", ruleset},
            {"in", in},
            {"rest", rest},
            {"tol_mask_selection", tolerances.mask_selection},
            {"tol_mask_split", tolerances.mask_split},
            {"tol_nsp", tolerances.nsp_positive},
            {"tol_small_origin_simpt", tolerances.small_origin_simpt},
            {"tol_small_origin_conventional", tolerances.small_origin_conventional},
            {"min_instances", tolerances.min_instances},
            {"threads", threads}};
  }

  static RunConfig from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw usage_error("config must be a JSON object");
    RunConfig c;
    try {
      for (const auto& [key, value] : j.items()) {
        if (key == "mode") {
          const auto m = value.get<std::string>();
          if (m == "simpt") c.mode = Mode::simpt;
          else if (m == "conventional") c.mode = Mode::conventional;
          else throw usage_error("mode must be 'simpt' or 'conventional', got '" + m + "'");
        } else if (key == "amplify_vocab") c.amplify_vocab = value.get<bool>();
        else if (key == "small_corpus") c.small_corpus = value.get<std::string>();
        else if (key == "small_label") c.small_label = value.get<std::string>();
        else if (key == "large_corpus") c.large_corpus = value.get<std::string>();
        else if (key == "large_label") c.large_label = value.get<std::string>();
        else if (key == "glob") c.glob = value.get<std::string>();
        else if (key == "max_seq_length") c.instances.max_seq_length = value.get<std::size_t>();
        else if (key == "masked_lm_prob") c.instances.masked_lm_prob = value.get<double>();
        else if (key == "max_predictions_per_seq") c.instances.max_predictions_per_seq = value.get<std::size_t>();
        else if (key == "short_seq_prob") c.instances.short_seq_prob = value.get<double>();
        else if (key == "dupe_factor") c.instances.dupe_factor = value.get<std::size_t>();
        else if (key == "n_rounds") c.instances.n_rounds = value.get<std::size_t>();
        else if (key == "n_splits") c.instances.n_splits = value.get<std::size_t>();
        else if (key == "shards_per_corpus") c.instances.shards_per_corpus = value.get<std::size_t>();
        else if (key == "master_seed") c.instances.master_seed = value.get<std::uint64_t>();
        else if (key == "target_size") c.target_size = value.get<std::size_t>();
        else if (key == "min_frequency") c.min_frequency = value.get<std::uint64_t>();
        else if (key == "max_chars_per_word") c.max_chars_per_word = value.get<std::size_t>();
        else if (key == "each_file_size") c.each_file_size = value.get<std::uint64_t>();
        else if (key == "vocab") c.vocab = value.get<std::string>();
        else if (key == "merges") c.merges = value.get<std::string>();
        else if (key == "out") c.out = value.get<std::string>();
        else if (key == "report") c.report = value.get<std::string>();
        else if (key == "format") c.format = value.get<std::string>();
        else if (key == "ruleset") c.ruleset = value.get<std::string>();
        else if (key == "in") c.in = value.get<std::string>();
        else if (key == "rest") c.rest = value.get<std::string>();
        else if (key == "tol_mask_selection") c.tolerances.mask_selection = value.get<double>();
        else if (key == "tol_mask_split") c.tolerances.mask_split = value.get<double>();
        else if (key == "tol_nsp") c.tolerances.nsp_positive = value.get<double>();
        else if (key == "tol_small_origin_simpt") c.tolerances.small_origin_simpt = value.get<double>();
        else if (key == "tol_small_origin_conventional") c.tolerances.small_origin_conventional = value.get<double>();
        else if (key == "min_instances") c.tolerances.min_instances = value.get<std::uint64_t>();
        else if (key == "threads") c.threads = std::max(1u, value.get<unsigned>());
        else throw usage_error("unknown config key '" + key + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw usage_error(std::string("bad config value: ") + e.what());
    }
    return c;
  }
};

inline nlohmann::json load_config_json(const std::filesystem::path& path) {
  auto j = nlohmann::json::parse(detail::read_file(path), nullptr, false);
  if (j.is_discarded()) throw usage_error("config " + path.string() + " is not valid JSON");
  if (!j.is_object()) throw usage_error("config " + path.string() + " must be a JSON object");
  return j;
}

}  // namespace bpt

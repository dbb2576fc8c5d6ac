#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "bpt/bpe.hpp"
#include "bpt/config.hpp"
#include "bpt/corpus.hpp"
#include "bpt/error.hpp"
#include "bpt/generate.hpp"
#include "bpt/mesh_filter.hpp"
#include "bpt/serialize.hpp"
#include "bpt/tokenizer.hpp"
#include "bpt/verify.hpp"

namespace bpt::cli {

enum ExitCode : int { ok = 0, verification_failed = 1, usage = 2, io = 3 };

namespace detail {

struct FlagSpec {
  const char* flag;
  const char* key;
  const char* help;
};

// Command-line flags and the config keys they override.
inline const std::vector<FlagSpec>& flag_specs() {
  static const std::vector<FlagSpec> specs = {
      {"--mode", "mode", "simpt or conventional"},
      {"--small", "small_corpus", "small corpus file or directory"},
      {"--small-label", "small_label", "label of the small corpus"},
      {"--large", "large_corpus", "large corpus file or directory"},
      {"--large-label", "large_label", "label of the large corpus"},
      {"--glob", "glob", "filename pattern for directory inputs"},
      {"--max-seq-length", "max_seq_length", "maximum tokens per instance"},
      {"--masked-lm-prob", "masked_lm_prob", "fraction of tokens selected for masking"},
      {"--max-predictions", "max_predictions_per_seq", "cap on masked positions per instance"},
      {"--short-seq-prob", "short_seq_prob", "probability of a shorter target length"},
      {"--dupe-factor", "dupe_factor", "masking passes per group (conventional)"},
      {"--rounds", "n_rounds", "sampling rounds (simpt)"},
      {"--splits", "n_splits", "document groups (conventional)"},
      {"--shards-per-corpus", "shards_per_corpus", "shards drawn per corpus per round (simpt)"},
      {"--seed", "master_seed", "master random seed"},
      {"--target-size", "target_size", "vocabulary size"},
      {"--min-frequency", "min_frequency", "minimum pair count for a merge"},
      {"--max-chars-per-word", "max_chars_per_word", "longer words map to [UNK]"},
      {"--shard-size", "each_file_size", "target shard size in bytes"},
      {"--vocab", "vocab", "vocabulary file"},
      {"--merges", "merges", "merge list sidecar"},
      {"--out", "out", "output path"},
      {"--report", "report", "write the JSON report here instead of standard output"},
      {"--format", "format", "output format"},
      {"--ruleset", "ruleset", "MeSH ruleset (JSON)"},
      {"--in", "in", "input path"},
      {"--rest", "rest", "write records that were not selected here"},
      {"--tol-mask-selection", "tol_mask_selection", "tolerance on the mask selection rate"},
      {"--tol-mask-split", "tol_mask_split", "tolerance on each replacement fraction"},
      {"--tol-nsp", "tol_nsp", "tolerance on the NSP positive rate"},
      {"--tol-small-origin-simpt", "tol_small_origin_simpt", "tolerance on the small-origin fraction (simpt)"},
      {"--tol-small-origin-conventional", "tol_small_origin_conventional",
       "tolerance on the small-origin fraction (conventional)"},
      {"--min-instances", "min_instances", "minimum instances for statistical checks"},
      {"--threads", "threads", "worker threads (default: BPT_THREADS or hardware concurrency)"},
  };
  return specs;
}

// Collects flag values as strings; after parsing they are typed against the
// default config and laid over the --config file.
class Overrides {
 public:
  void add(CLI::App& app, const std::vector<std::string>& keys) {
    for (const auto& spec : flag_specs()) {
      if (std::find(keys.begin(), keys.end(), spec.key) == keys.end()) continue;
      auto& slot = values_[spec.key];
      options_[spec.key] = app.add_option(spec.flag, slot, spec.help);
    }
  }
  void add_switch(CLI::App& app, const std::string& flag, const std::string& key, const std::string& help) {
    switches_[key] = app.add_flag(flag, help);
  }

  nlohmann::json effective(const std::string& config_path) const {
    nlohmann::json j = config_path.empty() ? nlohmann::json::object() : load_config_json(config_path);
    const auto defaults = RunConfig{}.to_json();
    for (const auto& [key, opt] : options_) {
      if (opt->count() == 0) continue;
      const std::string& text = values_.at(key);
      const auto& def = defaults.at(key);
      try {
        if (def.is_number_unsigned() || def.is_number_integer()) {
          if (text.empty() || text[0] == '-') throw std::invalid_argument(text);
          j[key] = std::stoull(text);
        } else if (def.is_number_float()) {
          j[key] = std::stod(text);
        } else {
          j[key] = text;
        }
      } catch (const std::exception&) {
        throw usage_error("invalid value for " + key + ": '" + text + "'");
      }
    }
    for (const auto& [key, opt] : switches_)
      if (opt->count() > 0) j[key] = true;
    return j;
  }

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, CLI::Option*> options_;
  std::map<std::string, CLI::Option*> switches_;
};

inline void emit_json(const nlohmann::json& j, const std::string& path, std::ostream& out) {
  if (path.empty())
    out << j.dump(2) << '\n';
  else
    bpt::detail::write_text(path, j.dump(2) + "\n");
}

inline void require(bool cond, const std::string& message) {
  if (!cond) throw usage_error(message);
}

inline Corpus load_labeled(const std::string& path, const std::string& label, Origin origin, const RunConfig& cfg) {
  return load_corpus(path, label, origin, cfg.glob);
}

}  // namespace detail

// --- subcommands --------------------------------------------------------------

inline int cmd_filter(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  detail::require(!cfg.ruleset.empty(), "filter: --ruleset is required");
  detail::require(!cfg.in.empty(), "filter: --in is required");
  const auto ruleset = mesh::load_ruleset(cfg.ruleset);
  const auto records = mesh::load_records(cfg.in);
  std::vector<mesh::ArticleRecord> kept, rest;
  const auto report = mesh::select_articles(
      records, ruleset,
      [&](const mesh::ArticleRecord& r, mesh::Verdict v) {
        if (v == mesh::Verdict::included)
          kept.push_back(r);
        else if (v != mesh::Verdict::skipped)
          rest.push_back(r);
      },
      &err);
  if (!cfg.out.empty()) bpt::detail::write_text(cfg.out, mesh::records_to_corpus_text(kept));
  if (!cfg.rest.empty()) bpt::detail::write_text(cfg.rest, mesh::records_to_corpus_text(rest));
  auto j = report.to_json();
  j["ruleset"] = ruleset.name;
  detail::emit_json(j, cfg.report, out);
  return ok;
}

inline int cmd_shard(const RunConfig& cfg, std::ostream& out) {
  detail::require(!cfg.in.empty(), "shard: --in is required");
  detail::require(!cfg.out.empty(), "shard: --out directory is required");
  const std::string label = cfg.small_label != "small" ? cfg.small_label : std::filesystem::path(cfg.in).stem().string();
  const auto corpus = load_corpus(cfg.in, label, Origin::small, cfg.glob);
  const auto shards = split_corpus(corpus, cfg.each_file_size);
  const auto paths = write_shards(shards, cfg.out, label);
  nlohmann::json j = {{"label", label}, {"documents", corpus.documents.size()}, {"total_bytes", corpus.total_bytes},
                      {"each_file_size", cfg.each_file_size}, {"shards", nlohmann::json::array()}};
  for (std::size_t i = 0; i < shards.size(); ++i)
    j["shards"].push_back({{"shard_id", shards[i].shard_id},
                           {"path", paths[i].string()},
                           {"documents", shards[i].documents.size()},
                           {"byte_size", shards[i].byte_size}});
  detail::emit_json(j, cfg.report, out);
  return ok;
}

inline int cmd_build_vocab(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  detail::require(!cfg.small_corpus.empty() || !cfg.large_corpus.empty(), "build-vocab: need --small and/or --large");
  detail::require(!cfg.out.empty(), "build-vocab: --out (vocabulary path) is required");
  if (cfg.amplify_vocab)
    detail::require(!cfg.small_corpus.empty() && !cfg.large_corpus.empty(), "build-vocab: --amplify needs two corpora");

  CorpusWords small, large;
  if (!cfg.small_corpus.empty())
    small = count_words(detail::load_labeled(cfg.small_corpus, cfg.small_label, Origin::small, cfg), cfg.threads);
  if (!cfg.large_corpus.empty())
    large = count_words(detail::load_labeled(cfg.large_corpus, cfg.large_label, Origin::large, cfg), cfg.threads);

  std::optional<AmplificationPlan> plan;
  WordCounts stream;
  if (cfg.amplify_vocab) {
    plan = plan_amplification(small, large);
    stream = amplified_stream(small, large, plan->repeat_factor);
    err << "amplifying small corpus x" << plan->repeat_factor << " (" << small.normalized_bytes << " vs "
        << large.normalized_bytes << " bytes)\n";
  } else {
    stream = amplified_stream(small, large, 1);
  }
  auto result = train_bpe(stream, BpeOptions{cfg.target_size, cfg.min_frequency});
  result.report.amplification = plan;
  for (const auto& w : result.report.warnings) err << "warning: " << w << '\n';
  write_vocab(result.vocab, cfg.out,
              cfg.merges.empty() ? std::nullopt : std::optional<std::filesystem::path>(cfg.merges));
  auto j = result.report.to_json();
  j["vocab_hash"] = hex64(result.vocab.hash());
  detail::emit_json(j, cfg.report, out);
  return ok;
}

inline int cmd_tokenize(const RunConfig& cfg, std::istream& in, std::ostream& out) {
  detail::require(!cfg.vocab.empty(), "tokenize: --vocab is required");
  const auto vocab = read_vocab(cfg.vocab);
  const WordPieceTokenizer tok(vocab, cfg.max_chars_per_word);
  std::unique_ptr<std::istream> file_in;
  std::unique_ptr<std::ofstream> file_out;
  std::istream* src = &in;
  std::ostream* dst = &out;
  if (!cfg.in.empty() && cfg.in != "-") {
    detail::require(std::filesystem::exists(cfg.in), "no such file: " + cfg.in);
    file_in = std::make_unique<std::ifstream>(cfg.in, std::ios::binary);
    if (!*file_in) throw io_error("cannot open " + cfg.in);
    src = file_in.get();
  }
  if (!cfg.out.empty() && cfg.out != "-") {
    file_out = std::make_unique<std::ofstream>(cfg.out, std::ios::binary);
    if (!*file_out) throw io_error("cannot write " + cfg.out);
    dst = file_out.get();
  }
  std::string line;
  while (std::getline(*src, line)) {
    if (auto bad = utf8::first_invalid(line)) throw data_error("invalid UTF-8 at byte offset " + std::to_string(*bad));
    const auto seq = tok.tokenize(line);
    for (std::size_t i = 0; i < seq.tokens.size(); ++i) *dst << (i ? " " : "") << seq.tokens[i];
    *dst << '\n';
  }
  if (!*dst) throw io_error("write failed");
  return ok;
}

inline int cmd_create_instances(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  cfg.instances.validate();
  detail::require(!cfg.vocab.empty(), "create-instances: --vocab is required");
  detail::require(!cfg.out.empty(), "create-instances: --out is required");
  detail::require(cfg.format == "binary" || cfg.format == "jsonl", "--format must be 'binary' or 'jsonl'");
  if (cfg.mode == Mode::simpt)
    detail::require(!cfg.small_corpus.empty() && !cfg.large_corpus.empty(), "simpt requires two corpora");
  else
    detail::require(!cfg.small_corpus.empty() || !cfg.large_corpus.empty(), "conventional requires at least one corpus");

  const auto vocab = read_vocab(cfg.vocab);
  const WordPieceTokenizer tok(vocab, cfg.max_chars_per_word);
  std::optional<TokenizedCorpus> small, large;
  if (!cfg.small_corpus.empty())
    small = tokenize_corpus(detail::load_labeled(cfg.small_corpus, cfg.small_label, Origin::small, cfg), tok, cfg.threads);
  if (!cfg.large_corpus.empty())
    large = tokenize_corpus(detail::load_labeled(cfg.large_corpus, cfg.large_label, Origin::large, cfg), tok, cfg.threads);

  GenerationResult result;
  if (cfg.mode == Mode::simpt) {
    const auto ss = shard_views(*small, cfg.each_file_size);
    const auto ls = shard_views(*large, cfg.each_file_size);
    err << "simpt: " << ss.size() << " small shards, " << ls.size() << " large shards, " << cfg.instances.n_rounds
        << " rounds\n";
    result = generate_simpt(*small, ss, *large, ls, vocab, cfg.instances, cfg.threads);
  } else {
    std::vector<const TokenizedCorpus*> corpora;
    if (small) corpora.push_back(&*small);
    if (large) corpora.push_back(&*large);
    result = generate_conventional(corpora, vocab, cfg.instances, cfg.threads);
  }
  const auto report = result.report.to_json();
  if (cfg.format == "jsonl") {
    write_instances_jsonl(result.instances, cfg.out, vocab);
  } else {
    WriteOptions opts{cfg.instances.max_seq_length, cfg.instances.max_predictions_per_seq,
                      {{"config", cfg.to_json()}, {"master_seed", cfg.instances.master_seed}, {"report", report}}};
    write_instances(result.instances, cfg.out, vocab, opts);
  }
  err << "wrote " << result.instances.size() << " instances to " << cfg.out << '\n';
  detail::emit_json(report, cfg.report, out);
  return ok;
}

inline int cmd_verify(const RunConfig& cfg, std::ostream& out) {
  detail::require(!cfg.in.empty(), "verify: instance file is required");
  detail::require(std::filesystem::exists(cfg.in), "no such file: " + cfg.in);
  std::optional<Vocabulary> vocab;
  if (!cfg.vocab.empty()) vocab = read_vocab(cfg.vocab);
  const auto rep = verify_file(cfg.in, vocab ? &*vocab : nullptr, cfg.tolerances);
  if (cfg.format == "json") {
    out << rep.to_json().dump(2) << '\n';
  } else {
    out << rep.to_text();
  }
  if (!cfg.report.empty()) bpt::detail::write_text(cfg.report, rep.to_json().dump(2) + "\n");
  return rep.pass() ? ok : verification_failed;
}

struct CompareRow {
  std::string name;
  std::uint64_t instances = 0;
  std::uint64_t negatives = 0;
  std::optional<std::uint64_t> distinct_pairs;
  double small_origin_fraction = 0.0;
};

inline std::vector<CompareRow> compare_files(const std::vector<std::string>& files, bool equalize) {
  std::vector<std::vector<PretrainInstance>> loaded;
  std::vector<bool> has_pairs;
  for (const auto& f : files) {
    detail::require(std::filesystem::exists(f), "no such file: " + f);
    ReadOptions opts;
    opts.verify_checksum = std::filesystem::exists(manifest_path(f));
    loaded.push_back(read_instances(f, opts));
    has_pairs.push_back(read_pairs(f).has_value());
  }
  std::size_t n = SIZE_MAX;
  for (const auto& v : loaded) n = std::min(n, v.size());
  std::vector<CompareRow> rows;
  for (std::size_t i = 0; i < files.size(); ++i) {
    auto& v = loaded[i];
    if (equalize && v.size() > n) v.resize(n);
    CompareRow row{files[i], v.size(), 0, std::nullopt, 0.0};
    std::uint64_t s = 0, l = 0;
    for (const auto& inst : v) {
      row.negatives += !inst.is_next;
      s += inst.origin_small_tokens;
      l += inst.origin_large_tokens;
    }
    row.small_origin_fraction = s + l ? double(s) / double(s + l) : 0.0;
    if (has_pairs[i]) row.distinct_pairs = pair_diversity(v);
    rows.push_back(std::move(row));
  }
  return rows;
}

inline int cmd_compare(const std::vector<std::string>& files, bool equalize, const RunConfig& cfg, std::ostream& out) {
  detail::require(files.size() == 2, "compare: exactly two instance files are required");
  const auto rows = compare_files(files, equalize);
  const bool insufficient = rows[0].instances == 0 || rows[1].instances == 0;
  nlohmann::json j = {{"equalized", equalize}, {"rows", nlohmann::json::array()}};
  char line[512];
  std::snprintf(line, sizeof line, "%-40s %10s %10s %14s %14s\n", "file", "instances", "negatives", "distinct_pairs",
                "small_origin");
  out << line;
  for (const auto& r : rows) {
    const std::string pairs = r.distinct_pairs ? std::to_string(*r.distinct_pairs) : "n/a";
    const std::string frac = r.instances ? std::to_string(r.small_origin_fraction) : "insufficient data";
    std::snprintf(line, sizeof line, "%-40s %10llu %10llu %14s %14s\n", r.name.c_str(),
                  static_cast<unsigned long long>(r.instances), static_cast<unsigned long long>(r.negatives),
                  pairs.c_str(), frac.c_str());
    out << line;
    j["rows"].push_back({{"file", r.name},
                         {"instances", r.instances},
                         {"negatives", r.negatives},
                         {"distinct_negative_pairs", r.distinct_pairs ? nlohmann::json(*r.distinct_pairs) : nlohmann::json()},
                         {"small_origin_fraction", r.instances ? nlohmann::json(r.small_origin_fraction) : nlohmann::json()}});
  }
  if (insufficient) out << "insufficient data: at least one file holds no instances\n";
  j["insufficient_data"] = insufficient;
  if (!cfg.report.empty()) bpt::detail::write_text(cfg.report, j.dump(2) + "\n");
  return ok;
}

// --- entry point --------------------------------------------------------------

inline int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"Corpus balancing toolkit for BERT-style pre-training data"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  struct Sub {
    CLI::App* app;
    detail::Overrides overrides;
    std::string config;
  };
  std::map<std::string, std::unique_ptr<Sub>> subs;
  auto add = [&](const std::string& name, const std::string& help, const std::vector<std::string>& keys) -> Sub& {
    auto sub = std::make_unique<Sub>();
    sub->app = app.add_subcommand(name, help);
    sub->app->add_option("--config", sub->config, "JSON run config; flags override its values");
    sub->overrides.add(*sub->app, keys);
    auto& ref = *sub;
    subs[name] = std::move(sub);
    return ref;
  };

  add("filter", "select articles by MeSH tree-number rules", {"ruleset", "in", "out", "rest", "report"});
  add("shard", "split a corpus into fixed-size shards of whole documents",
      {"in", "out", "small_label", "each_file_size", "glob", "report"});
  auto& vocab_cmd = add("build-vocab", "train a BPE vocabulary, optionally amplifying the small corpus",
                        {"small_corpus", "small_label", "large_corpus", "large_label", "glob", "target_size",
                         "min_frequency", "out", "merges", "report", "threads"});
  vocab_cmd.overrides.add_switch(*vocab_cmd.app, "--amplify", "amplify_vocab", "repeat the small corpus to match the large one");
  add("tokenize", "WordPiece-tokenize sentence-per-line text", {"vocab", "in", "out", "max_chars_per_word"});
  add("create-instances", "generate MLM/NSP pre-training instances",
      {"mode", "small_corpus", "small_label", "large_corpus", "large_label", "glob", "max_seq_length",
       "masked_lm_prob", "max_predictions_per_seq", "short_seq_prob", "dupe_factor", "n_rounds", "n_splits",
       "shards_per_corpus", "master_seed", "each_file_size", "max_chars_per_word", "vocab", "out", "format",
       "report", "threads"});
  auto& verify_cmd = add("verify", "check masking, NSP and balance statistics of an instance file",
                         {"in", "vocab", "format", "report", "tol_mask_selection", "tol_mask_split", "tol_nsp",
                          "tol_small_origin_simpt", "tol_small_origin_conventional", "min_instances"});
  std::string verify_file_arg;
  verify_cmd.app->add_option("file", verify_file_arg, "instance file");
  auto& compare_cmd = add("compare", "compare NSP pair diversity and origin balance of two instance files", {"report"});
  std::vector<std::string> compare_files_arg;
  bool no_equalize = false;
  compare_cmd.app->add_option("files", compare_files_arg, "two instance files")->expected(2);
  compare_cmd.app->add_flag("--no-equalize", no_equalize, "compare full files instead of equal-length prefixes");

  std::vector<const char*> argv{"bpt"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? ok : usage;
  }

  try {
    for (auto& [name, sub] : subs) {
      if (!sub->app->parsed()) continue;
      auto eff = sub->overrides.effective(sub->config);
      if (name == "verify" && !verify_file_arg.empty()) eff["in"] = verify_file_arg;
      const RunConfig cfg = RunConfig::from_json(eff);
      if (name == "filter") return cmd_filter(cfg, out, err);
      if (name == "shard") return cmd_shard(cfg, out);
      if (name == "build-vocab") return cmd_build_vocab(cfg, out, err);
      if (name == "tokenize") return cmd_tokenize(cfg, in, out);
      if (name == "create-instances") return cmd_create_instances(cfg, out, err);
      if (name == "verify") return cmd_verify(cfg, out);
      if (name == "compare") return cmd_compare(compare_files_arg, !no_equalize, cfg, out);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.kind() == ErrorKind::usage ? usage : io;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return io;
  }
  return usage;
}

inline int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cin, std::cout, std::cerr);
}

}  // namespace bpt::cli

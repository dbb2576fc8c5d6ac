// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "bpt/bpt.hpp"
#include "bpt/cli.hpp"
#include "oracles.hpp"
#include "pipeline.hpp"
#include "synth.hpp"
#include "tempdir.hpp"

using namespace bpt;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

bool within(double x, double lo, double hi) { return x >= lo && x <= hi; }

const unsigned kThreads = std::max(1u, std::min(8u, std::thread::hardware_concurrency()));

// Pseudo-word corpora at byte ratio 1:30. Ten marker words appear only in the
// small corpus.
const std::vector<std::string> kMarkers = {"kawasaki", "takayasu", "moyamoya", "hashimoto", "tsutsugamushi",
                                           "kikuchi",  "minamata", "yusho",    "ohtahara",  "itai"};
constexpr std::size_t kAmpTarget = 1000;  // frozen after the brute-force run: plain 0 markers, amplified 9

struct Ratio30 {
  Corpus small_raw, large_raw;
  CorpusWords small_words, large_words;
  std::uint64_t repeat_factor = 0;
  Vocabulary plain, amplified;
  TokenizedCorpus small, large;
};

const Ratio30& ratio30() {
  static const Ratio30 r = [] {
    Ratio30 r;
    const auto lex = synth::pseudo_lexicon(3000, 77);
    synth::CorpusSpec s;
    s.target_bytes = 300'000;
    s.seed = 501;
    s.lexicon = lex;
    s.zipf_exponent = 1.0;
    s.extra = kMarkers;
    s.extra_rate = 0.1;
    auto l = s;
    l.target_bytes = 9'000'000;
    l.seed = 502;
    l.extra.clear();
    r.small_raw = parse_corpus(synth::make_corpus(s), "small", Origin::small);
    r.large_raw = parse_corpus(synth::make_corpus(l), "large", Origin::large);
    r.small_words = count_words(r.small_raw, kThreads);
    r.large_words = count_words(r.large_raw, kThreads);
    r.repeat_factor = plan_amplification(r.small_words, r.large_words).repeat_factor;
    r.plain = train_bpe(amplified_stream(r.small_words, r.large_words, 1), {kAmpTarget, 2}).vocab;
    r.amplified = train_bpe(amplified_stream(r.small_words, r.large_words, r.repeat_factor), {kAmpTarget, 2}).vocab;
    const WordPieceTokenizer tok(r.amplified);
    r.small = tokenize_corpus(r.small_raw, tok, kThreads);
    r.large = tokenize_corpus(r.large_raw, tok, kThreads);
    return r;
  }();
  return r;
}

InstanceConfig ratio30_config() {
  InstanceConfig cfg;
  cfg.max_predictions_per_seq = cfg.max_seq_length;  // cap can never bind
  cfg.n_rounds = 400;
  cfg.shards_per_corpus = 10;
  cfg.dupe_factor = 1;
  cfg.master_seed = 2024;
  return cfg;
}

const GenerationResult& ratio30_simpt() {
  static const GenerationResult g = [] {
    const auto& r = ratio30();
    return generate_simpt(r.small, shard_views(r.small, 10'000), r.large, shard_views(r.large, 10'000), r.amplified,
                          ratio30_config(), kThreads);
  }();
  return g;
}

const GenerationResult& ratio30_conventional() {
  static const GenerationResult g = [] {
    const auto& r = ratio30();
    return generate_conventional({&r.small, &r.large}, r.amplified, ratio30_config(), kThreads);
  }();
  return g;
}

// Counted straight from the instance vectors.
struct MaskTally {
  std::uint64_t instances = 0, candidates = 0, masked = 0, as_mask = 0, as_random = 0, as_self = 0, positives = 0;
  std::uint64_t small_tokens = 0, large_tokens = 0;
};

MaskTally tally(const std::vector<PretrainInstance>& all, TokenId mask_id) {
  MaskTally t;
  for (const auto& inst : all) {
    ++t.instances;
    t.positives += inst.is_next;
    t.candidates += inst.token_ids.size() - 3;
    t.masked += inst.masked_positions.size();
    for (std::size_t k = 0; k < inst.masked_positions.size(); ++k) {
      const auto now = inst.token_ids[inst.masked_positions[k]];
      if (now == mask_id)
        ++t.as_mask;
      else if (now == inst.masked_labels[k])
        ++t.as_self;
      else
        ++t.as_random;
    }
    t.small_tokens += inst.origin_small_tokens;
    t.large_tokens += inst.origin_large_tokens;
  }
  return t;
}

Outcome masking_statistics() {
  const auto t = tally(ratio30_simpt().instances, ratio30().amplified.mask_id());
  const double rate = double(t.masked) / double(t.candidates);
  const double m = double(t.masked);
  const double fm = t.as_mask / m, fr = t.as_random / m, fs = t.as_self / m;
  const bool ok = t.instances >= 100'000 && within(rate, 0.147, 0.153) && std::abs(fm - 0.8) <= 0.005 &&
                  std::abs(fr - 0.1) <= 0.005 && std::abs(fs - 0.1) <= 0.005;
  return {ok, std::to_string(t.instances) + " instances, selection " + fmt(rate) + ", split " + fmt(fm) + "/" +
                  fmt(fr) + "/" + fmt(fs)};
}

Outcome nsp_balance() {
  const auto s = tally(ratio30_simpt().instances, ratio30().amplified.mask_id());
  const auto c = tally(ratio30_conventional().instances, ratio30().amplified.mask_id());
  const double fs = double(s.positives) / double(s.instances);
  const double fc = double(c.positives) / double(c.instances);
  const bool ok = s.instances >= 10'000 && c.instances >= 10'000 && within(fs, 0.48, 0.52) && within(fc, 0.48, 0.52);
  return {ok, "simpt " + fmt(fs) + " over " + std::to_string(s.instances) + ", conventional " + fmt(fc) + " over " +
                  std::to_string(c.instances)};
}

Outcome simpt_balance() {
  const auto& r = ratio30();
  const double byte_ratio = double(r.small_raw.total_bytes) / double(r.large_raw.total_bytes);
  const auto s = tally(ratio30_simpt().instances, r.amplified.mask_id());
  const auto c = tally(ratio30_conventional().instances, r.amplified.mask_id());
  const double fs = double(s.small_tokens) / double(s.small_tokens + s.large_tokens);
  const double fc = double(c.small_tokens) / double(c.small_tokens + c.large_tokens);
  const bool ok = within(byte_ratio, 1.0 / 31.0, 1.0 / 29.0) && within(fs, 0.45, 0.55) && std::abs(fc - 1.0 / 31.0) <= 0.01;
  return {ok, "byte ratio 1:" + fmt(1.0 / byte_ratio, 2) + ", simpt small fraction " + fmt(fs) + ", conventional " +
                  fmt(fc) + " (1/31 = " + fmt(1.0 / 31.0) + ")"};
}

std::size_t distinct_negative_pairs(const std::vector<PretrainInstance>& v, std::size_t n) {
  std::set<std::pair<std::string, std::string>> pairs;
  for (std::size_t i = 0; i < n; ++i)
    if (!v[i].is_next) pairs.insert(std::minmax(v[i].doc_a, v[i].doc_b));
  return pairs.size();
}

struct Toy {
  Corpus small_raw, large_raw;
  Vocabulary vocab;
  TokenizedCorpus small, large;
};

const Toy& toy() {
  static const Toy t = [] {
    Toy t;
    t.small_raw = fixture::corpus("small", Origin::small, 60'000, 11);
    t.large_raw = fixture::corpus("large", Origin::large, 600'000, 12);
    t.vocab = fixture::vocab_for(t.large_raw);
    const WordPieceTokenizer tok(t.vocab);
    t.small = tokenize_corpus(t.small_raw, tok, kThreads);
    t.large = tokenize_corpus(t.large_raw, tok, kThreads);
    return t;
  }();
  return t;
}

Outcome diversity() {
  const auto& t = toy();
  bool ok = true;
  std::string detail;
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    InstanceConfig cfg;
    cfg.master_seed = seed;
    cfg.dupe_factor = 10;
    cfg.n_rounds = 150;
    const auto conv = generate_conventional({&t.small, &t.large}, t.vocab, cfg, kThreads).instances;
    const auto simpt =
        generate_simpt(t.small, shard_views(t.small, 3000), t.large, shard_views(t.large, 3000), t.vocab, cfg, kThreads)
            .instances;
    const std::size_t n = std::min(conv.size(), simpt.size());
    const auto ds = distinct_negative_pairs(simpt, n), dc = distinct_negative_pairs(conv, n);
    ok = ok && ds > dc;
    detail += (detail.empty() ? "" : "; ") + std::string("seed ") + std::to_string(seed) + ": " + std::to_string(ds) +
              " vs " + std::to_string(dc) + " at " + std::to_string(n);
  }
  return {ok, detail};
}

std::size_t markers_in(const std::vector<std::string>& tokens) {
  std::size_t n = 0;
  for (const auto& m : kMarkers) n += std::find(tokens.begin(), tokens.end(), m) != tokens.end();
  return n;
}

Outcome ampv_effect() {
  const auto& r = ratio30();
  const std::size_t plain = markers_in(r.plain.tokens()), amp = markers_in(r.amplified.tokens());
  // The brute-force trainer must agree on both streams.
  auto as_map = [](const WordCounts& w) { return std::map<std::string, std::uint64_t>(w.begin(), w.end()); };
  const auto oracle_plain = oracle::brute_force_bpe(as_map(amplified_stream(r.small_words, r.large_words, 1)), kAmpTarget, 2);
  const auto oracle_amp =
      oracle::brute_force_bpe(as_map(amplified_stream(r.small_words, r.large_words, r.repeat_factor)), kAmpTarget, 2);
  const bool agree = oracle_plain.tokens == r.plain.tokens() && oracle_amp.tokens == r.amplified.tokens();
  const bool ok = agree && amp >= 8 && plain <= 2;
  return {ok, "repeat factor " + std::to_string(r.repeat_factor) + ", markers amplified " + std::to_string(amp) +
                  "/10, plain " + std::to_string(plain) + "/10, oracle " + (agree ? "agrees" : "DISAGREES")};
}

Outcome wordpiece_golden() {
  const Vocabulary v{{"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "app", "apple", "##end", "##ici", "##tis", "##en"}};
  const auto got = WordPieceTokenizer(v).tokenize("appendicitis").tokens;
  const std::vector<std::string> want = {"app", "##end", "##ici", "##tis"};
  std::string joined;
  for (const auto& p : got) joined += (joined.empty() ? "" : " ") + p;
  return {got == want && !v.contains("appendicitis"), joined};
}

Outcome bpe_oracle() {
  std::mt19937_64 rng(9001);
  const std::string alphabets[] = {"ab", "abc", "abcde", "aeiklmnst", "xyz"};
  std::size_t agree = 0, total = 0, merges = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const auto& alpha = alphabets[trial % 5];
    std::map<std::string, std::uint64_t> counts;
    const std::size_t n_words = 1 + rng() % 20;
    while (counts.size() < n_words) {
      std::string w;
      const std::size_t len = 1 + rng() % 8;
      for (std::size_t i = 0; i < len; ++i) w += alpha[rng() % alpha.size()];
      counts[w] = 1 + rng() % 50;
      if (counts.size() < n_words && rng() % 4 == 0) counts[w + w] = 1 + rng() % 5;
    }
    const std::size_t target = 6 + 2 * alpha.size() + rng() % 40;  // above specials plus bare and "##" letters
    const std::uint64_t min_freq = 1 + rng() % 3;
    const auto want = oracle::brute_force_bpe(counts, target, min_freq);
    const auto got = train_bpe(WordCounts(counts.begin(), counts.end()), {target, min_freq});
    ++total;
    merges += want.merges.size();
    agree += got.vocab.merges() == want.merges && got.vocab.tokens() == want.tokens;
  }
  return {agree == total, std::to_string(agree) + "/" + std::to_string(total) + " corpora identical, " +
                              std::to_string(merges) + " merges compared"};
}

Outcome dupe_factor() {
  const auto& t = toy();
  InstanceConfig cfg;
  cfg.dupe_factor = 1;
  const auto one = generate_conventional({&t.small, &t.large}, t.vocab, cfg, kThreads).instances;
  const std::size_t k = 3;
  cfg.dupe_factor = k;
  const auto many = generate_conventional({&t.small, &t.large}, t.vocab, cfg, kThreads).instances;

  using Key = std::tuple<std::vector<TokenId>, std::vector<std::uint8_t>, bool, std::string, std::string>;
  auto key = [](const PretrainInstance& i) { return Key{i.original_ids(), i.segment_ids, i.is_next, i.doc_a, i.doc_b}; };
  std::map<Key, std::size_t> m1, mk;
  std::map<Key, std::set<std::vector<std::uint16_t>>> patterns;
  for (const auto& i : one) ++m1[key(i)];
  for (const auto& i : many) {
    ++mk[key(i)];
    patterns[key(i)].insert(i.masked_positions);
  }
  bool multiset_ok = m1.size() == mk.size();
  for (const auto& [kk, c] : m1) multiset_ok = multiset_ok && mk.count(kk) && mk.at(kk) == k * c;
  std::size_t varied = 0;
  for (const auto& [kk, p] : patterns) varied += p.size() > 1;
  const double varied_frac = patterns.empty() ? 0.0 : double(varied) / double(patterns.size());
  const bool ok = many.size() == k * one.size() && multiset_ok && varied_frac >= 0.9;
  return {ok, std::to_string(many.size()) + " = " + std::to_string(k) + " x " + std::to_string(one.size()) +
                  ", segment pairs " + (multiset_ok ? "identical" : "DIFFER") + ", mask patterns vary for " +
                  fmt(100 * varied_frac, 1) + "% of pairs"};
}

synth::CorpusSpec spec(std::uint64_t bytes, std::uint64_t seed) {
  synth::CorpusSpec s;
  s.target_bytes = bytes;
  s.seed = seed;
  return s;
}

int cli_run(const std::vector<std::string>& args) {
  std::istringstream in;
  std::ostringstream out, err;
  return cli::run(args, in, out, err);
}

Outcome determinism() {
  TempDir tmp;
  std::ofstream(tmp.file("small.txt")) << synth::make_corpus(spec(60000, 21));
  std::ofstream(tmp.file("large.txt")) << synth::make_corpus(spec(600000, 22));
  if (cli_run({"build-vocab", "--small", tmp.file("small.txt"), "--large", tmp.file("large.txt"), "--amplify",
               "--target-size", "300", "--out", tmp.file("vocab.txt")}) != 0)
    return {false, "build-vocab failed"};
  bool ok = true;
  std::string detail;
  for (std::string mode : {"simpt", "conventional"}) {
    std::string reference;
    for (std::string threads : {"1", "4", "8"}) {
      const auto out = tmp.file(mode + threads + ".bin");
      if (cli_run({"create-instances", "--mode", mode, "--small", tmp.file("small.txt"), "--large",
                   tmp.file("large.txt"), "--vocab", tmp.file("vocab.txt"), "--shard-size", "3000", "--rounds", "40",
                   "--seed", "99", "--threads", threads, "--out", out}) != 0)
        return {false, mode + " create-instances failed at --threads " + threads};
      const auto bytes = detail::read_file(out) + detail::read_file(pairs_path(out));
      if (reference.empty())
        reference = bytes;
      else
        ok = ok && bytes == reference;
    }
    detail += (detail.empty() ? "" : ", ") + mode + " " + std::to_string(reference.size()) + " bytes";
  }
  return {ok, detail + (ok ? ", identical at 1/4/8 threads" : ", files differ")};
}

std::optional<InstanceFileErrc> read_errc(const std::filesystem::path& p, const Vocabulary* v = nullptr) {
  try {
    read_instances(p, {v, true});
  } catch (const InstanceFileError& e) {
    return e.code();
  }
  return std::nullopt;
}

Outcome round_trips() {
  TempDir tmp;
  const auto& t = toy();
  std::vector<std::string> failures;

  const auto shards = split_corpus(t.small_raw, 5000);
  write_shards(shards, tmp.file("shards"), "small");
  if (load_corpus(tmp.file("shards"), "small", Origin::small).documents != t.small_raw.documents)
    failures.push_back("corpus shards");

  write_vocab(t.vocab, tmp.file("vocab.txt"), tmp.file("merges.txt"));
  const auto back = read_vocab(tmp.file("vocab.txt"), std::filesystem::path(tmp.file("merges.txt")));
  if (!(back == t.vocab) || back.hash() != t.vocab.hash()) failures.push_back("vocabulary");

  InstanceConfig cfg;
  cfg.dupe_factor = 1;
  const auto inst = generate_conventional({&t.small}, t.vocab, cfg, 1).instances;
  const auto path = tmp.file("inst.bin");
  write_instances(inst, path, t.vocab, {});
  const auto read = read_instances(path, {&t.vocab, true});
  if (read != inst) failures.push_back("instance file");

  const auto good = detail::read_file(path);
  auto expect = [&](const std::string& bytes, InstanceFileErrc want, const Vocabulary* v = nullptr) {
    detail::write_text(path, bytes);
    const auto got = read_errc(path, v);
    if (got != want) failures.push_back(std::string(message(want)) + " not raised");
  };
  auto flipped = good;
  flipped[good.size() / 2] ^= 0x20;
  expect(flipped, InstanceFileErrc::checksum_mismatch);
  expect(good.substr(0, good.size() - 5), InstanceFileErrc::unexpected_end);
  expect(good + "junk", InstanceFileErrc::trailing_data);
  expect("XPTI" + good.substr(4), InstanceFileErrc::bad_magic);
  auto version = good;
  version[4] = 7;
  expect(version, InstanceFileErrc::bad_version);
  const auto other = fixture::flat_vocab(3);
  expect(good, InstanceFileErrc::vocab_hash_mismatch, &other);
  std::filesystem::remove(manifest_path(path));
  expect(good, InstanceFileErrc::missing_manifest);

  try {
    parse_vocab("[PAD]\n[UNK]\n[CLS]\n[SEP]\n[MASK]\na\na\n");
    failures.push_back("duplicate vocabulary token accepted");
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::data) failures.push_back("duplicate vocabulary token: wrong error kind");
  }
  try {
    parse_corpus("fine line\n\xff\xfe broken\n", "bad", Origin::small);
    failures.push_back("invalid UTF-8 accepted");
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::data) failures.push_back("invalid UTF-8: wrong error kind");
  }

  std::string detail = failures.empty() ? "shards, vocabulary and instances lossless; 7 corruption errors named" : "";
  for (const auto& f : failures) detail += (detail.empty() ? "" : "; ") + f;
  return {failures.empty(), detail};
}

// The rule as stated, written independently of the library.
std::string stated_rule(const nlohmann::json& rec, const nlohmann::json& rs) {
  static const std::regex valid(R"([A-Z](\d{2}(\.\d{3})*)?)");
  const auto trees = rec.at("tree_numbers").get<std::vector<std::string>>();
  for (const auto& t : trees)
    if (!std::regex_match(t, valid)) return "skipped";
  auto hit = [&](const char* key) {
    for (const auto& p : rs.at(key).get<std::vector<std::string>>())
      for (const auto& t : trees)
        if (oracle::mesh_prefix(t, p)) return true;
    return false;
  };
  if (!hit("included_prefixes")) return "no_match";
  if (hit("excluded_prefixes")) return "excluded_by_rule";
  if (!rs.at("min_year").is_null() && (rec.at("year").is_null() || rec.at("year").get<int>() < rs.at("min_year").get<int>()))
    return "excluded_by_year";
  return "included";
}

Outcome mesh_filter() {
  const auto lines = detail::split_lines(detail::read_file(std::string(BPT_FIXTURES) + "/mesh_records.jsonl"));
  std::size_t records = 0, disagreements = 0;
  for (std::string name : {"sP", "fP"}) {
    const auto path = std::string(BPT_RULESETS) + "/" + name + ".json";
    const auto rs_json = nlohmann::json::parse(detail::read_file(path));
    const auto rs = mesh::load_ruleset(path);
    for (const auto& line : lines) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      const auto label = j.at("expected_" + name).get<std::string>();
      const auto rule = stated_rule(j, rs_json);
      std::string lib;
      try {
        lib = std::string(to_string(mesh::classify(mesh::record_from_json(j), rs)));
      } catch (const Error&) {
        lib = "skipped";
      }
      ++records;
      if (label != rule || label != lib) {
        ++disagreements;
        std::fprintf(stderr, "  %s/%s: label %s, rule %s, library %s\n", name.c_str(),
                     j.at("article_id").get<std::string>().c_str(), label.c_str(), rule.c_str(), lib.c_str());
      }
    }
  }
  return {records == 40 && disagreements == 0,
          std::to_string(records / 2) + " records x 2 rulesets, " + std::to_string(disagreements) + " disagreements"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"masking statistics", masking_statistics},
      {"NSP balance", nsp_balance},
      {"SimPT balance", simpt_balance},
      {"negative pair diversity", diversity},
      {"amplified vocabulary", ampv_effect},
      {"WordPiece golden", wordpiece_golden},
      {"BPE oracle equivalence", bpe_oracle},
      {"duplicate factor", dupe_factor},
      {"determinism", determinism},
      {"round-trips", round_trips},
      {"MeSH filter", mesh_filter},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s criterion %zu (%s): %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}

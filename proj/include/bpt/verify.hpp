#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bpt/instances.hpp"
#include "bpt/serialize.hpp"
#include "bpt/vocab.hpp"

namespace bpt {

struct Tolerances {
  double mask_selection = 0.003;
  double mask_split = 0.005;
  double nsp_positive = 0.02;
  double small_origin_simpt = 0.05;
  double small_origin_conventional = 0.01;
  std::uint64_t min_instances = 1000;  // below this, statistical checks report insufficient data
};

enum class CheckStatus { pass, fail, insufficient_data, not_applicable };

inline std::string_view to_string(CheckStatus s) {
  switch (s) {
    case CheckStatus::pass: return "pass";
    case CheckStatus::fail: return "FAIL";
    case CheckStatus::insufficient_data: return "insufficient data";
    case CheckStatus::not_applicable: return "n/a";
  }
  return "?";
}

struct Check {
  std::string name;
  CheckStatus status = CheckStatus::not_applicable;
  double value = 0.0;
  double expected = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

struct VerificationReport {
  std::uint64_t instances = 0;
  std::uint64_t candidate_positions = 0;
  std::uint64_t masked_positions = 0;
  double mask_selection_rate = 0.0;
  double mask_frac = 0.0, random_frac = 0.0, unchanged_frac = 0.0;
  double nsp_positive_rate = 0.0;
  double small_origin_fraction = 0.0;
  std::uint64_t structural_violations = 0;
  std::vector<std::string> violation_examples;
  std::optional<std::uint64_t> distinct_negative_pairs;  // needs the provenance sidecar
  std::vector<Check> checks;

  bool pass() const {
    if (structural_violations > 0) return false;
    for (const auto& c : checks)
      if (c.status == CheckStatus::fail) return false;
    return true;
  }

  const Check* find(std::string_view name) const {
    for (const auto& c : checks)
      if (c.name == name) return &c;
    return nullptr;
  }

  nlohmann::json to_json() const {
    nlohmann::json checks_json = nlohmann::json::array();
    for (const auto& c : checks)
      checks_json.push_back({{"name", c.name},
                             {"status", to_string(c.status)},
                             {"value", c.value},
                             {"expected", c.expected},
                             {"tolerance", c.tolerance},
                             {"detail", c.detail}});
    nlohmann::json j = {{"instances", instances},
                        {"candidate_positions", candidate_positions},
                        {"masked_positions", masked_positions},
                        {"mask_selection_rate", mask_selection_rate},
                        {"mask_split", {{"mask", mask_frac}, {"random", random_frac}, {"unchanged", unchanged_frac}}},
                        {"nsp_positive_rate", nsp_positive_rate},
                        {"small_origin_fraction", small_origin_fraction},
                        {"structural_violations", structural_violations},
                        {"violation_examples", violation_examples},
                        {"checks", checks_json},
                        {"pass", pass()}};
    j["distinct_negative_pairs"] = distinct_negative_pairs ? nlohmann::json(*distinct_negative_pairs) : nlohmann::json();
    return j;
  }

  std::string to_text() const {
    std::string out;
    char line[256];
    std::snprintf(line, sizeof line, "%-22s %-18s %10s %10s %8s\n", "check", "status", "value", "expected", "tol");
    out += line;
    for (const auto& c : checks) {
      std::snprintf(line, sizeof line, "%-22s %-18s %10.5f %10.5f %8.4f  %s\n", c.name.c_str(),
                    std::string(to_string(c.status)).c_str(), c.value, c.expected, c.tolerance, c.detail.c_str());
      out += line;
    }
    std::snprintf(line, sizeof line, "%-22s %-18s %10llu\n", "structural", structural_violations ? "FAIL" : "pass",
                  static_cast<unsigned long long>(structural_violations));
    out += line;
    out += std::string("overall: ") + (pass() ? "PASS" : "FAIL") + "\n";
    return out;
  }
};

// Scans an instance file and checks its masking, NSP and origin statistics
// against the configured targets. Expected values come from the manifest
// sidecar when present (masked_lm_prob, mode, corpus byte sizes).
inline VerificationReport verify_file(const std::filesystem::path& path, const Vocabulary* vocab,
                                      const Tolerances& tol = {}) {
  std::optional<nlohmann::json> manifest;
  std::error_code ec;
  if (std::filesystem::exists(manifest_path(path), ec)) manifest = read_manifest(path);

  InstanceReader reader(path, ReadOptions{vocab, manifest.has_value()});
  const auto& header = reader.header();

  double masked_lm_prob = 0.15;
  std::size_t max_predictions = header.max_seq_length;
  std::string mode;
  std::optional<double> byte_small_fraction;
  if (manifest) {
    const auto& cfg = manifest->contains("config") ? (*manifest)["config"] : *manifest;
    masked_lm_prob = cfg.value("masked_lm_prob", masked_lm_prob);
    max_predictions = manifest->value("max_predictions_per_seq", max_predictions);
    mode = cfg.value("mode", std::string{});
    if (manifest->contains("report")) {
      const auto& r = (*manifest)["report"];
      const double sb = r.value("small_bytes", 0.0), lb = r.value("large_bytes", 0.0);
      if (sb + lb > 0) byte_small_fraction = sb / (sb + lb);
    }
  }
  InstanceConfig cap_cfg;
  cap_cfg.masked_lm_prob = masked_lm_prob;
  cap_cfg.max_predictions_per_seq = static_cast<std::size_t>(-1);

  VerificationReport rep;
  std::uint64_t is_next = 0, mask_n = 0, random_n = 0, unchanged_n = 0, small_tok = 0, large_tok = 0;
  std::uint64_t cap_binding = 0;
  std::optional<TokenId> cls, sep, mask;
  if (vocab) cls = vocab->cls_id(), sep = vocab->sep_id(), mask = vocab->mask_id();

  while (auto inst = reader.next()) {
    const std::uint64_t idx = rep.instances++;
    if (auto why = check_instance(*inst, header.max_seq_length, max_predictions, nullptr, cls, sep); !why.empty()) {
      ++rep.structural_violations;
      if (rep.violation_examples.size() < 10) rep.violation_examples.push_back("instance " + std::to_string(idx) + ": " + why);
      continue;
    }
    const std::size_t candidates = inst->token_ids.size() - 3;
    rep.candidate_positions += candidates;
    rep.masked_positions += inst->masked_positions.size();
    if (mask_count(candidates, cap_cfg) > inst->masked_positions.size()) ++cap_binding;
    is_next += inst->is_next;
    small_tok += inst->origin_small_tokens;
    large_tok += inst->origin_large_tokens;
    for (std::size_t k = 0; k < inst->masked_positions.size(); ++k) {
      const TokenId now = inst->token_ids[inst->masked_positions[k]];
      if (mask && now == *mask)
        ++mask_n;
      else if (now == inst->masked_labels[k])
        ++unchanged_n;
      else
        ++random_n;
    }
  }

  const auto ratio = [](std::uint64_t a, std::uint64_t b) { return b ? double(a) / double(b) : 0.0; };
  rep.mask_selection_rate = ratio(rep.masked_positions, rep.candidate_positions);
  rep.mask_frac = ratio(mask_n, rep.masked_positions);
  rep.random_frac = ratio(random_n, rep.masked_positions);
  rep.unchanged_frac = ratio(unchanged_n, rep.masked_positions);
  const std::uint64_t valid = rep.instances - rep.structural_violations;
  rep.nsp_positive_rate = ratio(is_next, valid);
  rep.small_origin_fraction = ratio(small_tok, small_tok + large_tok);

  if (auto pairs = read_pairs(path); pairs && pairs->size() == rep.instances) {
    InstanceReader again(path, ReadOptions{nullptr, false});
    std::set<std::pair<std::string, std::string>> distinct;
    for (std::size_t i = 0; auto inst = again.next(); ++i)
      if (!inst->is_next) distinct.insert(std::minmax((*pairs)[i].first, (*pairs)[i].second));
    rep.distinct_negative_pairs = distinct.size();
  }

  const bool enough = valid >= tol.min_instances;
  auto stat_check = [&](std::string name, double value, double expected, double tolerance, std::string detail = {}) {
    Check c{std::move(name), CheckStatus::pass, value, expected, tolerance, std::move(detail)};
    if (!enough)
      c.status = CheckStatus::insufficient_data;
    else if (std::fabs(value - expected) > tolerance)
      c.status = CheckStatus::fail;
    rep.checks.push_back(std::move(c));
  };

  if (cap_binding > 0) {
    rep.checks.push_back({"mask_selection_rate", CheckStatus::not_applicable, rep.mask_selection_rate, masked_lm_prob,
                          tol.mask_selection,
                          "prediction cap binding in " + std::to_string(cap_binding) + " instances"});
  } else {
    stat_check("mask_selection_rate", rep.mask_selection_rate, masked_lm_prob, tol.mask_selection);
  }
  if (mask) {
    stat_check("mask_fraction", rep.mask_frac, 0.8, tol.mask_split);
    stat_check("random_fraction", rep.random_frac, 0.1, tol.mask_split);
    stat_check("unchanged_fraction", rep.unchanged_frac, 0.1, tol.mask_split);
  } else {
    rep.checks.push_back({"mask_split", CheckStatus::not_applicable, 0, 0, tol.mask_split, "no vocabulary supplied"});
  }
  stat_check("nsp_positive_rate", rep.nsp_positive_rate, 0.5, tol.nsp_positive);
  if (mode == "simpt") {
    stat_check("small_origin_fraction", rep.small_origin_fraction, 0.5, tol.small_origin_simpt, "simpt balance");
  } else if (mode == "conventional" && byte_small_fraction) {
    stat_check("small_origin_fraction", rep.small_origin_fraction, *byte_small_fraction, tol.small_origin_conventional,
               "corpus byte ratio");
  } else {
    rep.checks.push_back({"small_origin_fraction", CheckStatus::not_applicable, rep.small_origin_fraction, 0, 0,
                          "generation mode unknown"});
  }
  return rep;
}

}  // namespace bpt

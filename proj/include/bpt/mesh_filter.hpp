#pragma once

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "bpt/corpus.hpp"
#include "bpt/error.hpp"

namespace bpt::mesh {

struct ArticleRecord {
  std::string article_id;
  std::vector<std::string> tree_numbers;
  std::optional<int> year;
  std::string text;
};

struct Ruleset {
  std::string name;
  std::vector<std::string> included_prefixes;
  std::vector<std::string> excluded_prefixes;
  std::optional<int> min_year;
};

enum class Verdict { included, excluded_by_rule, excluded_by_year, no_match, skipped };

inline std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::included: return "included";
    case Verdict::excluded_by_rule: return "excluded_by_rule";
    case Verdict::excluded_by_year: return "excluded_by_year";
    case Verdict::no_match: return "no_match";
    case Verdict::skipped: return "skipped";
  }
  return "?";
}

struct SelectionReport {
  std::uint64_t total = 0;
  std::uint64_t included = 0;
  std::uint64_t excluded_by_rule = 0;
  std::uint64_t excluded_by_year = 0;
  std::uint64_t no_match = 0;
  std::uint64_t skipped = 0;

  void count(Verdict v) {
    ++total;
    switch (v) {
      case Verdict::included: ++included; break;
      case Verdict::excluded_by_rule: ++excluded_by_rule; break;
      case Verdict::excluded_by_year: ++excluded_by_year; break;
      case Verdict::no_match: ++no_match; break;
      case Verdict::skipped: ++skipped; break;
    }
  }

  nlohmann::json to_json() const {
    return {{"total", total},
            {"included", included},
            {"excluded_by_rule", excluded_by_rule},
            {"excluded_by_year", excluded_by_year},
            {"no_match", no_match},
            {"skipped", skipped}};
  }
};

// One uppercase letter, optionally followed by digits, then any number of
// ".<digits>" groups: "C", "C04", "C04.557.337". A letter must be followed
// by digits before the first dot.
inline bool valid_tree_number(std::string_view s) {
  if (s.empty() || !std::isupper(static_cast<unsigned char>(s[0]))) return false;
  if (s.size() == 1) return true;
  bool need_digit = true;
  for (std::size_t i = 1; i < s.size(); ++i) {
    const char c = s[i];
    if (std::isdigit(static_cast<unsigned char>(c))) {
      need_digit = false;
    } else if (c == '.' && !need_digit) {
      need_digit = true;
    } else {
      return false;
    }
  }
  return !need_digit;
}

// Component-wise hierarchy match: "C22.1" is under "C22" and "C", not "C2".
inline bool tree_matches(std::string_view tree_number, std::string_view prefix) {
  if (prefix.size() == 1) return !tree_number.empty() && tree_number[0] == prefix[0];
  if (!tree_number.starts_with(prefix)) return false;
  return tree_number.size() == prefix.size() || tree_number[prefix.size()] == '.';
}

inline void validate(const Ruleset& rs) {
  for (const auto* list : {&rs.included_prefixes, &rs.excluded_prefixes})
    for (const auto& p : *list)
      if (!valid_tree_number(p)) throw usage_error("invalid ruleset: malformed prefix '" + p + "'");
  for (const auto& inc : rs.included_prefixes)
    for (const auto& exc : rs.excluded_prefixes)
      if (inc == exc) throw usage_error("invalid ruleset: prefix '" + inc + "' is both included and excluded");
}

inline Verdict classify(const ArticleRecord& rec, const Ruleset& rs) {
  for (const auto& t : rec.tree_numbers)
    if (!valid_tree_number(t)) return Verdict::skipped;
  auto any_match = [&](const std::vector<std::string>& prefixes) {
    for (const auto& t : rec.tree_numbers)
      for (const auto& p : prefixes)
        if (tree_matches(t, p)) return true;
    return false;
  };
  if (!any_match(rs.included_prefixes)) return Verdict::no_match;
  if (any_match(rs.excluded_prefixes)) return Verdict::excluded_by_rule;
  if (rs.min_year && (!rec.year || *rec.year < *rs.min_year)) return Verdict::excluded_by_year;
  return Verdict::included;
}

// Streams records through the ruleset. `on_record` sees every record with its
// verdict, in input order; malformed records are reported on `warn`.
inline SelectionReport select_articles(const std::vector<ArticleRecord>& records, const Ruleset& rs,
                                       const std::function<void(const ArticleRecord&, Verdict)>& on_record,
                                       std::ostream* warn = &std::cerr) {
  validate(rs);
  SelectionReport report;
  for (const auto& rec : records) {
    const Verdict v = classify(rec, rs);
    if (v == Verdict::skipped && warn)
      *warn << "warning: record '" << rec.article_id << "' has a malformed tree number; skipped\n";
    report.count(v);
    if (on_record) on_record(rec, v);
  }
  return report;
}

inline std::vector<ArticleRecord> select_included(const std::vector<ArticleRecord>& records, const Ruleset& rs,
                                                  SelectionReport* report = nullptr, std::ostream* warn = &std::cerr) {
  std::vector<ArticleRecord> kept;
  auto r = select_articles(
      records, rs, [&](const ArticleRecord& rec, Verdict v) { if (v == Verdict::included) kept.push_back(rec); }, warn);
  if (report) *report = r;
  return kept;
}

// --- JSON I/O ---------------------------------------------------------------

inline Ruleset ruleset_from_json(const nlohmann::json& j) {
  try {
    Ruleset rs;
    rs.name = j.at("name").get<std::string>();
    rs.included_prefixes = j.at("included_prefixes").get<std::vector<std::string>>();
    rs.excluded_prefixes = j.value("excluded_prefixes", std::vector<std::string>{});
    if (j.contains("min_year") && !j.at("min_year").is_null()) rs.min_year = j.at("min_year").get<int>();
    validate(rs);
    return rs;
  } catch (const nlohmann::json::exception& e) {
    throw usage_error(std::string("invalid ruleset: ") + e.what());
  }
}

inline Ruleset load_ruleset(const std::filesystem::path& path) {
  const std::string text = detail::read_file(path);
  auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw usage_error("invalid ruleset: " + path.string() + " is not valid JSON");
  return ruleset_from_json(j);
}

inline ArticleRecord record_from_json(const nlohmann::json& j) {
  ArticleRecord r;
  r.article_id = j.at("article_id").get<std::string>();
  r.tree_numbers = j.value("tree_numbers", std::vector<std::string>{});
  if (j.contains("year") && !j.at("year").is_null()) r.year = j.at("year").get<int>();
  r.text = j.value("text", std::string{});
  return r;
}

inline std::vector<ArticleRecord> parse_records(std::string_view jsonl, std::string_view source = "<memory>") {
  std::vector<ArticleRecord> out;
  std::size_t pos = 0, line_no = 0;
  while (pos < jsonl.size()) {
    std::size_t eol = jsonl.find('\n', pos);
    if (eol == std::string_view::npos) eol = jsonl.size();
    ++line_no;
    const auto line = detail::trim(jsonl.substr(pos, eol - pos));
    pos = eol + 1;
    if (line.empty()) continue;
    try {
      out.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw data_error(std::string(source) + ":" + std::to_string(line_no) + ": bad record: " + e.what());
    }
  }
  return out;
}

inline std::vector<ArticleRecord> load_records(const std::filesystem::path& path) {
  return parse_records(detail::read_file(path), path.string());
}

// Renders abstracts as a corpus file: sentence-per-line, blank line between.
inline std::string records_to_corpus_text(const std::vector<ArticleRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    std::string body;
    std::size_t pos = 0;
    while (pos <= r.text.size()) {
      std::size_t eol = r.text.find('\n', pos);
      if (eol == std::string::npos) eol = r.text.size();
      const auto line = detail::trim(std::string_view(r.text).substr(pos, eol - pos));
      if (!line.empty()) {
        body.append(line);
        body += '\n';
      }
      pos = eol + 1;
    }
    if (body.empty()) continue;
    if (!out.empty()) out += '\n';
    out += body;
  }
  return out;
}

}  // namespace bpt::mesh

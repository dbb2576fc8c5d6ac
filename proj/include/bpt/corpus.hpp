#pragma once

#include <fnmatch.h>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "bpt/error.hpp"
#include "bpt/utf8.hpp"

namespace bpt {

enum class Origin : std::uint8_t { small, large };

inline std::string_view to_string(Origin o) { return o == Origin::small ? "small" : "large"; }

struct Document {
  std::string doc_id;
  Origin origin = Origin::large;
  std::vector<std::string> sentences;
  std::uint64_t byte_size = 0;  // sentence bytes plus one newline per sentence

  bool operator==(const Document&) const = default;
};

struct Corpus {
  std::string label;
  Origin origin = Origin::large;
  std::vector<Document> documents;
  std::uint64_t total_bytes = 0;

  bool empty() const { return documents.empty(); }
};

struct Shard {
  std::size_t shard_id = 0;
  Origin origin = Origin::large;
  std::vector<Document> documents;
  std::uint64_t byte_size = 0;
  std::uint64_t target_bytes = 0;
};

inline constexpr std::uint64_t kDefaultShardBytes = 10ull * 1000 * 1000;

namespace detail {

inline bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v'; }

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) throw usage_error("no such file: " + path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw io_error("read failed: " + path.string());
  return bytes;
}

}  // namespace detail

inline Document make_document(std::string doc_id, Origin origin, std::vector<std::string> sentences) {
  Document d{std::move(doc_id), origin, std::move(sentences), 0};
  for (const auto& s : d.sentences) d.byte_size += s.size() + 1;
  return d;
}

inline void append_document(Corpus& corpus, Document doc) {
  corpus.total_bytes += doc.byte_size;
  corpus.documents.push_back(std::move(doc));
}

// Parses sentence-per-line text into documents, continuing ordinals after
// whatever the corpus already holds. `source` only labels error messages.
inline void parse_corpus_text(std::string_view text, Corpus& corpus, std::string_view source = "<memory>") {
  if (auto bad = utf8::first_invalid(text))
    throw data_error("invalid UTF-8 in " + std::string(source) + " at byte offset " + std::to_string(*bad));

  std::vector<std::string> current;
  auto flush = [&] {
    if (current.empty()) return;
    std::string id = corpus.label + "#" + std::to_string(corpus.documents.size());
    append_document(corpus, make_document(std::move(id), corpus.origin, std::move(current)));
    current.clear();
  };
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    const std::string_view line = detail::trim(text.substr(pos, eol - pos));
    if (line.empty())
      flush();
    else
      current.emplace_back(line);
    pos = eol + 1;
  }
  flush();
}

inline Corpus parse_corpus(std::string_view text, std::string label, Origin origin) {
  Corpus corpus{std::move(label), origin, {}, 0};
  parse_corpus_text(text, corpus);
  if (corpus.empty()) throw data_error("empty corpus");
  return corpus;
}

// Files of `dir` matching `pattern`, in lexicographic filename order.
inline std::vector<std::filesystem::path> list_corpus_files(const std::filesystem::path& dir, const std::string& pattern) {
  std::vector<std::filesystem::path> files;
  std::error_code ec;
  for (const auto& entry : std::filesystem::directory_iterator(dir, ec)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (fnmatch(pattern.c_str(), name.c_str(), 0) == 0) files.push_back(entry.path());
  }
  if (ec) throw io_error("cannot list directory " + dir.string() + ": " + ec.message());
  std::sort(files.begin(), files.end(),
            [](const auto& a, const auto& b) { return a.filename().string() < b.filename().string(); });
  return files;
}

// Loads a single file, or every file of a directory matching `pattern`.
// Document ordinals run continuously across files.
inline Corpus load_corpus(const std::filesystem::path& path, std::string label, Origin origin,
                          const std::string& pattern = "*") {
  Corpus corpus{std::move(label), origin, {}, 0};
  std::error_code ec;
  if (std::filesystem::is_directory(path, ec)) {
    for (const auto& file : list_corpus_files(path, pattern))
      parse_corpus_text(detail::read_file(file), corpus, file.string());
  } else {
    parse_corpus_text(detail::read_file(path), corpus, path.string());
  }
  if (corpus.empty()) throw data_error("empty corpus: " + path.string());
  return corpus;
}

inline std::string format_document(const Document& doc) {
  std::string out;
  out.reserve(doc.byte_size);
  for (const auto& s : doc.sentences) {
    out += s;
    out += '\n';
  }
  return out;
}

// Greedy in-order packing: a shard closes as soon as it reaches the target.
inline std::vector<Shard> split_corpus(const Corpus& corpus, std::uint64_t each_file_size) {
  if (each_file_size == 0) throw usage_error("split_corpus: each_file_size must be positive");
  if (corpus.empty()) throw usage_error("split_corpus: corpus '" + corpus.label + "' is empty");
  std::vector<Shard> shards;
  Shard current{0, corpus.origin, {}, 0, each_file_size};
  for (const auto& doc : corpus.documents) {
    current.documents.push_back(doc);
    current.byte_size += doc.byte_size;
    if (current.byte_size >= each_file_size) {
      shards.push_back(std::move(current));
      current = Shard{shards.size(), corpus.origin, {}, 0, each_file_size};
    }
  }
  if (!current.documents.empty()) shards.push_back(std::move(current));
  return shards;
}

// Contiguous split into `n_splits` groups of near-equal document count
// (clamped to the number of documents so no group is empty).
inline std::vector<std::vector<Document>> split_into_groups(const std::vector<Document>& docs, std::size_t n_splits) {
  if (n_splits == 0) throw usage_error("n_splits must be positive");
  const std::size_t n = std::min(n_splits, docs.size());
  std::vector<std::vector<Document>> groups(n);
  for (std::size_t g = 0; g < n; ++g) {
    const std::size_t begin = g * docs.size() / n;
    const std::size_t end = (g + 1) * docs.size() / n;
    groups[g].assign(docs.begin() + static_cast<std::ptrdiff_t>(begin), docs.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return groups;
}

// Writes shards as "<prefix>_<id>.txt" in `dir`; returns the written paths.
inline std::vector<std::filesystem::path> write_shards(const std::vector<Shard>& shards, const std::filesystem::path& dir,
                                                       const std::string& prefix) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw io_error("cannot create " + dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> paths;
  for (const auto& shard : shards) {
    char name[32];
    std::snprintf(name, sizeof name, "_%05zu.txt", shard.shard_id);
    auto path = dir / (prefix + name);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write " + path.string());
    for (std::size_t i = 0; i < shard.documents.size(); ++i) {
      if (i > 0) out << '\n';
      out << format_document(shard.documents[i]);
    }
    if (!out) throw io_error("write failed: " + path.string());
    paths.push_back(std::move(path));
  }
  return paths;
}

}  // namespace bpt

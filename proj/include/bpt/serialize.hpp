#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "bpt/error.hpp"
#include "bpt/hash.hpp"
#include "bpt/instances.hpp"
#include "bpt/vocab.hpp"

namespace bpt {

// Binary instance file, all integers little-endian:
//
//   header  "BPTI" | u16 version | u16 max_seq_length | u64 vocab_hash | u64 instance_count
//   record  u16 n_tokens | n_tokens x u32 token id | n_tokens x u8 segment id
//           | u16 n_masked | n_masked x (u16 position, u32 label id)
//           | u8 is_next | u32 origin_small_tokens | u32 origin_large_tokens
//
// Sidecars: "<file>.manifest.json" (counts, config echo, checksum of the whole
// file) and "<file>.pairs.tsv" (source document ids of each record).
inline constexpr char kInstanceMagic[4] = {'B', 'P', 'T', 'I'};
inline constexpr std::uint16_t kInstanceVersion = 1;
inline constexpr std::size_t kHeaderBytes = 24;

struct InstanceFileHeader {
  std::uint16_t version = kInstanceVersion;
  std::uint16_t max_seq_length = 0;
  std::uint64_t vocab_hash = 0;
  std::uint64_t instance_count = 0;
};

inline std::filesystem::path manifest_path(const std::filesystem::path& p) { return p.string() + ".manifest.json"; }
inline std::filesystem::path pairs_path(const std::filesystem::path& p) { return p.string() + ".pairs.tsv"; }

enum class InstanceFileErrc {
  bad_magic,
  bad_version,
  vocab_hash_mismatch,
  checksum_mismatch,
  unexpected_end,
  trailing_data,
  missing_manifest,
};

inline std::string_view message(InstanceFileErrc e) {
  switch (e) {
    case InstanceFileErrc::bad_magic: return "bad magic";
    case InstanceFileErrc::bad_version: return "unsupported version";
    case InstanceFileErrc::vocab_hash_mismatch: return "vocabulary hash mismatch";
    case InstanceFileErrc::checksum_mismatch: return "checksum mismatch";
    case InstanceFileErrc::unexpected_end: return "unexpected end of records";
    case InstanceFileErrc::trailing_data: return "trailing data after last record";
    case InstanceFileErrc::missing_manifest: return "missing manifest";
  }
  return "?";
}

class InstanceFileError : public Error {
 public:
  InstanceFileError(InstanceFileErrc code, const std::string& detail)
      : Error(ErrorKind::data, std::string(message(code)) + (detail.empty() ? "" : ": " + detail)), code_(code) {}
  InstanceFileErrc code() const noexcept { return code_; }

 private:
  InstanceFileErrc code_;
};

namespace detail {

template <typename T>
void put_le(std::string& buf, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) buf += static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff);
}

template <typename T>
T get_le(const char* p) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= std::uint64_t{static_cast<unsigned char>(p[i])} << (8 * i);
  return static_cast<T>(v);
}

inline std::string encode_header(const InstanceFileHeader& h) {
  std::string b(kInstanceMagic, 4);
  put_le<std::uint16_t>(b, h.version);
  put_le<std::uint16_t>(b, h.max_seq_length);
  put_le<std::uint64_t>(b, h.vocab_hash);
  put_le<std::uint64_t>(b, h.instance_count);
  return b;
}

inline void encode_record(std::string& b, const PretrainInstance& inst) {
  put_le<std::uint16_t>(b, static_cast<std::uint16_t>(inst.token_ids.size()));
  for (auto id : inst.token_ids) put_le<std::uint32_t>(b, id);
  for (auto s : inst.segment_ids) put_le<std::uint8_t>(b, s);
  put_le<std::uint16_t>(b, static_cast<std::uint16_t>(inst.masked_positions.size()));
  for (std::size_t k = 0; k < inst.masked_positions.size(); ++k) {
    put_le<std::uint16_t>(b, inst.masked_positions[k]);
    put_le<std::uint32_t>(b, inst.masked_labels[k]);
  }
  put_le<std::uint8_t>(b, inst.is_next ? 1 : 0);
  put_le<std::uint32_t>(b, inst.origin_small_tokens);
  put_le<std::uint32_t>(b, inst.origin_large_tokens);
}

inline std::uint64_t file_checksum(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path.string());
  Fnv1a64 h;
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return h.digest();
}

inline std::string checksum_string(std::uint64_t v) { return "fnv1a64:" + hex64(v); }

}  // namespace detail

struct WriteOptions {
  std::size_t max_seq_length = 128;
  std::size_t max_predictions_per_seq = 20;
  nlohmann::json manifest_extra = nlohmann::json::object();  // merged into the manifest (config echo, report)
};

// Writes the binary file plus its manifest and provenance sidecars; returns
// the manifest. Instances are validated first; a violation aborts with its index.
inline nlohmann::json write_instances(const std::vector<PretrainInstance>& instances, const std::filesystem::path& path,
                                      const Vocabulary& vocab, const WriteOptions& opts) {
  for (std::size_t i = 0; i < instances.size(); ++i) {
    auto why = check_instance(instances[i], opts.max_seq_length, opts.max_predictions_per_seq, &vocab);
    if (!why.empty()) throw data_error("instance " + std::to_string(i) + " violates invariants: " + why);
  }
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write " + path.string());
    InstanceFileHeader h{kInstanceVersion, static_cast<std::uint16_t>(opts.max_seq_length), vocab.hash(),
                         instances.size()};
    const auto header = detail::encode_header(h);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    std::string buf;
    for (const auto& inst : instances) {
      detail::encode_record(buf, inst);
      if (buf.size() > (1 << 20)) {
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
        buf.clear();
      }
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw io_error("write failed: " + path.string());
  }
  {
    std::ofstream pairs(pairs_path(path), std::ios::binary);
    if (!pairs) throw io_error("cannot write " + pairs_path(path).string());
    for (const auto& inst : instances) pairs << inst.doc_a << '\t' << inst.doc_b << '\n';
  }

  nlohmann::json manifest = {{"format", "BPTI"},
                             {"version", kInstanceVersion},
                             {"file", path.filename().string()},
                             {"file_bytes", std::filesystem::file_size(path)},
                             {"checksum", detail::checksum_string(detail::file_checksum(path))},
                             {"vocab_hash", hex64(vocab.hash())},
                             {"instance_count", instances.size()},
                             {"max_seq_length", opts.max_seq_length},
                             {"max_predictions_per_seq", opts.max_predictions_per_seq}};
  if (opts.manifest_extra.is_object()) manifest.update(opts.manifest_extra);
  detail::write_text(manifest_path(path), manifest.dump(2) + "\n");
  return manifest;
}

// Debug form: one JSON object per line, with token strings and provenance.
inline void write_instances_jsonl(const std::vector<PretrainInstance>& instances, const std::filesystem::path& path,
                                  const Vocabulary& vocab) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write " + path.string());
  for (const auto& inst : instances) {
    std::vector<std::string> tokens;
    for (auto id : inst.token_ids) tokens.push_back(id < vocab.size() ? vocab.token(id) : std::string(kUnk));
    nlohmann::json j = {{"tokens", tokens},
                        {"token_ids", inst.token_ids},
                        {"segment_ids", inst.segment_ids},
                        {"masked_positions", inst.masked_positions},
                        {"masked_labels", inst.masked_labels},
                        {"is_next", inst.is_next},
                        {"origin_small_tokens", inst.origin_small_tokens},
                        {"origin_large_tokens", inst.origin_large_tokens},
                        {"doc_a", inst.doc_a},
                        {"doc_b", inst.doc_b}};
    out << j.dump() << '\n';
  }
  if (!out) throw io_error("write failed: " + path.string());
}

inline nlohmann::json read_manifest(const std::filesystem::path& instance_path) {
  const auto mp = manifest_path(instance_path);
  std::error_code ec;
  if (!std::filesystem::exists(mp, ec)) throw InstanceFileError(InstanceFileErrc::missing_manifest, mp.string());
  auto j = nlohmann::json::parse(detail::read_file(mp), nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw data_error("manifest is not a JSON object: " + mp.string());
  return j;
}

struct ReadOptions {
  const Vocabulary* expected_vocab = nullptr;  // checked against the header hash when set
  bool verify_checksum = true;                 // requires the manifest sidecar
};

// Validates the whole file on construction (header, record framing, checksum),
// then yields records lazily in stored order.
class InstanceReader {
 public:
  explicit InstanceReader(const std::filesystem::path& path, ReadOptions opts = {}) : path_(path) {
    std::error_code ec;
    if (!std::filesystem::exists(path, ec)) throw usage_error("no such file: " + path.string());
    in_.open(path, std::ios::binary);
    if (!in_) throw io_error("cannot open " + path.string());

    char raw[kHeaderBytes];
    if (!read_exact(raw, kHeaderBytes)) {
      if (in_.gcount() >= 4 && std::memcmp(raw, kInstanceMagic, 4) != 0)
        throw InstanceFileError(InstanceFileErrc::bad_magic, path.string());
      throw InstanceFileError(InstanceFileErrc::unexpected_end, "file shorter than header");
    }
    if (std::memcmp(raw, kInstanceMagic, 4) != 0) throw InstanceFileError(InstanceFileErrc::bad_magic, path.string());
    header_.version = detail::get_le<std::uint16_t>(raw + 4);
    header_.max_seq_length = detail::get_le<std::uint16_t>(raw + 6);
    header_.vocab_hash = detail::get_le<std::uint64_t>(raw + 8);
    header_.instance_count = detail::get_le<std::uint64_t>(raw + 16);
    if (header_.version != kInstanceVersion)
      throw InstanceFileError(InstanceFileErrc::bad_version, "found " + std::to_string(header_.version));
    if (opts.expected_vocab && opts.expected_vocab->hash() != header_.vocab_hash)
      throw InstanceFileError(InstanceFileErrc::vocab_hash_mismatch,
                              "file " + hex64(header_.vocab_hash) + ", vocabulary " + hex64(opts.expected_vocab->hash()));

    // Same length as written: corruption in place, so the checksum names it.
    // A length change is reported by the framing scan instead.
    std::optional<nlohmann::json> manifest;
    if (opts.verify_checksum) {
      manifest = read_manifest(path);
      if (manifest->value("file_bytes", std::uint64_t{0}) == std::filesystem::file_size(path, ec)) check_checksum(*manifest);
    }
    for (std::uint64_t i = 0; i < header_.instance_count; ++i)
      if (!next_record(nullptr))
        throw InstanceFileError(InstanceFileErrc::unexpected_end, "record " + std::to_string(i) + " of " +
                                                                      std::to_string(header_.instance_count));
    if (in_.peek() != std::char_traits<char>::eof()) throw InstanceFileError(InstanceFileErrc::trailing_data, "");

    if (manifest) check_checksum(*manifest);
    in_.clear();
    in_.seekg(static_cast<std::streamoff>(kHeaderBytes));
  }

  const InstanceFileHeader& header() const { return header_; }

  std::optional<PretrainInstance> next() {
    if (yielded_ >= header_.instance_count) return std::nullopt;
    PretrainInstance inst;
    if (!next_record(&inst)) throw InstanceFileError(InstanceFileErrc::unexpected_end, path_.string());
    ++yielded_;
    return inst;
  }

 private:
  void check_checksum(const nlohmann::json& manifest) const {
    const auto expected = manifest.value("checksum", std::string{});
    const auto actual = detail::checksum_string(detail::file_checksum(path_));
    if (expected != actual) throw InstanceFileError(InstanceFileErrc::checksum_mismatch, "manifest " + expected + ", file " + actual);
  }

  bool read_exact(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    return static_cast<std::size_t>(in_.gcount()) == n;
  }

  // Reads one record; with out == nullptr only checks framing.
  bool next_record(PretrainInstance* out) {
    char b2[2], b4[4];
    if (!read_exact(b2, 2)) return false;
    const auto n_tokens = detail::get_le<std::uint16_t>(b2);
    buf_.resize(std::size_t{n_tokens} * 5);
    if (!read_exact(buf_.data(), buf_.size())) return false;
    if (out) {
      out->token_ids.resize(n_tokens);
      out->segment_ids.resize(n_tokens);
      for (std::size_t i = 0; i < n_tokens; ++i) {
        out->token_ids[i] = detail::get_le<std::uint32_t>(buf_.data() + 4 * i);
        out->segment_ids[i] = static_cast<std::uint8_t>(buf_[4 * std::size_t{n_tokens} + i]);
      }
    }
    if (!read_exact(b2, 2)) return false;
    const auto n_masked = detail::get_le<std::uint16_t>(b2);
    buf_.resize(std::size_t{n_masked} * 6);
    if (!read_exact(buf_.data(), buf_.size())) return false;
    if (out) {
      for (std::size_t k = 0; k < n_masked; ++k) {
        out->masked_positions.push_back(detail::get_le<std::uint16_t>(buf_.data() + 6 * k));
        out->masked_labels.push_back(detail::get_le<std::uint32_t>(buf_.data() + 6 * k + 2));
      }
    }
    char flag;
    if (!read_exact(&flag, 1)) return false;
    if (!read_exact(b4, 4)) return false;
    const auto small = detail::get_le<std::uint32_t>(b4);
    if (!read_exact(b4, 4)) return false;
    const auto large = detail::get_le<std::uint32_t>(b4);
    if (out) {
      out->is_next = flag != 0;
      out->origin_small_tokens = small;
      out->origin_large_tokens = large;
    }
    return true;
  }

  std::filesystem::path path_;
  std::ifstream in_;
  InstanceFileHeader header_;
  std::uint64_t yielded_ = 0;
  std::vector<char> buf_;
};

// Source document ids per record from the provenance sidecar, if present.
inline std::optional<std::vector<std::pair<std::string, std::string>>> read_pairs(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::exists(pairs_path(path), ec)) return std::nullopt;
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& line : detail::split_lines(detail::read_file(pairs_path(path)))) {
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw data_error("malformed provenance line in " + pairs_path(path).string());
    out.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  return out;
}

// Reads every record; provenance is attached when the sidecar matches.
inline std::vector<PretrainInstance> read_instances(const std::filesystem::path& path, ReadOptions opts = {}) {
  InstanceReader reader(path, opts);
  std::vector<PretrainInstance> out;
  out.reserve(reader.header().instance_count);
  while (auto inst = reader.next()) out.push_back(std::move(*inst));
  if (auto pairs = read_pairs(path); pairs && pairs->size() == out.size())
    for (std::size_t i = 0; i < out.size(); ++i) std::tie(out[i].doc_a, out[i].doc_b) = std::move((*pairs)[i]);
  return out;
}

}  // namespace bpt

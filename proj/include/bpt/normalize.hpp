#pragma once

#include <unicode/locid.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/uscript.h>
#include <unicode/unistr.h>

#include <string>
#include <string_view>
#include <vector>

#include "bpt/error.hpp"
#include "bpt/utf8.hpp"

namespace bpt {

namespace detail {

inline const icu::Normalizer2& nfkd() {
  static const icu::Normalizer2* n = [] {
    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* p = icu::Normalizer2::getNFKDInstance(status);
    if (U_FAILURE(status)) throw Error(ErrorKind::io, "ICU NFKD normalizer unavailable");
    return p;
  }();
  return *n;
}

inline const icu::Normalizer2& nfkc() {
  static const icu::Normalizer2* n = [] {
    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* p = icu::Normalizer2::getNFKCInstance(status);
    if (U_FAILURE(status)) throw Error(ErrorKind::io, "ICU NFKC normalizer unavailable");
    return p;
  }();
  return *n;
}

inline bool is_ascii_only(std::string_view s) {
  for (char c : s)
    if (static_cast<unsigned char>(c) >= 0x80) return false;
  return true;
}

inline bool is_whitespace(UChar32 c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || u_isUWhiteSpace(c); }

inline bool is_control(UChar32 c) {
  if (c == '\t' || c == '\n' || c == '\r') return false;
  const auto type = u_charType(c);
  return type == U_CONTROL_CHAR || type == U_FORMAT_CHAR || type == U_UNASSIGNED || type == U_PRIVATE_USE_CHAR ||
         c == 0xFFFD;
}

// ASCII fast path; identical result to the general path for ASCII input.
inline std::string normalize_ascii(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char ch : text) {
    auto c = static_cast<unsigned char>(ch);
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
      pending_space = !out.empty();
      continue;
    }
    if (c < 0x20 || c == 0x7F) continue;
    if (pending_space) out += ' ', pending_space = false;
    out += static_cast<char>(c >= 'A' && c <= 'Z' ? c + 32 : c);
  }
  return out;
}

}  // namespace detail

// Uncased normalization: compatibility decomposition, accent marks removed
// from Latin letters, lowercase, recomposed (NFKC), control characters
// dropped and whitespace runs collapsed to one space. Input must be UTF-8.
inline std::string normalize(std::string_view text) {
  if (detail::is_ascii_only(text)) return detail::normalize_ascii(text);

  UErrorCode status = U_ZERO_ERROR;
  const auto src = icu::UnicodeString::fromUTF8(icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
  icu::UnicodeString decomposed = detail::nfkd().normalize(src, status);
  if (U_FAILURE(status)) return detail::normalize_ascii(text);

  icu::UnicodeString stripped;
  UScriptCode base_script = USCRIPT_COMMON;
  for (int32_t i = 0; i < decomposed.length();) {
    const UChar32 c = decomposed.char32At(i);
    i += U16_LENGTH(c);
    if (u_charType(c) == U_NON_SPACING_MARK) {
      if (base_script == USCRIPT_LATIN) continue;
    } else {
      UErrorCode sc = U_ZERO_ERROR;
      base_script = uscript_getScript(c, &sc);
    }
    stripped.append(c);
  }
  stripped.toLower(icu::Locale::getRoot());
  icu::UnicodeString composed = detail::nfkc().normalize(stripped, status);
  if (U_FAILURE(status)) composed = stripped;

  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (int32_t i = 0; i < composed.length();) {
    const UChar32 c = composed.char32At(i);
    i += U16_LENGTH(c);
    if (detail::is_whitespace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (detail::is_control(c)) continue;
    if (pending_space) out += ' ', pending_space = false;
    utf8::append(out, static_cast<char32_t>(c));
  }
  return out;
}

inline bool is_punctuation(char32_t c) {
  if ((c >= 33 && c <= 47) || (c >= 58 && c <= 64) || (c >= 91 && c <= 96) || (c >= 123 && c <= 126)) return true;
  return u_ispunct(static_cast<UChar32>(c));
}

inline bool is_cjk(char32_t c) {
  return (c >= 0x4E00 && c <= 0x9FFF) || (c >= 0x3400 && c <= 0x4DBF) || (c >= 0x20000 && c <= 0x2A6DF) ||
         (c >= 0x2A700 && c <= 0x2B73F) || (c >= 0x2B740 && c <= 0x2B81F) || (c >= 0x2B820 && c <= 0x2CEAF) ||
         (c >= 0xF900 && c <= 0xFAFF) || (c >= 0x2F800 && c <= 0x2FA1F);
}

// Splits normalized text into words: whitespace separates, and every
// punctuation or CJK character becomes a word of its own.
inline std::vector<std::string> pretokenize(std::string_view normalized) {
  std::vector<std::string> words;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) words.push_back(std::move(current)), current.clear();
  };
  std::size_t pos = 0;
  while (pos < normalized.size()) {
    const std::size_t start = pos;
    const auto cp = utf8::decode(normalized, pos);
    if (!cp) {  // not expected after normalize(); skip the byte
      pos = start + 1;
      continue;
    }
    if (*cp == ' ' || detail::is_whitespace(static_cast<UChar32>(*cp))) {
      flush();
    } else if (is_punctuation(*cp) || is_cjk(*cp)) {
      flush();
      words.emplace_back(normalized.substr(start, pos - start));
    } else {
      current.append(normalized.substr(start, pos - start));
    }
  }
  flush();
  return words;
}

}  // namespace bpt

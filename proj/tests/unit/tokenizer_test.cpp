#include <gtest/gtest.h>

#include <map>
#include <random>

#include "bpt/bpe.hpp"
#include "bpt/tokenizer.hpp"

using namespace bpt;

namespace {

Vocabulary make_vocab(std::vector<std::string> extra) {
  std::vector<std::string> t = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};
  t.insert(t.end(), extra.begin(), extra.end());
  return Vocabulary(t);
}

std::vector<std::string> pieces(const WordPieceTokenizer& tok, std::string_view text) { return tok.tokenize(text).tokens; }

}  // namespace

TEST(WordPiece, AppendicitisFourPieces) {
  const auto v = make_vocab({"app", "##end", "##ici", "##tis", "a", "##p"});
  const WordPieceTokenizer tok(v);
  EXPECT_EQ(pieces(tok, "appendicitis"), (std::vector<std::string>{"app", "##end", "##ici", "##tis"}));
  const auto seq = tok.tokenize("appendicitis");
  for (std::size_t i = 0; i < seq.ids.size(); ++i) EXPECT_EQ(v.token(seq.ids[i]), seq.tokens[i]);
}

TEST(WordPiece, WholeWordAndUnknown) {
  const auto v = make_vocab({"stroke", "appendicitis", "s", "##t"});
  const WordPieceTokenizer tok(v);
  EXPECT_EQ(pieces(tok, "Stroke"), (std::vector<std::string>{"stroke"}));
  EXPECT_EQ(pieces(tok, "☃"), (std::vector<std::string>{"[UNK]"}));
  EXPECT_EQ(pieces(tok, "stx stroke"), (std::vector<std::string>{"[UNK]", "stroke"}));
  const auto rows = coverage_report(v, {"appendicitis", "stroke", "st"});
  EXPECT_TRUE(rows[0].in_vocab);
  EXPECT_TRUE(rows[1].in_vocab);
  EXPECT_FALSE(rows[2].in_vocab);
  EXPECT_EQ(rows[2].pieces, (std::vector<std::string>{"s", "##t"}));
}

TEST(WordPiece, MaxCharsPerWordCountsCodepoints) {
  const auto v = make_vocab({"ж", "##ж"});
  EXPECT_EQ(pieces(WordPieceTokenizer(v, 3), "жжж"), (std::vector<std::string>{"ж", "##ж", "##ж"}));
  EXPECT_EQ(pieces(WordPieceTokenizer(v, 2), "жжж"), (std::vector<std::string>{"[UNK]"}));
}

TEST(WordPiece, CoverageReportOfNonMember) {
  const auto v = make_vocab({"app", "##end", "##ici", "##tis"});
  const auto rows = coverage_report(v, {"appendicitis"});
  EXPECT_FALSE(rows[0].in_vocab);
  EXPECT_EQ(rows[0].pieces, (std::vector<std::string>{"app", "##end", "##ici", "##tis"}));
}

// Reconstruction, idempotence and the greedy property on a trained vocabulary.
TEST(WordPiece, PropertiesOnTrainedVocabulary) {
  std::mt19937_64 rng(9);
  WordCounts counts;
  std::vector<std::string> words;
  for (int i = 0; i < 400; ++i) {
    std::string w;
    for (std::size_t k = 0; k < 2 + rng() % 9; ++k) w += static_cast<char>('a' + rng() % 12);
    counts[w] += 1 + rng() % 5;
    words.push_back(w);
  }
  const auto vocab = train_bpe(counts, {200, 2}).vocab;
  const WordPieceTokenizer tok(vocab);

  for (const auto& w : words) {
    const auto p = pieces(tok, w);
    ASSERT_FALSE(p.empty());
    if (p[0] == "[UNK]") continue;
    std::string joined;
    for (std::size_t i = 0; i < p.size(); ++i) {
      EXPECT_EQ(i > 0, is_continuation(p[i])) << w;
      joined += strip_continuation(p[i]);
    }
    EXPECT_EQ(joined, w);
    std::size_t longest = 0;
    for (std::size_t len = 1; len <= w.size(); ++len)
      if (vocab.contains(w.substr(0, len))) longest = len;
    EXPECT_EQ(p[0], w.substr(0, longest)) << w;
  }
  for (const auto& t : vocab.tokens()) {
    if (vocab.is_special(*vocab.find(t)) || is_continuation(t)) continue;
    EXPECT_EQ(pieces(tok, t), (std::vector<std::string>{t}));
  }
}

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "cdistill/corpus.hpp"
#include "cdistill/error.hpp"
#include "test_support.hpp"

namespace cdistill {
namespace {

using testing::code_of;

// ---- sampling distribution --------------------------------------------------

TEST(SizeDistributionTest, Examples) {
  const std::vector<double> sizes = {30, 10};
  auto p = size_distribution(sizes);
  EXPECT_DOUBLE_EQ(p[0], 0.75);
  EXPECT_DOUBLE_EQ(p[1], 0.25);
  const std::vector<double> one = {123};
  EXPECT_EQ(size_distribution(one)[0], 1.0);

  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    auto v = testing::uniform_values(1 + trial % 7, rng, 0.1, 1e6);
    auto q = size_distribution(v);
    double total = 0.0;
    for (double x : q) total += x;
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(SizeDistributionTest, Errors) {
  EXPECT_EQ(code_of([] { size_distribution(std::vector<double>{}); }), ErrorCode::EmptyTable);
  EXPECT_EQ(code_of([] { size_distribution(std::vector<double>{3, 0}); }), ErrorCode::NonPositiveSize);
  EXPECT_EQ(code_of([] { size_distribution(std::vector<double>{3, -1}); }), ErrorCode::NonPositiveSize);
}

TEST(SmoothingExponentTest, Examples) {
  EXPECT_DOUBLE_EQ(solve_smoothing_exponent(0.5, 0.005, 100.0), 1.0);
  EXPECT_NEAR(solve_smoothing_exponent(0.9999, 0.9999e-4, 100.0), 0.5, 1e-12);
  EXPECT_EQ(code_of([] { solve_smoothing_exponent(0.3, 0.3, 100.0); }), ErrorCode::DegenerateRatio);
  EXPECT_EQ(code_of([] { solve_smoothing_exponent(0.3, 0.1, 0.0); }), ErrorCode::InvalidTarget);
  EXPECT_EQ(code_of([] { solve_smoothing_exponent(0.3, 0.1, -2.0); }), ErrorCode::InvalidTarget);
}

TEST(SmoothingExponentTest, HitsTheTargetRatio) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> ratio(1.5, 1e4);
  for (int trial = 0; trial < 200; ++trial) {
    auto sizes = testing::uniform_values(2 + trial % 5, rng, 1.0, 1e7);
    auto p = size_distribution(sizes);
    const auto [lo, hi] = std::minmax_element(p.begin(), p.end());
    if (*lo == *hi) continue;
    const double R = ratio(rng);
    const double S = solve_smoothing_exponent(*hi, *lo, R);
    auto q = exponentiate_distribution(p, S);
    const double got = q[hi - p.begin()] / q[lo - p.begin()];
    EXPECT_NEAR(got / R, 1.0, 1e-9);
  }
}

TEST(ExponentiateTest, Examples) {
  const std::vector<double> p = {0.8, 0.2};
  auto q = exponentiate_distribution(p, 0.5);
  EXPECT_NEAR(q[0], 2.0 / 3.0, 1e-4);
  EXPECT_NEAR(q[1], 1.0 / 3.0, 1e-4);
  auto same = exponentiate_distribution(p, 1.0);
  EXPECT_NEAR(same[0], 0.8, 1e-15);
  const std::vector<double> uniform = {0.25, 0.25, 0.25, 0.25};
  for (double s : {0.1, 0.7, 3.0}) {
    for (double v : exponentiate_distribution(uniform, s)) EXPECT_NEAR(v, 0.25, 1e-15);
  }
  EXPECT_EQ(code_of([] { exponentiate_distribution(std::vector<double>{0.5, 0.6}, 1.0); }),
            ErrorCode::InvalidDistribution);
  EXPECT_EQ(code_of([] { exponentiate_distribution(std::vector<double>{1.0, 0.0}, 1.0); }),
            ErrorCode::InvalidDistribution);
}

TEST(ExponentiateTest, ExponentBelowOneNarrowsTheSpread) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> exponent(0.05, 0.95);
  for (int trial = 0; trial < 100; ++trial) {
    auto p = size_distribution(testing::uniform_values(2 + trial % 6, rng, 1.0, 1e5));
    const auto [lo, hi] = std::minmax_element(p.begin(), p.end());
    if (*lo == *hi) continue;
    auto q = exponentiate_distribution(p, exponent(rng));
    const auto [qlo, qhi] = std::minmax_element(q.begin(), q.end());
    EXPECT_LT(*qhi / *qlo, *hi / *lo);
  }
}

TEST(LanguageTableTest, DefaultAnchorsAndFileRoundTrip) {
  const std::vector<std::pair<std::string, double>> sizes = {{"en", 1e6}, {"fr", 1e4}, {"sw", 1e2}};
  auto table = LanguageTable::build(sizes, 100.0);
  EXPECT_NEAR(table.entry("en").smoothed / table.entry("sw").smoothed, 100.0, 1e-9);
  EXPECT_NEAR(table.exponent, 0.5, 1e-12);
  double total = 0.0;
  for (double p : table.smoothed_probabilities()) total += p;
  EXPECT_NEAR(total, 1.0, 1e-12);

  auto anchored = LanguageTable::build(sizes, 10.0, "en", "fr");
  EXPECT_NEAR(anchored.entry("en").smoothed / anchored.entry("fr").smoothed, 10.0, 1e-9);
  EXPECT_EQ(code_of([&] { LanguageTable::build(sizes, 10.0, "en", "de"); }), ErrorCode::InvalidSpec);

  std::stringstream buffer;
  write_language_sizes(buffer, sizes);
  EXPECT_EQ(read_language_sizes(buffer), sizes);
}

// ---- synthetic corpus -----------------------------------------------------------

CorpusSpec two_language_spec() {
  CorpusSpec spec;
  spec.languages = {{"aa", "abc", 9.0}, {"bb", "xyz", 1.0}};
  spec.anchor_ratio = 9.0;  // S = 1: P' = {0.9, 0.1}
  return spec;
}

TEST(CorpusTest, DeterministicPerSeed) {
  auto spec = CorpusSpec::desk_default();
  auto a = generate_synthetic_corpus(spec, 500, 1);
  auto b = generate_synthetic_corpus(spec, 500, 1);
  auto c = generate_synthetic_corpus(spec, 500, 2);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  std::stringstream sa, sb;
  write_corpus(sa, a);
  write_corpus(sb, b);
  EXPECT_EQ(sa.str(), sb.str());
}

TEST(CorpusTest, LanguageFrequenciesFollowTheSmoothedTable) {
  auto spec = two_language_spec();
  auto table = spec.language_table();
  EXPECT_NEAR(table.entry("aa").smoothed, 0.9, 1e-12);
  auto lines = generate_synthetic_corpus(spec, 100'000, 7);
  std::map<std::string, double> counts;
  for (const auto& l : lines) counts[l.language] += 1.0;
  const double l1 = std::abs(counts["aa"] / 1e5 - 0.9) + std::abs(counts["bb"] / 1e5 - 0.1);
  EXPECT_LE(l1, 0.01);
}

TEST(CorpusTest, LinesUseTheLanguageAlphabetAndShape) {
  auto spec = CorpusSpec::desk_default();
  for (const auto& line : generate_synthetic_corpus(spec, 300, 3)) {
    const auto& lang = *std::find_if(spec.languages.begin(), spec.languages.end(),
                                     [&](const auto& l) { return l.id == line.language; });
    auto words = whitespace_tokens(line.text);
    EXPECT_GE(words.size(), spec.min_words);
    EXPECT_LE(words.size(), spec.max_words);
    for (const auto& w : words) {
      EXPECT_GE(w.size(), spec.min_word_length);
      EXPECT_LE(w.size(), spec.max_word_length);
      for (char ch : w) EXPECT_NE(lang.alphabet.find(ch), std::string::npos);
    }
  }
}

TEST(CorpusTest, SpecValidation) {
  CorpusSpec single;
  single.languages = {{"aa", "abc", 1.0}};
  EXPECT_EQ(code_of([&] { generate_synthetic_corpus(single, 10, 1); }), ErrorCode::InvalidSpec);
  single.allow_single_language = true;
  EXPECT_EQ(generate_synthetic_corpus(single, 10, 1).size(), 10u);

  auto spec = two_language_spec();
  spec.languages[1].alphabet = "abc";
  EXPECT_EQ(code_of([&] { spec.validate(); }), ErrorCode::InvalidSpec);
  spec = two_language_spec();
  spec.min_words = 5;
  spec.max_words = 2;
  EXPECT_EQ(code_of([&] { spec.validate(); }), ErrorCode::InvalidSpec);
}

TEST(CorpusTest, FileRoundTrip) {
  auto lines = generate_synthetic_corpus(CorpusSpec::desk_default(), 50, 4);
  std::stringstream buffer;
  write_corpus(buffer, lines);
  EXPECT_EQ(read_corpus(buffer), lines);
}

TEST(ShuffleTest, PermutationProperties) {
  auto lines = generate_synthetic_corpus(CorpusSpec::desk_default(), 200, 5);
  auto a = shuffle_lines(lines, 1);
  auto b = shuffle_lines(lines, 2);
  auto sorted_in = lines, sorted_a = a;
  std::sort(sorted_in.begin(), sorted_in.end());
  std::sort(sorted_a.begin(), sorted_a.end());
  EXPECT_EQ(sorted_in, sorted_a);
  EXPECT_NE(a, b);
  EXPECT_EQ(shuffle_lines(lines, 1), a);
  std::vector<CorpusLine> one = {{"xa", "abc"}};
  EXPECT_EQ(shuffle_lines(one, 9), one);
}

// ---- labeled task ----------------------------------------------------------------

TEST(LabeledTaskTest, EachLineCarriesItsCueWord) {
  auto spec = CorpusSpec::desk_default();
  auto lines = generate_labeled_task(spec, "xb", 90, 6);
  ASSERT_EQ(lines.size(), 90u);
  const auto& cues = class_cue_words();
  std::size_t per_class[3] = {0, 0, 0};
  for (const auto& l : lines) {
    EXPECT_EQ(l.language, "xb");
    ASSERT_LT(l.label, 3u);
    ++per_class[l.label];
    auto words = whitespace_tokens(l.text);
    EXPECT_EQ(std::count(words.begin(), words.end(), cues[l.label]), 1);
    for (std::size_t other = 0; other < 3; ++other) {
      if (other != l.label) {
        EXPECT_EQ(std::count(words.begin(), words.end(), cues[other]), 0);
      }
    }
  }
  EXPECT_EQ(per_class[0], 30u);
  EXPECT_EQ(per_class[1], 30u);

  std::stringstream buffer;
  write_labeled(buffer, lines);
  auto back = read_labeled(buffer);
  ASSERT_EQ(back.size(), lines.size());
  EXPECT_EQ(back[17].text, lines[17].text);
  EXPECT_EQ(back[17].label, lines[17].label);

  std::stringstream bad("xa\t-1\tabc\n");
  EXPECT_EQ(code_of([&] { read_labeled(bad); }), ErrorCode::LabelOutOfRange);
}

// ---- vocabulary and encoding -------------------------------------------------------

Vocabulary small_vocab() { return Vocabulary::from_tokens({"[PAD]", "[UNK]", "[CLS]", "[SEP]", "ab", "cd"}, 16); }

TEST(EncodeTest, Examples) {
  auto v = small_vocab();
  Batch row = encode("ab cd", v, 8);
  EXPECT_EQ(row.token_ids, (std::vector<std::size_t>{2, 4, 5, 3, 0, 0, 0, 0}));
  EXPECT_EQ(row.attention_mask, (std::vector<std::uint8_t>{1, 1, 1, 1, 0, 0, 0, 0}));

  Batch empty = encode("", v, 8);
  EXPECT_EQ(empty.token_ids, (std::vector<std::size_t>{2, 3, 0, 0, 0, 0, 0, 0}));

  std::string twenty;
  for (int i = 0; i < 20; ++i) twenty += (i % 2 ? "cd " : "ab ");
  Batch cut = encode(twenty, v, 8);
  ASSERT_EQ(cut.token_ids.size(), 8u);
  EXPECT_EQ(cut.token_ids[0], Vocabulary::kCls);
  EXPECT_EQ(cut.token_ids[7], Vocabulary::kSep);
  EXPECT_EQ(std::count(cut.attention_mask.begin(), cut.attention_mask.end(), 1), 8);

  EXPECT_EQ(encode("zz", v, 4).token_ids[1], Vocabulary::kUnk);
  EXPECT_EQ(code_of([&] { encode("ab", v, 1); }), ErrorCode::InvalidConfig);
}

TEST(EncodeTest, MaskInvariantOnRandomLines) {
  auto spec = CorpusSpec::desk_default();
  auto lines = generate_synthetic_corpus(spec, 400, 8);
  auto vocab = Vocabulary::build(lines, 64, class_cue_words());
  std::mt19937_64 rng(9);
  for (std::size_t T : {2u, 3u, 8u, 16u}) {
    Batch b = encode_lines(lines, vocab, T);
    ASSERT_EQ(b.batch_size, lines.size());
    for (std::size_t r = 0; r < b.batch_size; ++r) {
      const auto* ids = &b.token_ids[r * T];
      const auto* mask = &b.attention_mask[r * T];
      std::size_t real = 0;
      while (real < T && mask[real]) ++real;
      for (std::size_t t = real; t < T; ++t) {
        EXPECT_EQ(mask[t], 0);
        EXPECT_EQ(ids[t], Vocabulary::kPad);
      }
      ASSERT_GE(real, 2u);
      EXPECT_EQ(ids[0], Vocabulary::kCls);
      EXPECT_EQ(ids[real - 1], Vocabulary::kSep);
      for (std::size_t t = 0; t < T; ++t) EXPECT_LT(ids[t], vocab.capacity());
    }
  }
}

TEST(VocabularyTest, BuildReservesAndRoundTrips) {
  std::vector<CorpusLine> lines = {{"x", "b a a c"}, {"x", "a b d"}};
  auto v = Vocabulary::build(lines, 7, {"<r>"});
  EXPECT_EQ(v.tokens(), (std::vector<std::string>{"[PAD]", "[UNK]", "[CLS]", "[SEP]", "<r>", "a", "b"}));
  EXPECT_EQ(v.id("a"), 5u);
  EXPECT_EQ(v.id("zzz"), Vocabulary::kUnk);
  std::stringstream buffer;
  v.write(buffer);
  auto back = Vocabulary::read(buffer, 7);
  EXPECT_EQ(back.tokens(), v.tokens());
  EXPECT_EQ(code_of([] { Vocabulary::from_tokens({"a", "b"}, 10); }), ErrorCode::InvalidConfig);
}

TEST(BatchStreamTest, ReadsSequentiallyWithinItsSlice) {
  auto rows = std::make_shared<const Batch>(encode_lines(
      std::vector<CorpusLine>(10, CorpusLine{"x", "ab"}), small_vocab(), 4));
  BatchStream s(rows, 2, 7);
  EXPECT_EQ(s.next(3).batch_size, 3u);
  EXPECT_EQ(s.position(), 5u);
  EXPECT_EQ(s.remaining(), 2u);
  EXPECT_EQ(code_of([&] { s.next(3); }), ErrorCode::DataExhausted);
  EXPECT_EQ(code_of([&] { BatchStream(rows, 4, 11); }), ErrorCode::DataExhausted);
}

}  // namespace
}  // namespace cdistill

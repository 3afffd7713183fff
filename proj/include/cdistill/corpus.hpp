#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cdistill/batch.hpp"

namespace cdistill {

// ---------------------------------------------------------------------------
// Language sampling distribution
// ---------------------------------------------------------------------------

// P(j) = size(j) / sum_k size(k). Throws EmptyTable / NonPositiveSize.
std::vector<double> size_distribution(std::span<const double> sizes);

// S such that (p_a / p_b)^S == target_ratio, i.e. the smoothed
// probabilities of the two anchors keep that ratio.
double solve_smoothing_exponent(double p_a, double p_b, double target_ratio);

// P'(j) = P(j)^S / sum_k P(k)^S.
std::vector<double> exponentiate_distribution(std::span<const double> probabilities, double exponent);

struct LanguageEntry {
  std::string language;
  double size_bytes = 0.0;
  double probability = 0.0;
  double smoothed = 0.0;
};

struct LanguageTable {
  std::vector<LanguageEntry> entries;
  double exponent = 1.0;

  // Anchors default to the largest and smallest language.
  static LanguageTable build(const std::vector<std::pair<std::string, double>>& sizes, double anchor_ratio = 100.0,
                             std::string anchor_large = {}, std::string anchor_small = {});
  std::vector<double> smoothed_probabilities() const;
  const LanguageEntry& entry(std::string_view language) const;
};

// `lang,size_bytes` rows; '#' starts a comment line.
std::vector<std::pair<std::string, double>> read_language_sizes(std::istream& in);
void write_language_sizes(std::ostream& out, const std::vector<std::pair<std::string, double>>& sizes);

// ---------------------------------------------------------------------------
// Synthetic corpus
// ---------------------------------------------------------------------------

// Order-2 character Markov chain over a private alphabet.
struct SyntheticLanguage {
  std::string id;
  std::string alphabet;
  double size_bytes = 1.0;
};

struct CorpusSpec {
  std::vector<SyntheticLanguage> languages;
  std::size_t min_words = 3;
  std::size_t max_words = 12;
  std::size_t min_word_length = 1;
  std::size_t max_word_length = 4;
  double anchor_ratio = 100.0;
  std::string anchor_large;  // empty: largest language
  std::string anchor_small;  // empty: smallest language
  bool allow_single_language = false;

  // Three languages with disjoint alphabets and a 1000:200:1 size spread.
  static CorpusSpec desk_default();
  void validate() const;  // throws InvalidSpec
  LanguageTable language_table() const;
};

struct CorpusLine {
  std::string language;
  std::string text;

  friend bool operator==(const CorpusLine&, const CorpusLine&) = default;
  friend auto operator<=>(const CorpusLine&, const CorpusLine&) = default;
};

// Languages are drawn i.i.d. from the smoothed distribution of the spec's
// language table. Deterministic per seed.
std::vector<CorpusLine> generate_synthetic_corpus(const CorpusSpec& spec, std::size_t total_lines,
                                                  std::uint64_t seed);

// One line of text in `language`, as the corpus generator would emit it.
std::string generate_line(const CorpusSpec& spec, std::string_view language, std::uint64_t seed);

// `lang\ttext` per line; the tag is optional on read.
void write_corpus(std::ostream& out, const std::vector<CorpusLine>& lines);
std::vector<CorpusLine> read_corpus(std::istream& in);

// Deterministic permutation of the lines.
std::vector<CorpusLine> shuffle_lines(std::vector<CorpusLine> lines, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Labeled classification task
// ---------------------------------------------------------------------------

struct LabeledLine {
  std::string language;
  std::size_t label = 0;
  std::string text;
};

// Marker word for each class; shared across languages.
const std::vector<std::string>& class_cue_words();

// `count` lines in `language` whose class is identified by the cue word
// inserted at a random position. Labels cycle through the classes.
std::vector<LabeledLine> generate_labeled_task(const CorpusSpec& spec, std::string_view language, std::size_t count,
                                               std::uint64_t seed);

// `lang\tlabel\ttext` per line.
void write_labeled(std::ostream& out, const std::vector<LabeledLine>& lines);
std::vector<LabeledLine> read_labeled(std::istream& in);

// ---------------------------------------------------------------------------
// Tokenization and batching
// ---------------------------------------------------------------------------

class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;
  static constexpr std::size_t kCls = 2;
  static constexpr std::size_t kSep = 3;
  static constexpr std::size_t kNumSpecial = 4;

  // Specials, then `reserved`, then the most frequent whitespace tokens
  // (ties broken lexicographically) until `capacity` ids are used.
  static Vocabulary build(const std::vector<CorpusLine>& lines, std::size_t capacity,
                          const std::vector<std::string>& reserved = {});
  // Tokens in id order; the first four must be the specials.
  static Vocabulary from_tokens(std::vector<std::string> tokens, std::size_t capacity);

  std::size_t id(std::string_view token) const;
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::size_t size() const { return tokens_.size(); }
  // Upper bound on ids, which is the model's vocab_size.
  std::size_t capacity() const { return capacity_; }

  void write(std::ostream& out) const;
  static Vocabulary read(std::istream& in, std::size_t capacity);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> ids_;
  std::size_t capacity_ = 0;
};

// Splits on ASCII whitespace; case is preserved.
std::vector<std::string> whitespace_tokens(std::string_view text);

// [CLS] tokens [SEP], truncated to seq_len, padded with [PAD] to seq_len.
Batch encode(std::string_view text, const Vocabulary& vocab, std::size_t seq_len);
Batch encode_lines(const std::vector<CorpusLine>& lines, const Vocabulary& vocab, std::size_t seq_len);
Batch encode_labeled(const std::vector<LabeledLine>& lines, const Vocabulary& vocab, std::size_t seq_len);

// Sequential reader over rows [begin, end) of a shared encoded corpus.
class BatchStream {
 public:
  BatchStream(std::shared_ptr<const Batch> rows, std::size_t begin, std::size_t end);
  explicit BatchStream(std::shared_ptr<const Batch> rows);

  // Next `count` rows; throws DataExhausted past the end of the slice.
  Batch next(std::size_t count);
  std::size_t position() const { return position_; }
  std::size_t begin() const { return begin_; }
  std::size_t end() const { return end_; }
  std::size_t remaining() const { return end_ - position_; }

 private:
  std::shared_ptr<const Batch> rows_;
  std::size_t begin_ = 0;
  std::size_t end_ = 0;
  std::size_t position_ = 0;
};

}  // namespace cdistill

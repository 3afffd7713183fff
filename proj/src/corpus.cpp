#include "cdistill/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include "cdistill/error.hpp"
#include "cdistill/seed.hpp"

namespace cdistill {

std::vector<double> size_distribution(std::span<const double> sizes) {
  if (sizes.empty()) throw Error(ErrorCode::EmptyTable, "no languages");
  double total = 0.0;
  for (double s : sizes) {
    if (!(s > 0.0) || !std::isfinite(s)) throw Error(ErrorCode::NonPositiveSize, "size " + std::to_string(s));
    total += s;
  }
  std::vector<double> p(sizes.size());
  for (std::size_t i = 0; i < sizes.size(); ++i) p[i] = sizes[i] / total;
  return p;
}

double solve_smoothing_exponent(double p_a, double p_b, double target_ratio) {
  if (!(target_ratio > 1.0) || !std::isfinite(target_ratio)) {
    throw Error(ErrorCode::InvalidTarget, "target ratio must exceed 1, got " + std::to_string(target_ratio));
  }
  if (!(p_a > 0.0) || !(p_b > 0.0)) throw Error(ErrorCode::InvalidDistribution, "anchor probabilities must be > 0");
  if (p_a == p_b) throw Error(ErrorCode::DegenerateRatio, "anchor probabilities are equal");
  if (p_a < p_b) throw Error(ErrorCode::DegenerateRatio, "first anchor must be the more probable language");
  return std::log(target_ratio) / std::log(p_a / p_b);
}

std::vector<double> exponentiate_distribution(std::span<const double> probabilities, double exponent) {
  if (probabilities.empty()) throw Error(ErrorCode::InvalidDistribution, "empty distribution");
  if (!(exponent > 0.0) || !std::isfinite(exponent)) {
    throw Error(ErrorCode::InvalidDistribution, "exponent must be > 0, got " + std::to_string(exponent));
  }
  double total = 0.0;
  for (double p : probabilities) {
    if (!(p > 0.0) || p > 1.0) throw Error(ErrorCode::InvalidDistribution, "probability " + std::to_string(p));
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw Error(ErrorCode::InvalidDistribution, "probabilities sum to " + std::to_string(total));
  }
  std::vector<double> out(probabilities.size());
  double norm = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::pow(probabilities[i], exponent);
    norm += out[i];
  }
  for (auto& v : out) v /= norm;
  return out;
}

LanguageTable LanguageTable::build(const std::vector<std::pair<std::string, double>>& sizes, double anchor_ratio,
                                   std::string anchor_large, std::string anchor_small) {
  std::vector<double> raw;
  for (const auto& [lang, size] : sizes) raw.push_back(size);
  const auto p = size_distribution(raw);

  auto index_of = [&](const std::string& lang) {
    for (std::size_t i = 0; i < sizes.size(); ++i) {
      if (sizes[i].first == lang) return i;
    }
    throw Error(ErrorCode::InvalidSpec, "anchor language '" + lang + "' not in table");
  };
  const bool explicit_anchors = !anchor_large.empty() || !anchor_small.empty();
  const std::size_t large = anchor_large.empty()
                                ? static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin())
                                : index_of(anchor_large);
  const std::size_t small = anchor_small.empty()
                                ? static_cast<std::size_t>(std::min_element(p.begin(), p.end()) - p.begin())
                                : index_of(anchor_small);

  LanguageTable table;
  // One language, or equal-sized defaults: every exponent gives the same P'.
  if (sizes.size() == 1 || (!explicit_anchors && p[large] == p[small])) {
    table.exponent = 1.0;
  } else {
    table.exponent = solve_smoothing_exponent(p[large], p[small], anchor_ratio);
  }
  const auto smoothed = exponentiate_distribution(p, table.exponent);
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    table.entries.push_back({sizes[i].first, sizes[i].second, p[i], smoothed[i]});
  }
  return table;
}

std::vector<double> LanguageTable::smoothed_probabilities() const {
  std::vector<double> out;
  for (const auto& e : entries) out.push_back(e.smoothed);
  return out;
}

const LanguageEntry& LanguageTable::entry(std::string_view language) const {
  for (const auto& e : entries) {
    if (e.language == language) return e;
  }
  throw Error(ErrorCode::InvalidSpec, "language '" + std::string(language) + "' not in table");
}

std::vector<std::pair<std::string, double>> read_language_sizes(std::istream& in) {
  std::vector<std::pair<std::string, double>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos || comma == 0) {
      throw Error(ErrorCode::InvalidSpec, "language table line " + std::to_string(line_no) + ": expected lang,size");
    }
    double size = 0.0;
    try {
      std::size_t used = 0;
      size = std::stod(line.substr(comma + 1), &used);
      if (used != line.size() - comma - 1) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidSpec, "language table line " + std::to_string(line_no) + ": bad size");
    }
    out.emplace_back(line.substr(0, comma), size);
  }
  return out;
}

void write_language_sizes(std::ostream& out, const std::vector<std::pair<std::string, double>>& sizes) {
  for (const auto& [lang, size] : sizes) {
    std::ostringstream os;
    os.precision(17);
    os << size;
    out << lang << ',' << os.str() << '\n';
  }
}

CorpusSpec CorpusSpec::desk_default() {
  CorpusSpec spec;
  spec.languages = {{"xa", "abcdef", 1'000'000.0}, {"xb", "ghijkl", 200'000.0}, {"xc", "mnopqr", 1'000.0}};
  spec.min_words = 3;
  spec.max_words = 12;
  spec.min_word_length = 1;
  spec.max_word_length = 3;
  return spec;
}

void CorpusSpec::validate() const {
  if (languages.empty()) throw Error(ErrorCode::InvalidSpec, "no languages");
  if (languages.size() < 2 && !allow_single_language) {
    throw Error(ErrorCode::InvalidSpec, "a single-language corpus needs allow_single_language");
  }
  std::set<std::string> ids;
  std::set<std::string> alphabets;
  for (const auto& l : languages) {
    if (l.id.empty() || l.id.find_first_of(" \t\n\r,") != std::string::npos) {
      throw Error(ErrorCode::InvalidSpec, "invalid language id '" + l.id + "'");
    }
    if (!ids.insert(l.id).second) throw Error(ErrorCode::InvalidSpec, "duplicate language '" + l.id + "'");
    if (l.alphabet.empty() || l.alphabet.find_first_of(" \t\n\r") != std::string::npos) {
      throw Error(ErrorCode::InvalidSpec, "language '" + l.id + "' needs a non-empty alphabet without whitespace");
    }
    std::string sorted(l.alphabet);
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    if (!alphabets.insert(sorted).second) {
      throw Error(ErrorCode::InvalidSpec, "language '" + l.id + "' shares its alphabet with another language");
    }
    if (!(l.size_bytes > 0.0)) throw Error(ErrorCode::InvalidSpec, "language '" + l.id + "' needs size > 0");
  }
  if (min_words > max_words || max_words == 0) throw Error(ErrorCode::InvalidSpec, "bad words-per-line range");
  if (min_word_length == 0 || min_word_length > max_word_length) {
    throw Error(ErrorCode::InvalidSpec, "bad word-length range");
  }
  if (!(anchor_ratio > 1.0)) throw Error(ErrorCode::InvalidSpec, "anchor_ratio must exceed 1");
}

LanguageTable CorpusSpec::language_table() const {
  validate();
  std::vector<std::pair<std::string, double>> sizes;
  for (const auto& l : languages) sizes.emplace_back(l.id, l.size_bytes);
  return LanguageTable::build(sizes, anchor_ratio, anchor_large, anchor_small);
}

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Order-2 character chain. Context index = prev2 * (A+1) + prev1, where A
// marks the start of a word.
class CharChain {
 public:
  explicit CharChain(const SyntheticLanguage& lang) : alphabet_(lang.alphabet) {
    const std::size_t a = alphabet_.size();
    std::mt19937_64 rng(fnv1a(lang.id + '\x1f' + lang.alphabet));
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    cumulative_.resize((a + 1) * (a + 1));
    for (auto& row : cumulative_) {
      row.resize(a);
      double total = 0.0;
      for (std::size_t c = 0; c < a; ++c) {
        const double u = uniform(rng);
        total += u * u * u;  // peaked transitions
        row[c] = total;
      }
      for (auto& v : row) v /= total;
    }
  }

  std::string word(std::size_t length, std::mt19937_64& rng) const {
    const std::size_t a = alphabet_.size();
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    std::string out;
    std::size_t prev2 = a, prev1 = a;
    for (std::size_t i = 0; i < length; ++i) {
      const auto& row = cumulative_[prev2 * (a + 1) + prev1];
      const double u = uniform(rng);
      auto c = static_cast<std::size_t>(std::lower_bound(row.begin(), row.end(), u) - row.begin());
      c = std::min(c, a - 1);
      out.push_back(alphabet_[c]);
      prev2 = prev1;
      prev1 = c;
    }
    return out;
  }

 private:
  std::string alphabet_;
  std::vector<std::vector<double>> cumulative_;
};

std::vector<std::string> generate_words(const CorpusSpec& spec, const CharChain& chain, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> word_count(spec.min_words, spec.max_words);
  std::uniform_int_distribution<std::size_t> word_length(spec.min_word_length, spec.max_word_length);
  const std::size_t n = word_count(rng);
  std::vector<std::string> words;
  for (std::size_t i = 0; i < n; ++i) words.push_back(chain.word(word_length(rng), rng));
  return words;
}

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out.push_back(' ');
    out += words[i];
  }
  return out;
}

std::size_t language_index(const CorpusSpec& spec, std::string_view language) {
  for (std::size_t i = 0; i < spec.languages.size(); ++i) {
    if (spec.languages[i].id == language) return i;
  }
  throw Error(ErrorCode::InvalidSpec, "unknown language '" + std::string(language) + "'");
}

}  // namespace

std::vector<CorpusLine> generate_synthetic_corpus(const CorpusSpec& spec, std::size_t total_lines,
                                                  std::uint64_t seed) {
  const LanguageTable table = spec.language_table();
  std::vector<CharChain> chains;
  for (const auto& l : spec.languages) chains.emplace_back(l);
  std::vector<double> cumulative;
  double acc = 0.0;
  for (const auto& e : table.entries) cumulative.push_back(acc += e.smoothed);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::vector<CorpusLine> lines;
  lines.reserve(total_lines);
  for (std::size_t i = 0; i < total_lines; ++i) {
    const double u = uniform(rng) * acc;
    auto li = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
    li = std::min(li, spec.languages.size() - 1);
    lines.push_back({spec.languages[li].id, join_words(generate_words(spec, chains[li], rng))});
  }
  return lines;
}

std::string generate_line(const CorpusSpec& spec, std::string_view language, std::uint64_t seed) {
  spec.validate();
  const CharChain chain(spec.languages[language_index(spec, language)]);
  std::mt19937_64 rng(seed);
  return join_words(generate_words(spec, chain, rng));
}

void write_corpus(std::ostream& out, const std::vector<CorpusLine>& lines) {
  for (const auto& l : lines) {
    if (!l.language.empty()) out << l.language << '\t';
    out << l.text << '\n';
  }
}

std::vector<CorpusLine> read_corpus(std::istream& in) {
  std::vector<CorpusLine> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      out.push_back({"", line});
    } else {
      out.push_back({line.substr(0, tab), line.substr(tab + 1)});
    }
  }
  return out;
}

std::vector<CorpusLine> shuffle_lines(std::vector<CorpusLine> lines, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::shuffle(lines.begin(), lines.end(), rng);
  return lines;
}

const std::vector<std::string>& class_cue_words() {
  static const std::vector<std::string> cues = {"<entail>", "<neutral>", "<contradict>"};
  return cues;
}

std::vector<LabeledLine> generate_labeled_task(const CorpusSpec& spec, std::string_view language, std::size_t count,
                                               std::uint64_t seed) {
  spec.validate();
  const CharChain chain(spec.languages[language_index(spec, language)]);
  const auto& cues = class_cue_words();
  std::mt19937_64 rng(seed);
  std::vector<LabeledLine> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t label = i % cues.size();
    auto words = generate_words(spec, chain, rng);
    std::uniform_int_distribution<std::size_t> where(0, words.size());
    words.insert(words.begin() + static_cast<std::ptrdiff_t>(where(rng)), cues[label]);
    out.push_back({std::string(language), label, join_words(words)});
  }
  return out;
}

void write_labeled(std::ostream& out, const std::vector<LabeledLine>& lines) {
  for (const auto& l : lines) out << l.language << '\t' << l.label << '\t' << l.text << '\n';
}

std::vector<LabeledLine> read_labeled(std::istream& in) {
  std::vector<LabeledLine> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) {
      throw Error(ErrorCode::InvalidSpec, "labeled line " + std::to_string(line_no) + ": expected lang<TAB>label<TAB>text");
    }
    const std::string label_text = line.substr(t1 + 1, t2 - t1 - 1);
    if (label_text.empty() || label_text.find_first_not_of("0123456789") != std::string::npos) {
      throw Error(ErrorCode::LabelOutOfRange, "labeled line " + std::to_string(line_no) + ": bad label");
    }
    out.push_back({line.substr(0, t1), static_cast<std::size_t>(std::stoull(label_text)), line.substr(t2 + 1)});
  }
  return out;
}

Vocabulary Vocabulary::build(const std::vector<CorpusLine>& lines, std::size_t capacity,
                             const std::vector<std::string>& reserved) {
  std::vector<std::string> tokens = {"[PAD]", "[UNK]", "[CLS]", "[SEP]"};
  std::set<std::string> taken(tokens.begin(), tokens.end());
  for (const auto& r : reserved) {
    if (taken.insert(r).second) tokens.push_back(r);
  }
  if (capacity < tokens.size()) {
    throw Error(ErrorCode::InvalidConfig, "vocabulary capacity " + std::to_string(capacity) + " below " +
                                              std::to_string(tokens.size()) + " required tokens");
  }
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& l : lines) {
    for (auto& t : whitespace_tokens(l.text)) ++counts[t];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  for (const auto& [token, count] : ranked) {
    if (tokens.size() >= capacity) break;
    if (taken.insert(token).second) tokens.push_back(token);
  }
  return from_tokens(std::move(tokens), capacity);
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens, std::size_t capacity) {
  static const std::vector<std::string> specials = {"[PAD]", "[UNK]", "[CLS]", "[SEP]"};
  if (tokens.size() < kNumSpecial || !std::equal(specials.begin(), specials.end(), tokens.begin())) {
    throw Error(ErrorCode::InvalidConfig, "vocabulary must start with [PAD] [UNK] [CLS] [SEP]");
  }
  if (tokens.size() > capacity) {
    throw Error(ErrorCode::InvalidConfig, std::to_string(tokens.size()) + " tokens exceed capacity " +
                                              std::to_string(capacity));
  }
  Vocabulary v;
  v.capacity_ = capacity;
  v.tokens_ = std::move(tokens);
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
    if (!v.ids_.emplace(v.tokens_[i], i).second) {
      throw Error(ErrorCode::InvalidConfig, "duplicate vocabulary token '" + v.tokens_[i] + "'");
    }
  }
  return v;
}

std::size_t Vocabulary::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnk : it->second;
}

void Vocabulary::write(std::ostream& out) const {
  for (const auto& t : tokens_) out << t << '\n';
}

Vocabulary Vocabulary::read(std::istream& in, std::size_t capacity) {
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return from_tokens(std::move(tokens), capacity);
}

std::vector<std::string> whitespace_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    const std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) out.emplace_back(text.substr(start, i - start));
  }
  return out;
}

Batch encode(std::string_view text, const Vocabulary& vocab, std::size_t seq_len) {
  if (seq_len < 2) throw Error(ErrorCode::InvalidConfig, "sequence length must be at least 2");
  Batch row;
  row.batch_size = 1;
  row.seq_len = seq_len;
  row.token_ids.assign(seq_len, Vocabulary::kPad);
  row.attention_mask.assign(seq_len, 0);
  const auto tokens = whitespace_tokens(text);
  const std::size_t kept = std::min(tokens.size(), seq_len - 2);
  row.token_ids[0] = Vocabulary::kCls;
  for (std::size_t i = 0; i < kept; ++i) row.token_ids[i + 1] = vocab.id(tokens[i]);
  row.token_ids[kept + 1] = Vocabulary::kSep;
  std::fill_n(row.attention_mask.begin(), kept + 2, std::uint8_t{1});
  return row;
}

Batch encode_lines(const std::vector<CorpusLine>& lines, const Vocabulary& vocab, std::size_t seq_len) {
  std::vector<Batch> rows;
  rows.reserve(lines.size());
  for (const auto& l : lines) rows.push_back(encode(l.text, vocab, seq_len));
  Batch out = Batch::concat(rows);
  out.seq_len = seq_len;
  return out;
}

Batch encode_labeled(const std::vector<LabeledLine>& lines, const Vocabulary& vocab, std::size_t seq_len) {
  std::vector<Batch> rows;
  rows.reserve(lines.size());
  for (const auto& l : lines) {
    Batch row = encode(l.text, vocab, seq_len);
    row.labels = std::vector<std::size_t>{l.label};
    rows.push_back(std::move(row));
  }
  Batch out = Batch::concat(rows);
  out.seq_len = seq_len;
  if (!out.labels) out.labels.emplace();
  return out;
}

BatchStream::BatchStream(std::shared_ptr<const Batch> rows, std::size_t begin, std::size_t end)
    : rows_(std::move(rows)), begin_(begin), end_(end), position_(begin) {
  if (!rows_ || begin > end || end > rows_->batch_size) {
    throw Error(ErrorCode::DataExhausted, "stream slice [" + std::to_string(begin) + "," + std::to_string(end) +
                                              ") outside corpus of " +
                                              std::to_string(rows_ ? rows_->batch_size : 0) + " lines");
  }
}

BatchStream::BatchStream(std::shared_ptr<const Batch> rows)
    : BatchStream(rows, 0, rows ? rows->batch_size : 0) {}

Batch BatchStream::next(std::size_t count) {
  if (count > remaining()) {
    throw Error(ErrorCode::DataExhausted, "requested " + std::to_string(count) + " lines, " +
                                              std::to_string(remaining()) + " left at offset " +
                                              std::to_string(position_));
  }
  Batch out = rows_->slice(position_, position_ + count);
  position_ += count;
  return out;
}

}  // namespace cdistill

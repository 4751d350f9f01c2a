#include "sgsl/textpipe.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "sgsl/errors.hpp"
#include "sgsl/rng.hpp"

namespace sgsl::text {

namespace {

constexpr char kSentenceSep = '\x1F';

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

// Bytes >= 0x80 belong to multi-byte UTF-8 sequences and count as word characters.
bool is_word_char(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u >= 0x80 || (u >= '0' && u <= '9') || (u >= 'a' && u <= 'z') || (u >= 'A' && u <= 'Z');
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_on(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

}  // namespace

const char* split_name(Split s) noexcept {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw ConfigError("unknown split tag '" + std::string(s) + "'");
}

std::size_t Document::token_count() const noexcept {
  std::size_t n = 0;
  for (const auto& s : sentences) n += s.size();
  return n;
}

Vocabulary::Vocabulary() : words_{std::string(oov_token)}, counts_{0} {}

Vocabulary::Vocabulary(std::vector<std::string> words, std::vector<std::size_t> counts) : Vocabulary() {
  SGSL_EXPECT(words.size() == counts.size(), "vocabulary words and counts differ in length");
  for (std::size_t i = 0; i < words.size(); ++i) {
    const auto id = static_cast<WordId>(words_.size());
    if (!index_.emplace(words[i], id).second) throw ConfigError("duplicate vocabulary word '" + words[i] + "'");
    words_.push_back(std::move(words[i]));
    counts_.push_back(counts[i]);
  }
}

WordId Vocabulary::id_of(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? oov : it->second;
}

bool Vocabulary::contains(std::string_view word) const { return index_.count(std::string(word)) > 0; }

const std::string& Vocabulary::word_of(WordId id) const {
  SGSL_EXPECT(id < words_.size(), "word id out of range");
  return words_[id];
}

std::size_t Vocabulary::count_of(WordId id) const {
  SGSL_EXPECT(id < counts_.size(), "word id out of range");
  return counts_[id];
}

std::vector<std::size_t> Corpus::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < documents.size(); ++i)
    if (documents[i].split == s) out.push_back(i);
  return out;
}

std::vector<std::string> segment_sentences(std::string_view raw_text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  auto flush = [&](std::size_t end) {
    auto piece = trim(raw_text.substr(start, end - start));
    if (!piece.empty()) out.emplace_back(piece);
    start = end;
  };
  for (std::size_t i = 0; i < raw_text.size(); ++i) {
    const char c = raw_text[i];
    if ((c == '.' || c == '!' || c == '?') && i + 1 < raw_text.size() && is_space(raw_text[i + 1])) flush(i + 1);
  }
  flush(raw_text.size());
  if (out.empty()) throw EmptyDocument("document has no non-whitespace text");
  return out;
}

std::vector<std::string> tokenize(std::string_view sentence) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < sentence.size()) {
    while (i < sentence.size() && is_space(sentence[i])) ++i;
    std::size_t j = i;
    while (j < sentence.size() && !is_space(sentence[j])) ++j;
    auto tok = sentence.substr(i, j - i);
    while (!tok.empty() && !is_word_char(tok.front())) tok.remove_prefix(1);
    while (!tok.empty() && !is_word_char(tok.back())) tok.remove_suffix(1);
    if (!tok.empty()) {
      std::string w(tok);
      for (auto& c : w)
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
      out.push_back(std::move(w));
    }
    i = j;
  }
  return out;
}

Vocabulary build_vocab(const RawCorpus& corpus, std::size_t min_count) {
  SGSL_EXPECT(!corpus.documents.empty(), "build_vocab: empty corpus");
  std::map<std::string, std::size_t> counts;
  for (const auto& d : corpus.documents) {
    if (d.split == Split::test) continue;
    for (const auto& s : d.sentences)
      for (const auto& w : s) ++counts[w];
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [w, c] : counts)
    if (c >= min_count) kept.emplace_back(w, c);
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> words;
  std::vector<std::size_t> freq;
  for (auto& [w, c] : kept) {
    words.push_back(w);
    freq.push_back(c);
  }
  return Vocabulary(std::move(words), std::move(freq));
}

std::vector<std::string> collect_labels(const RawCorpus& corpus) {
  std::set<std::string> labels;
  for (const auto& d : corpus.documents) labels.insert(d.label);
  return {labels.begin(), labels.end()};
}

Corpus encode_corpus(const RawCorpus& corpus, Vocabulary vocab, std::vector<std::string> label_names) {
  std::map<std::string, std::size_t> label_index;
  for (std::size_t i = 0; i < label_names.size(); ++i) label_index.emplace(label_names[i], i);

  Corpus out;
  out.num_classes = label_names.size();
  for (const auto& rd : corpus.documents) {
    auto it = label_index.find(rd.label);
    if (it == label_index.end()) throw ConfigError("document '" + rd.id + "' has unknown label '" + rd.label + "'");
    Document d;
    d.id = rd.id;
    d.label = it->second;
    d.split = rd.split;
    for (const auto& s : rd.sentences) {
      if (s.empty()) continue;
      std::vector<WordId> ids;
      ids.reserve(s.size());
      for (const auto& w : s) ids.push_back(vocab.id_of(w));
      d.sentences.push_back(std::move(ids));
    }
    if (d.sentences.empty()) throw EmptyDocument("document '" + rd.id + "' has no tokens");
    out.documents.push_back(std::move(d));
  }
  out.label_names = std::move(label_names);
  out.vocab = std::move(vocab);
  return out;
}

EmbeddingTable random_embeddings(const Vocabulary& vocab, std::size_t d0, std::uint64_t seed) {
  SGSL_EXPECT(d0 > 0, "embedding dimension must be positive");
  Rng rng(seed);
  EmbeddingTable t{ad::Tensor(vocab.size(), d0), 0};
  for (auto& x : t.vectors.data()) x = uniform(rng, -0.01, 0.01);
  return t;
}

EmbeddingTable read_embeddings(std::istream& in, const Vocabulary& vocab, std::size_t d0, std::uint64_t seed) {
  EmbeddingTable t = random_embeddings(vocab, d0, seed);
  std::string line;
  std::size_t line_no = 0;
  std::size_t file_dim = 0;
  std::vector<double> values;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string word;
    if (!(fields >> word)) continue;
    values.clear();
    std::string tok;
    while (fields >> tok) {
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v))
        throw ParseError("non-numeric embedding value '" + tok + "'", line_no);
      values.push_back(v);
    }
    if (values.empty()) throw ParseError("embedding line has no values", line_no);
    if (file_dim == 0) {
      file_dim = values.size();
      if (file_dim != d0)
        throw ConfigError("embedding file has dimension " + std::to_string(file_dim) + ", expected " +
                          std::to_string(d0));
    } else if (values.size() != file_dim) {
      throw ParseError("expected " + std::to_string(file_dim) + " values, got " + std::to_string(values.size()),
                       line_no);
    }
    if (!vocab.contains(word)) continue;
    auto row = t.vectors.row(vocab.id_of(word));
    std::copy(values.begin(), values.end(), row.begin());
    ++t.found;
  }
  return t;
}

EmbeddingTable load_embeddings(const std::string& path, const Vocabulary& vocab, std::size_t d0, std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open embedding file '" + path + "'");
  return read_embeddings(in, vocab, d0, seed);
}

TrainValSplit split_train_val(std::span<const std::size_t> train_docs, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("validation fraction must lie in (0, 1)");
  const std::size_t n = train_docs.size();
  if (n < 2) throw ConfigError("need at least 2 training documents to carve a validation set");
  auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  k = std::clamp<std::size_t>(k, 1, n - 1);
  std::vector<std::size_t> order(train_docs.begin(), train_docs.end());
  Rng rng(seed);
  shuffle(order.begin(), order.end(), rng);
  TrainValSplit out;
  out.val.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  out.train.assign(order.begin() + static_cast<std::ptrdiff_t>(k), order.end());
  std::sort(out.val.begin(), out.val.end());
  std::sort(out.train.begin(), out.train.end());
  return out;
}

SyntheticTask parse_synthetic_task(std::string_view s) {
  if (s == "bag") return SyntheticTask::bag;
  if (s == "cross_sentence_xor" || s == "xor") return SyntheticTask::cross_sentence_xor;
  throw ConfigError("unknown synthetic task '" + std::string(s) + "'");
}

RawCorpus generate_synthetic_corpus(const SyntheticSpec& spec, std::uint64_t seed) {
  if (spec.vocab_size < 10) throw ConfigError("synthetic vocab_size must be at least 10");
  if (spec.num_docs == 0 || spec.sentences_per_doc == 0 || spec.tokens_per_sentence == 0)
    throw ConfigError("synthetic corpus needs documents, sentences and tokens");
  if (spec.num_classes < 2) throw ConfigError("synthetic corpus needs at least 2 classes");
  if (!(spec.test_fraction >= 0.0 && spec.test_fraction < 1.0)) throw ConfigError("test_fraction must lie in [0, 1)");
  const bool xor_task = spec.task == SyntheticTask::cross_sentence_xor;
  if (xor_task && (spec.sentences_per_doc < 2 || spec.num_classes != 2))
    throw ConfigError("cross_sentence_xor needs >= 2 sentences per document and exactly 2 classes");
  const std::size_t reserved = xor_task ? 2 : spec.num_classes;
  if (spec.vocab_size <= reserved + 1) throw ConfigError("synthetic vocab_size too small for the keywords");

  Rng rng(seed);
  auto word = [](std::size_t i) { return "w" + std::to_string(i); };
  auto filler = [&] { return word(reserved + uniform_index(rng, spec.vocab_size - reserved)); };

  RawCorpus corpus;
  for (std::size_t d = 0; d < spec.num_docs; ++d) {
    RawDocument doc;
    doc.id = "doc" + std::to_string(d);
    doc.sentences.assign(spec.sentences_per_doc, {});
    for (auto& s : doc.sentences)
      for (std::size_t t = 0; t < spec.tokens_per_sentence; ++t) s.push_back(filler());

    if (xor_task) {
      const bool has_x = uniform01(rng) < 0.5;
      const bool has_y = uniform01(rng) < 0.5;
      if (has_x) doc.sentences[0][uniform_index(rng, spec.tokens_per_sentence)] = word(0);
      if (has_y) doc.sentences[1][uniform_index(rng, spec.tokens_per_sentence)] = word(1);
      doc.label = (has_x != has_y) ? "1" : "0";
    } else {
      const auto c = uniform_index(rng, spec.num_classes);
      const auto s = uniform_index(rng, spec.sentences_per_doc);
      doc.sentences[s][uniform_index(rng, spec.tokens_per_sentence)] = word(c);
      doc.label = std::to_string(c);
    }
    corpus.documents.push_back(std::move(doc));
  }

  std::vector<std::size_t> order(spec.num_docs);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  shuffle(order.begin(), order.end(), rng);
  const auto n_test = static_cast<std::size_t>(std::llround(spec.test_fraction * static_cast<double>(spec.num_docs)));
  for (std::size_t i = 0; i < n_test && i < order.size(); ++i) corpus.documents[order[i]].split = Split::test;
  return corpus;
}

RawCorpus read_corpus(std::istream& in) {
  RawCorpus corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto fields = split_on(line, '\t');
    if (fields.size() < 3 || fields.size() > 4)
      throw ParseError("expected 3 or 4 tab-separated fields, got " + std::to_string(fields.size()), line_no);
    RawDocument doc;
    doc.id = std::string(fields[0]);
    doc.label = std::string(trim(fields[1]));
    if (doc.id.empty() || doc.label.empty()) throw ParseError("empty id or label", line_no);
    if (fields.size() == 4) {
      try {
        doc.split = parse_split(trim(fields[3]));
      } catch (const ConfigError& e) {
        throw ParseError(e.what(), line_no);
      }
    }

    std::vector<std::string> sentences;
    if (fields[2].find(kSentenceSep) != std::string_view::npos) {
      for (auto s : split_on(fields[2], kSentenceSep)) sentences.emplace_back(s);
    } else {
      try {
        sentences = segment_sentences(fields[2]);
      } catch (const EmptyDocument&) {
        throw EmptyDocument("line " + std::to_string(line_no) + ": document '" + doc.id + "' is empty");
      }
    }
    for (const auto& s : sentences) {
      auto toks = tokenize(s);
      if (!toks.empty()) doc.sentences.push_back(std::move(toks));
    }
    if (doc.sentences.empty())
      throw EmptyDocument("line " + std::to_string(line_no) + ": document '" + doc.id + "' has no tokens");
    corpus.documents.push_back(std::move(doc));
  }
  return corpus;
}

RawCorpus load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open corpus file '" + path + "'");
  return read_corpus(in);
}

void write_corpus(std::ostream& out, const RawCorpus& corpus) {
  for (const auto& d : corpus.documents) {
    out << d.id << '\t' << d.label << '\t';
    for (std::size_t s = 0; s < d.sentences.size(); ++s) {
      if (s > 0) out << kSentenceSep;
      for (std::size_t t = 0; t < d.sentences[s].size(); ++t) {
        if (t > 0) out << ' ';
        out << d.sentences[s][t];
      }
    }
    out << '\t' << split_name(d.split) << '\n';
  }
}

}  // namespace sgsl::text

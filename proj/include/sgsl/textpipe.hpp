#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sgsl/tensor.hpp"

namespace sgsl::text {

using WordId = std::uint32_t;

enum class Split : std::uint8_t { train, val, test };

const char* split_name(Split s) noexcept;
Split parse_split(std::string_view s);

// A document before vocabulary lookup: sentences of lowercase tokens.
struct RawDocument {
  std::string id;
  std::string label;
  std::vector<std::vector<std::string>> sentences;
  Split split = Split::train;
};

struct RawCorpus {
  std::vector<RawDocument> documents;
};

struct Document {
  std::string id;
  std::size_t label = 0;
  std::vector<std::vector<WordId>> sentences;
  Split split = Split::train;

  std::size_t token_count() const noexcept;
};

// Word <-> id map. Id 0 is reserved for out-of-vocabulary words.
class Vocabulary {
 public:
  static constexpr WordId oov = 0;
  static constexpr std::string_view oov_token = "<oov>";

  Vocabulary();
  // Entries in id order, excluding the OOV slot.
  Vocabulary(std::vector<std::string> words, std::vector<std::size_t> counts);

  WordId id_of(std::string_view word) const;
  bool contains(std::string_view word) const;
  const std::string& word_of(WordId id) const;
  std::size_t count_of(WordId id) const;
  std::size_t size() const noexcept { return words_.size(); }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.words_ == b.words_ && a.counts_ == b.counts_;
  }

 private:
  std::vector<std::string> words_;
  std::vector<std::size_t> counts_;
  std::unordered_map<std::string, WordId> index_;
};

struct Corpus {
  std::vector<Document> documents;
  std::size_t num_classes = 0;
  std::vector<std::string> label_names;
  Vocabulary vocab;

  std::vector<std::size_t> indices(Split s) const;
};

struct EmbeddingTable {
  ad::Tensor vectors;         // |V| x d0
  std::size_t found = 0;      // rows read from the file
};

// Breaks after '.', '!' or '?' when followed by whitespace. Throws EmptyDocument
// on whitespace-only input.
std::vector<std::string> segment_sentences(std::string_view raw_text);

// Lowercase whitespace tokens with punctuation stripped from both ends.
std::vector<std::string> tokenize(std::string_view sentence);

// Counts words over non-test documents; ids ordered by (count desc, word asc).
Vocabulary build_vocab(const RawCorpus& corpus, std::size_t min_count);

// Sorted distinct label strings; the class index of a label is its position.
std::vector<std::string> collect_labels(const RawCorpus& corpus);

Corpus encode_corpus(const RawCorpus& corpus, Vocabulary vocab, std::vector<std::string> label_names);

// Rows for words present in the file are copied; every other row (and OOV) is
// uniform in [-0.01, 0.01].
EmbeddingTable load_embeddings(const std::string& path, const Vocabulary& vocab, std::size_t d0, std::uint64_t seed);
EmbeddingTable read_embeddings(std::istream& in, const Vocabulary& vocab, std::size_t d0, std::uint64_t seed);
EmbeddingTable random_embeddings(const Vocabulary& vocab, std::size_t d0, std::uint64_t seed);

struct TrainValSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

// Seeded shuffle; |val| = max(round(fraction * n), 1).
TrainValSplit split_train_val(std::span<const std::size_t> train_docs, double fraction, std::uint64_t seed);

enum class SyntheticTask : std::uint8_t { bag, cross_sentence_xor };

struct SyntheticSpec {
  std::size_t num_docs = 200;
  std::size_t num_classes = 2;
  std::size_t vocab_size = 50;
  std::size_t sentences_per_doc = 2;
  std::size_t tokens_per_sentence = 6;
  SyntheticTask task = SyntheticTask::bag;
  double test_fraction = 0.2;
};

SyntheticTask parse_synthetic_task(std::string_view s);

// `bag`: class c documents contain keyword "w<c>" once.
// `cross_sentence_xor`: marker "w0" may replace a token of sentence 1 and "w1"
// one of sentence 2 (each with probability 1/2); label "1" iff exactly one is present.
RawCorpus generate_synthetic_corpus(const SyntheticSpec& spec, std::uint64_t seed);

// Record layout: id \t label \t sentences [\t split], sentences separated by 0x1F.
RawCorpus read_corpus(std::istream& in);
RawCorpus load_corpus(const std::string& path);
void write_corpus(std::ostream& out, const RawCorpus& corpus);

}  // namespace sgsl::text

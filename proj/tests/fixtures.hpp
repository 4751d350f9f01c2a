#pragma once

#include <vector>

#include "sgsl/graph.hpp"
#include "sgsl/model.hpp"
#include "sgsl/rng.hpp"
#include "sgsl/textpipe.hpp"

namespace sgsl::testing {

inline text::Document make_doc(std::vector<std::vector<text::WordId>> sentences, std::size_t label = 0) {
  text::Document doc;
  doc.id = "doc";
  doc.label = label;
  doc.sentences = std::move(sentences);
  return doc;
}

inline text::Document random_doc(Rng& rng, std::size_t max_sentences, std::size_t max_len, std::size_t vocab,
                                 std::size_t classes = 3) {
  std::vector<std::vector<text::WordId>> sents(1 + uniform_index(rng, max_sentences));
  for (auto& s : sents) {
    s.resize(1 + uniform_index(rng, max_len));
    for (auto& w : s) w = static_cast<text::WordId>(uniform_index(rng, vocab));
  }
  return make_doc(std::move(sents), uniform_index(rng, classes));
}

// Parameters with O(1) embeddings so activations stay well away from zero.
inline model::ModelParams random_model(std::size_t vocab, std::size_t d0, std::size_t hidden, std::size_t layers,
                                       std::size_t classes, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {17}));
  ad::Tensor emb(vocab, d0);
  for (auto& x : emb.data()) x = uniform(rng, -1.0, 1.0);
  auto p = model::init_params({vocab, d0, hidden, layers, classes}, seed, &emb);
  for (auto& x : p.readout_b.data()) x = uniform(rng, -0.5, 0.5);
  return p;
}

inline graph::BatchedGraph batch_docs(const std::vector<text::Document>& docs, graph::Mode mode,
                                      std::size_t window = 3) {
  std::vector<graph::DocumentGraph> gs;
  for (const auto& d : docs) gs.push_back(graph::assemble_document_graph(d, mode, window));
  return graph::batch_graphs(gs);
}

inline text::Corpus synthetic_corpus(text::SyntheticTask task, std::size_t docs, std::uint64_t seed) {
  text::SyntheticSpec spec;
  spec.task = task;
  spec.num_docs = docs;
  auto raw = text::generate_synthetic_corpus(spec, seed);
  return text::encode_corpus(raw, text::build_vocab(raw, 1), text::collect_labels(raw));
}

}  // namespace sgsl::testing

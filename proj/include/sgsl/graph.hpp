#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "sgsl/textpipe.hpp"

namespace sgsl::graph {

using text::WordId;

inline constexpr std::size_t npos = static_cast<std::size_t>(-1);

enum class Mode : std::uint8_t { wordcooc, disjoint, complete, ours };

const char* mode_name(Mode m) noexcept;
Mode parse_mode(std::string_view s);

// Undirected edge stored once with u < v.
struct Edge {
  std::size_t u = 0;
  std::size_t v = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

struct WeightedEdge {
  std::size_t u = 0;
  std::size_t v = 0;
  double weight = 0.0;
  friend bool operator==(const WeightedEdge&, const WeightedEdge&) = default;
};

struct SentenceSubgraph {
  std::size_t sentence_index = 0;
  std::vector<WordId> nodes;          // distinct words in first-occurrence order
  std::vector<WeightedEdge> edges;    // endpoints index `nodes`, sorted by (u, v)
};

struct GraphNode {
  std::size_t sentence = 0;
  WordId word = 0;
  friend bool operator==(const GraphNode&, const GraphNode&) = default;
};

struct DocumentGraph {
  Mode mode = Mode::ours;
  std::size_t label = 0;
  std::vector<GraphNode> nodes;
  std::vector<WeightedEdge> local_edges;   // E_t
  std::vector<Edge> candidate_edges;       // every inter-sentence node pair
  std::vector<double> norm;                // 1 + weighted local degree

  std::size_t num_nodes() const noexcept { return nodes.size(); }
  friend bool operator==(const DocumentGraph&, const DocumentGraph&) = default;
};

// Co-occurrence counts: every pair of positions holding distinct words inside a
// window adds 1 to that word pair. Sentences shorter than the window form one window.
SentenceSubgraph build_sentence_subgraph(std::span<const WordId> tokens, std::size_t window = 3,
                                         std::size_t sentence_index = 0);

DocumentGraph assemble_document_graph(const text::Document& doc, Mode mode, std::size_t window = 3);

std::vector<double> normalization_coefficients(const DocumentGraph& g);

// Several graphs laid out block-diagonally, plus the index arrays consumed by
// the model. Node ranges of graph i are [node_offsets[i], node_offsets[i+1]).
struct BatchedGraph {
  Mode mode = Mode::ours;
  std::vector<GraphNode> nodes;
  std::vector<std::size_t> node_offsets;
  std::vector<std::size_t> graph_of_node;
  std::vector<std::size_t> labels;
  std::vector<double> norm;

  std::vector<WeightedEdge> local_edges;
  std::vector<std::size_t> local_offsets;
  std::vector<Edge> candidate_edges;
  std::vector<std::size_t> candidate_offsets;

  // Local messages u -> v over E_t plus self loops, with e / sqrt(norm_u norm_v).
  std::vector<std::size_t> local_src;
  std::vector<std::size_t> local_dst;
  std::vector<double> local_coef;

  // Scored neighbor pairs (v, j), j in N_t(v) or another sentence; grouped by v,
  // so pairs of node v are [pair_offsets[v], pair_offsets[v+1]).
  std::vector<std::size_t> pair_src;
  std::vector<std::size_t> pair_dst;
  std::vector<std::size_t> pair_offsets;
  std::vector<std::size_t> pair_candidate;  // index into candidate_edges, npos for local pairs
  std::vector<std::size_t> local_pairs;     // pair rows whose neighbor is local

  std::size_t num_graphs() const noexcept { return labels.size(); }
  std::size_t num_nodes() const noexcept { return nodes.size(); }
  std::size_t num_pairs() const noexcept { return pair_src.size(); }
  std::size_t pair_begin(std::size_t g) const { return pair_offsets[node_offsets[g]]; }
  std::size_t pair_end(std::size_t g) const { return pair_offsets[node_offsets[g + 1]]; }
};

BatchedGraph batch_graphs(std::span<const DocumentGraph> graphs);
std::vector<DocumentGraph> unbatch(const BatchedGraph& batch);

// NODE <idx> <sentence> <word> and EDGE <T|C|M> <u> <v> <weight> records.
void write_graph_dump(std::ostream& out, const DocumentGraph& g, const text::Vocabulary& vocab,
                      std::span<const Edge> global_edges = {});

}  // namespace sgsl::graph

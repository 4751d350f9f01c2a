#include "sgsl/graph.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <string>

#include "sgsl/errors.hpp"

namespace sgsl::graph {

const char* mode_name(Mode m) noexcept {
  switch (m) {
    case Mode::wordcooc: return "wordcooc";
    case Mode::disjoint: return "disjoint";
    case Mode::complete: return "complete";
    case Mode::ours: return "ours";
  }
  return "ours";
}

Mode parse_mode(std::string_view s) {
  if (s == "wordcooc") return Mode::wordcooc;
  if (s == "disjoint") return Mode::disjoint;
  if (s == "complete") return Mode::complete;
  if (s == "ours") return Mode::ours;
  throw ConfigError("unknown graph mode '" + std::string(s) + "'");
}

SentenceSubgraph build_sentence_subgraph(std::span<const WordId> tokens, std::size_t window,
                                         std::size_t sentence_index) {
  SGSL_EXPECT(!tokens.empty(), "sentence subgraph needs at least one token");
  SGSL_EXPECT(window >= 2, "co-occurrence window must be at least 2");

  SentenceSubgraph sg;
  sg.sentence_index = sentence_index;
  std::map<WordId, std::size_t> local;
  std::vector<std::size_t> pos_node(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    auto [it, inserted] = local.emplace(tokens[i], sg.nodes.size());
    if (inserted) sg.nodes.push_back(tokens[i]);
    pos_node[i] = it->second;
  }

  std::map<std::pair<std::size_t, std::size_t>, double> weight;
  const std::size_t span = std::min(window, tokens.size());
  for (std::size_t start = 0; start + span <= tokens.size(); ++start) {
    for (std::size_t a = start; a < start + span; ++a)
      for (std::size_t b = a + 1; b < start + span; ++b) {
        auto u = pos_node[a], v = pos_node[b];
        if (u == v) continue;
        if (u > v) std::swap(u, v);
        weight[{u, v}] += 1.0;
      }
  }
  for (const auto& [key, w] : weight) sg.edges.push_back({key.first, key.second, w});
  return sg;
}

std::vector<double> normalization_coefficients(const DocumentGraph& g) {
  std::vector<double> norm(g.nodes.size(), 1.0);
  for (const auto& e : g.local_edges) {
    norm[e.u] += e.weight;
    norm[e.v] += e.weight;
  }
  return norm;
}

DocumentGraph assemble_document_graph(const text::Document& doc, Mode mode, std::size_t window) {
  SGSL_EXPECT(!doc.sentences.empty(), "document has no sentences");
  DocumentGraph g;
  g.mode = mode;
  g.label = doc.label;

  auto append = [&](const SentenceSubgraph& sg) {
    const std::size_t base = g.nodes.size();
    for (WordId w : sg.nodes) g.nodes.push_back({sg.sentence_index, w});
    for (const auto& e : sg.edges) g.local_edges.push_back({base + e.u, base + e.v, e.weight});
  };

  if (mode == Mode::wordcooc) {
    std::vector<WordId> all;
    for (const auto& s : doc.sentences) all.insert(all.end(), s.begin(), s.end());
    append(build_sentence_subgraph(all, window, 0));
  } else {
    for (std::size_t s = 0; s < doc.sentences.size(); ++s) append(build_sentence_subgraph(doc.sentences[s], window, s));
    for (std::size_t u = 0; u < g.nodes.size(); ++u)
      for (std::size_t v = u + 1; v < g.nodes.size(); ++v)
        if (g.nodes[u].sentence != g.nodes[v].sentence) g.candidate_edges.push_back({u, v});
  }
  g.norm = normalization_coefficients(g);
  return g;
}

BatchedGraph batch_graphs(std::span<const DocumentGraph> graphs) {
  SGSL_EXPECT(!graphs.empty(), "batch_graphs: empty graph list");
  BatchedGraph b;
  b.mode = graphs.front().mode;
  b.node_offsets.push_back(0);
  b.local_offsets.push_back(0);
  b.candidate_offsets.push_back(0);
  b.pair_offsets.push_back(0);

  for (std::size_t gi = 0; gi < graphs.size(); ++gi) {
    const auto& g = graphs[gi];
    SGSL_EXPECT(g.mode == b.mode, "batch_graphs: graphs built in different modes");
    SGSL_EXPECT(g.norm.size() == g.nodes.size(), "batch_graphs: normalization missing");
    const std::size_t base = b.nodes.size();
    const std::size_t cand_base = b.candidate_edges.size();
    b.labels.push_back(g.label);
    for (std::size_t v = 0; v < g.nodes.size(); ++v) {
      b.nodes.push_back(g.nodes[v]);
      b.graph_of_node.push_back(gi);
      b.norm.push_back(g.norm[v]);
    }
    for (const auto& e : g.local_edges) b.local_edges.push_back({base + e.u, base + e.v, e.weight});
    for (const auto& e : g.candidate_edges) b.candidate_edges.push_back({base + e.u, base + e.v});

    // Local messages: self loop plus both directions of every local edge.
    for (std::size_t v = 0; v < g.nodes.size(); ++v) {
      b.local_src.push_back(base + v);
      b.local_dst.push_back(base + v);
      b.local_coef.push_back(1.0 / g.norm[v]);
    }
    std::vector<std::vector<std::size_t>> local_adj(g.nodes.size());
    for (const auto& e : g.local_edges) {
      const double c = e.weight / std::sqrt(g.norm[e.u] * g.norm[e.v]);
      b.local_src.push_back(base + e.u);
      b.local_dst.push_back(base + e.v);
      b.local_coef.push_back(c);
      b.local_src.push_back(base + e.v);
      b.local_dst.push_back(base + e.u);
      b.local_coef.push_back(c);
      local_adj[e.u].push_back(e.v);
      local_adj[e.v].push_back(e.u);
    }

    // Scored pairs: N*(v) = local neighbors plus every node of another sentence.
    std::map<Edge, std::size_t> cand_index;
    for (std::size_t c = 0; c < g.candidate_edges.size(); ++c) cand_index.emplace(g.candidate_edges[c], cand_base + c);
    const bool scored = g.mode != Mode::wordcooc;
    for (std::size_t v = 0; v < g.nodes.size(); ++v) {
      if (scored) {
        std::vector<char> is_local(g.nodes.size(), 0);
        for (auto u : local_adj[v]) is_local[u] = 1;
        for (std::size_t j = 0; j < g.nodes.size(); ++j) {
          if (j == v) continue;
          if (is_local[j]) {
            b.local_pairs.push_back(b.pair_src.size());
            b.pair_src.push_back(base + v);
            b.pair_dst.push_back(base + j);
            b.pair_candidate.push_back(npos);
          } else if (g.nodes[j].sentence != g.nodes[v].sentence) {
            b.pair_src.push_back(base + v);
            b.pair_dst.push_back(base + j);
            b.pair_candidate.push_back(cand_index.at(Edge{std::min(v, j), std::max(v, j)}));
          }
        }
      }
      b.pair_offsets.push_back(b.pair_src.size());
    }

    b.node_offsets.push_back(b.nodes.size());
    b.local_offsets.push_back(b.local_edges.size());
    b.candidate_offsets.push_back(b.candidate_edges.size());
  }
  return b;
}

std::vector<DocumentGraph> unbatch(const BatchedGraph& b) {
  std::vector<DocumentGraph> out(b.num_graphs());
  for (std::size_t gi = 0; gi < out.size(); ++gi) {
    auto& g = out[gi];
    g.mode = b.mode;
    g.label = b.labels[gi];
    const auto base = b.node_offsets[gi];
    for (auto v = base; v < b.node_offsets[gi + 1]; ++v) {
      g.nodes.push_back(b.nodes[v]);
      g.norm.push_back(b.norm[v]);
    }
    for (auto k = b.local_offsets[gi]; k < b.local_offsets[gi + 1]; ++k) {
      const auto& e = b.local_edges[k];
      g.local_edges.push_back({e.u - base, e.v - base, e.weight});
    }
    for (auto k = b.candidate_offsets[gi]; k < b.candidate_offsets[gi + 1]; ++k) {
      const auto& e = b.candidate_edges[k];
      g.candidate_edges.push_back({e.u - base, e.v - base});
    }
  }
  return out;
}

void write_graph_dump(std::ostream& out, const DocumentGraph& g, const text::Vocabulary& vocab,
                      std::span<const Edge> global_edges) {
  for (std::size_t v = 0; v < g.nodes.size(); ++v)
    out << "NODE " << v << ' ' << g.nodes[v].sentence << ' ' << vocab.word_of(g.nodes[v].word) << '\n';
  for (const auto& e : g.local_edges) out << "EDGE T " << e.u << ' ' << e.v << ' ' << e.weight << '\n';
  for (const auto& e : g.candidate_edges) out << "EDGE C " << e.u << ' ' << e.v << " 1\n";
  for (const auto& e : global_edges) out << "EDGE M " << e.u << ' ' << e.v << " 1\n";
}

}  // namespace sgsl::graph

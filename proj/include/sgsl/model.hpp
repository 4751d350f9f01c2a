#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "sgsl/graph.hpp"
#include "sgsl/rng.hpp"
#include "sgsl/tape.hpp"
#include "sgsl/textpipe.hpp"

namespace sgsl::model {

using ad::Tape;
using ad::Tensor;
using ad::Var;
using graph::BatchedGraph;
using graph::Edge;

inline constexpr double kLeakySlope = 0.2;
inline constexpr double kProbFloor = 1e-12;

struct LayerParams {
  Tensor w_self;    // b x b, applied to h_v
  Tensor w_local;   // b x b, applied to t_v
  Tensor w_global;  // b x b, applied to m_v
  Tensor w_att;     // b x b attention projection
  Tensor att;       // 2b x 1 attention vector
};

struct ModelParams {
  Tensor embedding;   // |V| x d0
  Tensor input_proj;  // d0 x b
  std::vector<LayerParams> layers;
  Tensor readout_w;   // b x C
  Tensor readout_b;   // 1 x C

  std::size_t hidden() const noexcept { return input_proj.cols(); }
  std::size_t num_classes() const noexcept { return readout_w.cols(); }
  // Stable order shared by tensors(), names() and ModelVars::flat().
  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;
  std::vector<std::string> names() const;

  friend bool operator==(const ModelParams& a, const ModelParams& b);
};

struct ModelShape {
  std::size_t vocab_size = 0;
  std::size_t embedding_dim = 300;
  std::size_t hidden = 96;
  std::size_t layers = 2;
  std::size_t num_classes = 2;
};

// Glorot-uniform weights, zero readout bias. `embedding` (|V| x d0) is copied
// in when given, otherwise drawn uniform in [-0.01, 0.01].
ModelParams init_params(const ModelShape& shape, std::uint64_t seed, const Tensor* embedding = nullptr);

struct LayerVars {
  Var w_self, w_local, w_global, w_att, att;
};

struct ModelVars {
  Var embedding, input_proj;
  std::vector<LayerVars> layers;
  Var readout_w, readout_b;
  std::vector<Var> flat() const;
};

ModelVars bind_params(Tape& tape, const ModelParams& params);
// Inverse of ModelVars::flat() for `layers` layers.
ModelVars vars_from_flat(std::span<const Var> flat, std::size_t layers);

struct HyperParams {
  std::size_t layers = 2;
  double tau = 0.5;
  double threshold = 0.5;
  double lambda = 0.1;
  double dropout = 0.0;
  void validate() const;
};

// Disjoint graphs never select (T = 1), complete graphs always do (T = 0).
double effective_threshold(graph::Mode mode, double threshold) noexcept;

// t_v = sum over N_t(v) and v itself of e_uv / sqrt(norm_u norm_v) h_u.
Var local_aggregate(Tape& tape, const BatchedGraph& g, Var h);

// Learned inter-sentence edges accumulated across layers.
struct GlobalEdgeState {
  std::vector<std::uint8_t> selected;  // per candidate edge of the batch
  std::size_t count = 0;
  Var weights;                         // candidates x 1; invalid until the first selection

  explicit GlobalEdgeState(const BatchedGraph& g) : selected(g.candidate_edges.size(), 0) {}
  std::vector<Edge> edges(const BatchedGraph& g) const;
};

// m_v = sum over selected global neighbors z of e_zv / sqrt(norm_z norm_v) h_z.
// Zero rows when nothing is selected.
Var global_aggregate(Tape& tape, const BatchedGraph& g, const GlobalEdgeState& state, Var h);

// ReLU(h W_self + t W_local + m W_global), then dropout when a mask is given.
// An invalid `m` drops the global term.
Var joint_update(Tape& tape, Var h, Var t, Var m, const LayerVars& layer, const Tensor* dropout_mask);

struct ScoreTable {
  Var attention;  // a*_{v,j} per scored pair, LeakyReLU(att^T [h_v W || h_j W])
  Var scores;     // s_{v,j}: softmax of attention over each node's pairs
};

ScoreTable candidate_scores(Tape& tape, const BatchedGraph& g, Var h, const LayerVars& layer);

// G = -log(-log U) with U clamped to [1e-12, 1 - 1e-12].
double gumbel_from_uniform(double u) noexcept;
Tensor sample_gumbel(std::size_t rows, std::size_t cols, Rng& rng);

struct GumbelNoise {
  Tensor g1;  // noise on the "select" logit
  Tensor g0;  // noise on the "skip" logit
  static GumbelNoise zeros(std::size_t n) { return {Tensor(n, 1), Tensor(n, 1)}; }
};

struct SelectorSample {
  Var p_soft;                        // relaxed p-hat per scored pair
  std::vector<std::uint8_t> p_hard;  // [p-hat >= T]
  double threshold = 0.5;
};

// p-hat = softmax over {select, skip} of (log pi + g) / tau with pi_1 = s.
// T >= 1 never selects and T <= 0 always does, independent of rounding.
SelectorSample gumbel_select(Tape& tape, Var scores, const GumbelNoise& noise, double tau, double threshold);

// Adds every candidate pair whose selector fired; an undirected edge is added
// when either direction fires. Forward weight is 1 (soft p-hat when `relaxed`),
// backward goes through p-hat. Returns the number of new edges.
std::size_t update_global_neighbors(Tape& tape, const BatchedGraph& g, const SelectorSample& sample,
                                    GlobalEdgeState& state, bool relaxed = false);

// Sum of -p log p over the given rows of p_soft, p clamped to [1e-12, 1].
Var entropy_regularizer(Tape& tape, Var p_soft, std::span<const std::size_t> rows);

struct LossBreakdown {
  double pred = 0.0;
  std::vector<double> reg;  // per layer, averaged over graphs in the batch
  double lambda = 0.0;
  double total = 0.0;
};

struct Readout {
  Var logits;
  Var pred_loss;
  Var total;
  LossBreakdown losses;
};

// Sum pooling per graph, linear classifier, mean cross-entropy plus
// lambda * mean_k L_reg^(k).
Readout readout_and_loss(Tape& tape, const BatchedGraph& g, Var h, const ModelVars& vars,
                         std::span<const Var> reg_per_layer, double lambda);

struct ForwardOptions {
  bool training = false;
  // Soft p-hat replaces the hard selector as edge weight (gradient checking).
  bool relaxed = false;
  bool trace = false;
};

struct LayerTrace {
  std::vector<double> attention;
  std::vector<double> scores;
  std::vector<double> p_soft;
  std::vector<std::uint8_t> p_hard;
  Tensor g1, g0;
  std::vector<Edge> global_edges;  // E_m after this layer
};

struct ForwardResult {
  ModelVars vars;
  Var logits;
  Var total;
  Var final_h;
  LossBreakdown losses;
  std::vector<Edge> global_edges;   // final E_m, batch node indices
  std::vector<LayerTrace> layers;   // filled when options.trace
  // Smallest |p-hat - T| over undecided candidates; the hard structure is
  // locally constant when this exceeds the finite-difference step.
  double min_margin = std::numeric_limits<double>::infinity();
};

// Per-graph seeds make each graph's noise and dropout independent of batching.
ForwardResult forward_document(Tape& tape, const BatchedGraph& g, const ModelParams& params, const HyperParams& hyper,
                               const ForwardOptions& options, std::span<const std::uint64_t> graph_seeds);
// Same, on parameter handles already bound to `tape` (result.vars == vars).
ForwardResult forward_document(Tape& tape, const BatchedGraph& g, const ModelParams& params, const ModelVars& vars,
                               const HyperParams& hyper, const ForwardOptions& options,
                               std::span<const std::uint64_t> graph_seeds);

std::vector<std::size_t> predictions(const Tensor& logits);

}  // namespace sgsl::model

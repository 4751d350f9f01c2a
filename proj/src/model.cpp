#include "sgsl/model.hpp"

#include <algorithm>
#include <cmath>

#include "sgsl/errors.hpp"

namespace sgsl::model {

namespace {

Tensor glorot(std::size_t rows, std::size_t cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Tensor t(rows, cols);
  for (auto& x : t.data()) x = uniform(rng, -limit, limit);
  return t;
}

Tensor dropout_mask(std::size_t rows, std::size_t cols, double rate, Rng& rng) {
  Tensor mask(rows, cols);
  if (rate >= 1.0) return mask;
  const double keep = 1.0 / (1.0 - rate);
  for (auto& x : mask.data()) x = uniform01(rng) < rate ? 0.0 : keep;
  return mask;
}

std::vector<double> column_values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

std::vector<Tensor*> ModelParams::tensors() {
  std::vector<Tensor*> out{&embedding, &input_proj};
  for (auto& l : layers)
    for (Tensor* t : {&l.w_self, &l.w_local, &l.w_global, &l.w_att, &l.att}) out.push_back(t);
  out.push_back(&readout_w);
  out.push_back(&readout_b);
  return out;
}

std::vector<const Tensor*> ModelParams::tensors() const {
  auto mut = const_cast<ModelParams*>(this)->tensors();
  return {mut.begin(), mut.end()};
}

std::vector<std::string> ModelParams::names() const {
  std::vector<std::string> out{"embedding", "input_proj"};
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const std::string p = "layer" + std::to_string(k) + ".";
    for (const char* n : {"w_self", "w_local", "w_global", "w_att", "att"}) out.push_back(p + n);
  }
  out.push_back("readout_w");
  out.push_back("readout_b");
  return out;
}

bool operator==(const ModelParams& a, const ModelParams& b) {
  auto ta = a.tensors(), tb = b.tensors();
  if (ta.size() != tb.size()) return false;
  for (std::size_t i = 0; i < ta.size(); ++i)
    if (!(*ta[i] == *tb[i])) return false;
  return true;
}

ModelParams init_params(const ModelShape& shape, std::uint64_t seed, const Tensor* embedding) {
  SGSL_EXPECT(shape.vocab_size > 0 && shape.embedding_dim > 0, "init_params: empty embedding shape");
  SGSL_EXPECT(shape.hidden > 0 && shape.layers > 0 && shape.num_classes > 0, "init_params: empty model shape");
  Rng rng(seed);
  ModelParams p;
  if (embedding) {
    SGSL_EXPECT(embedding->rows() == shape.vocab_size && embedding->cols() == shape.embedding_dim,
                "init_params: embedding table shape mismatch");
    p.embedding = *embedding;
  } else {
    p.embedding = Tensor(shape.vocab_size, shape.embedding_dim);
    for (auto& x : p.embedding.data()) x = uniform(rng, -0.01, 0.01);
  }
  const auto b = shape.hidden;
  p.input_proj = glorot(shape.embedding_dim, b, rng);
  for (std::size_t k = 0; k < shape.layers; ++k) {
    LayerParams l;
    l.w_self = glorot(b, b, rng);
    l.w_local = glorot(b, b, rng);
    l.w_global = glorot(b, b, rng);
    l.w_att = glorot(b, b, rng);
    l.att = glorot(2 * b, 1, rng);
    p.layers.push_back(std::move(l));
  }
  p.readout_w = glorot(b, shape.num_classes, rng);
  p.readout_b = Tensor(1, shape.num_classes);
  return p;
}

std::vector<Var> ModelVars::flat() const {
  std::vector<Var> out{embedding, input_proj};
  for (const auto& l : layers)
    for (Var v : {l.w_self, l.w_local, l.w_global, l.w_att, l.att}) out.push_back(v);
  out.push_back(readout_w);
  out.push_back(readout_b);
  return out;
}

ModelVars bind_params(Tape& tape, const ModelParams& p) {
  ModelVars v;
  v.embedding = tape.parameter(p.embedding);
  v.input_proj = tape.parameter(p.input_proj);
  for (const auto& l : p.layers)
    v.layers.push_back({tape.parameter(l.w_self), tape.parameter(l.w_local), tape.parameter(l.w_global),
                        tape.parameter(l.w_att), tape.parameter(l.att)});
  v.readout_w = tape.parameter(p.readout_w);
  v.readout_b = tape.parameter(p.readout_b);
  return v;
}

ModelVars vars_from_flat(std::span<const Var> flat, std::size_t layers) {
  SGSL_EXPECT(flat.size() == 4 + 5 * layers, "vars_from_flat: wrong number of handles");
  ModelVars v;
  v.embedding = flat[0];
  v.input_proj = flat[1];
  for (std::size_t k = 0; k < layers; ++k) {
    const auto* l = &flat[2 + 5 * k];
    v.layers.push_back({l[0], l[1], l[2], l[3], l[4]});
  }
  v.readout_w = flat[flat.size() - 2];
  v.readout_b = flat[flat.size() - 1];
  return v;
}

void HyperParams::validate() const {
  if (layers == 0) throw ConfigError("number of layers must be positive");
  if (!(tau > 0.0)) throw ConfigError("Gumbel temperature must be > 0");
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("threshold must lie in [0, 1]");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  if (!(dropout >= 0.0 && dropout <= 1.0)) throw ConfigError("dropout rate must lie in [0, 1]");
}

double effective_threshold(graph::Mode mode, double threshold) noexcept {
  switch (mode) {
    case graph::Mode::disjoint: return 1.0;
    case graph::Mode::complete: return 0.0;
    default: return threshold;
  }
}

Var local_aggregate(Tape& tape, const BatchedGraph& g, Var h) {
  SGSL_EXPECT(tape.value(h).rows() == g.num_nodes(), "local_aggregate: feature rows != nodes");
  Var coef = tape.constant(Tensor::column(g.local_coef));
  Var msg = tape.mul(tape.gather_rows(h, g.local_src), coef);
  return tape.scatter_add_rows(msg, g.local_dst, g.num_nodes());
}

std::vector<Edge> GlobalEdgeState::edges(const BatchedGraph& g) const {
  std::vector<Edge> out;
  for (std::size_t c = 0; c < selected.size(); ++c)
    if (selected[c]) out.push_back(g.candidate_edges[c]);
  return out;
}

Var global_aggregate(Tape& tape, const BatchedGraph& g, const GlobalEdgeState& state, Var h) {
  const auto& hv = tape.value(h);
  SGSL_EXPECT(hv.rows() == g.num_nodes(), "global_aggregate: feature rows != nodes");
  if (state.count == 0) return tape.constant(Tensor(hv.rows(), hv.cols()));
  std::vector<std::size_t> src, dst, edge;
  std::vector<double> coef;
  for (std::size_t c = 0; c < state.selected.size(); ++c) {
    if (!state.selected[c]) continue;
    const auto [u, v] = g.candidate_edges[c];
    const double k = 1.0 / std::sqrt(g.norm[u] * g.norm[v]);
    src.insert(src.end(), {u, v});
    dst.insert(dst.end(), {v, u});
    edge.insert(edge.end(), {c, c});
    coef.insert(coef.end(), {k, k});
  }
  Var w = tape.mul(tape.gather_rows(state.weights, std::move(edge)), tape.constant(Tensor::column(coef)));
  Var msg = tape.mul(tape.gather_rows(h, std::move(src)), w);
  return tape.scatter_add_rows(msg, std::move(dst), g.num_nodes());
}

Var joint_update(Tape& tape, Var h, Var t, Var m, const LayerVars& layer, const Tensor* mask) {
  Var z = tape.add(tape.matmul(h, layer.w_self), tape.matmul(t, layer.w_local));
  if (m.valid()) z = tape.add(z, tape.matmul(m, layer.w_global));
  Var out = tape.relu(z);
  if (mask) out = tape.dropout(out, *mask);
  return out;
}

ScoreTable candidate_scores(Tape& tape, const BatchedGraph& g, Var h, const LayerVars& layer) {
  SGSL_EXPECT(g.num_pairs() > 0, "candidate_scores: batch has no scored pairs");
  Var z = tape.matmul(h, layer.w_att);
  Var cat = tape.concat_cols(tape.gather_rows(z, g.pair_src), tape.gather_rows(z, g.pair_dst));
  ScoreTable st;
  st.attention = tape.leaky_relu(tape.matmul(cat, layer.att), kLeakySlope);
  st.scores = tape.segment_softmax(st.attention, g.pair_offsets);
  return st;
}

double gumbel_from_uniform(double u) noexcept {
  u = std::clamp(u, kProbFloor, 1.0 - kProbFloor);
  return -std::log(-std::log(u));
}

Tensor sample_gumbel(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor t(rows, cols);
  for (auto& x : t.data()) x = gumbel_from_uniform(uniform01(rng));
  return t;
}

SelectorSample gumbel_select(Tape& tape, Var scores, const GumbelNoise& noise, double tau, double threshold) {
  if (!(tau > 0.0)) throw ConfigError("Gumbel temperature must be > 0");
  const auto n = tape.value(scores).rows();
  SGSL_EXPECT(tape.value(scores).cols() == 1, "gumbel_select: scores must be a column");
  SGSL_EXPECT(noise.g1.rows() == n && noise.g0.rows() == n, "gumbel_select: noise shape mismatch");

  Var pi1 = tape.clamp(scores, kProbFloor, 1.0 - kProbFloor);
  Var pi0 = tape.add(tape.constant(Tensor(n, 1, 1.0)), tape.scale(pi1, -1.0));
  Var l1 = tape.scale(tape.add(tape.log(pi1), tape.constant(noise.g1)), 1.0 / tau);
  Var l0 = tape.scale(tape.add(tape.log(pi0), tape.constant(noise.g0)), 1.0 / tau);
  Var probs = tape.row_softmax(tape.concat_cols(l1, l0));

  SelectorSample s;
  s.threshold = threshold;
  s.p_soft = tape.matmul(probs, tape.constant(Tensor{{1.0}, {0.0}}));
  const auto& p = tape.value(s.p_soft);
  s.p_hard.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    s.p_hard[i] = threshold <= 0.0 ? 1 : threshold >= 1.0 ? 0 : static_cast<std::uint8_t>(p(i, 0) >= threshold);
  return s;
}

std::size_t update_global_neighbors(Tape& tape, const BatchedGraph& g, const SelectorSample& sample,
                                    GlobalEdgeState& state, bool relaxed) {
  SGSL_EXPECT(sample.p_hard.size() == g.num_pairs(), "update_global_neighbors: selector size mismatch");
  const auto ncand = g.candidate_edges.size();
  std::vector<std::size_t> fired, fired_cand;
  std::vector<std::uint8_t> directions(ncand, 0);
  for (std::size_t p = 0; p < g.num_pairs(); ++p) {
    const auto c = g.pair_candidate[p];
    if (c == graph::npos || state.selected[c] || !sample.p_hard[p]) continue;
    fired.push_back(p);
    fired_cand.push_back(c);
    ++directions[c];
  }
  if (fired.empty()) return 0;

  std::vector<double> share(fired.size());
  for (std::size_t i = 0; i < fired.size(); ++i) share[i] = 1.0 / directions[fired_cand[i]];
  Var picked = tape.mul(tape.gather_rows(sample.p_soft, std::move(fired)), tape.constant(Tensor::column(share)));
  Var soft = tape.scatter_add_rows(picked, fired_cand, ncand);

  std::size_t added = 0;
  Tensor hard(ncand, 1);
  for (std::size_t c = 0; c < ncand; ++c) {
    if (!directions[c]) continue;
    hard(c, 0) = 1.0;
    state.selected[c] = 1;
    ++added;
  }
  Var fresh = relaxed ? soft : tape.straight_through(std::move(hard), soft);
  state.weights = state.weights.valid() ? tape.add(state.weights, fresh) : fresh;
  state.count += added;
  return added;
}

Var entropy_regularizer(Tape& tape, Var p_soft, std::span<const std::size_t> rows) {
  if (rows.empty()) return tape.constant(Tensor::scalar(0.0));
  Var p = tape.clamp(tape.gather_rows(p_soft, {rows.begin(), rows.end()}), kProbFloor, 1.0);
  return tape.scale(tape.sum(tape.mul(p, tape.log(p))), -1.0);
}

Readout readout_and_loss(Tape& tape, const BatchedGraph& g, Var h, const ModelVars& vars,
                         std::span<const Var> reg_per_layer, double lambda) {
  SGSL_EXPECT(g.num_graphs() > 0, "readout: empty batch");
  Readout r;
  Var pooled = tape.scatter_add_rows(h, g.graph_of_node, g.num_graphs());
  Var bias = tape.gather_rows(vars.readout_b, std::vector<std::size_t>(g.num_graphs(), 0));
  r.logits = tape.add(tape.matmul(pooled, vars.readout_w), bias);
  r.pred_loss = tape.cross_entropy(r.logits, g.labels);
  r.total = r.pred_loss;
  r.losses.lambda = lambda;
  r.losses.pred = tape.value(r.pred_loss).item();
  for (Var reg : reg_per_layer) r.losses.reg.push_back(tape.value(reg).item());
  if (lambda != 0.0 && !reg_per_layer.empty()) {
    Var acc = reg_per_layer[0];
    for (std::size_t k = 1; k < reg_per_layer.size(); ++k) acc = tape.add(acc, reg_per_layer[k]);
    r.total = tape.add(r.pred_loss, tape.scale(acc, lambda / static_cast<double>(reg_per_layer.size())));
  }
  r.losses.total = tape.value(r.total).item();
  return r;
}

ForwardResult forward_document(Tape& tape, const BatchedGraph& g, const ModelParams& params, const HyperParams& hyper,
                               const ForwardOptions& options, std::span<const std::uint64_t> graph_seeds) {
  return forward_document(tape, g, params, bind_params(tape, params), hyper, options, graph_seeds);
}

ForwardResult forward_document(Tape& tape, const BatchedGraph& g, const ModelParams& params, const ModelVars& bound,
                               const HyperParams& hyper, const ForwardOptions& options,
                               std::span<const std::uint64_t> graph_seeds) {
  hyper.validate();
  SGSL_EXPECT(params.layers.size() == hyper.layers, "forward: parameter layers != hyper.layers");
  SGSL_EXPECT(graph_seeds.size() == g.num_graphs(), "forward: need one seed per graph");
  SGSL_EXPECT(g.num_nodes() > 0, "forward: empty batch");

  ForwardResult out;
  SGSL_EXPECT(bound.layers.size() == params.layers.size(), "forward: bound handles do not match parameters");
  out.vars = bound;
  const auto& vars = out.vars;
  const auto b = params.hidden();

  std::vector<std::size_t> words(g.num_nodes());
  for (std::size_t v = 0; v < words.size(); ++v) {
    words[v] = g.nodes[v].word;
    SGSL_EXPECT(words[v] < params.embedding.rows(), "forward: word id outside embedding table");
  }
  Var h = tape.matmul(tape.gather_rows(vars.embedding, std::move(words)), vars.input_proj);

  std::vector<Rng> rngs;
  for (auto s : graph_seeds) rngs.emplace_back(s);

  const bool scoring = g.mode != graph::Mode::wordcooc && g.num_pairs() > 0;
  const double threshold = effective_threshold(g.mode, hyper.threshold);
  const bool use_dropout = options.training && hyper.dropout > 0.0;
  const double inv_graphs = 1.0 / static_cast<double>(g.num_graphs());
  GlobalEdgeState state(g);
  std::vector<Var> regs;

  for (std::size_t k = 0; k < hyper.layers; ++k) {
    const auto& lv = vars.layers[k];
    GumbelNoise noise = GumbelNoise::zeros(g.num_pairs());
    Tensor mask;
    if (options.training) {
      if (use_dropout) mask = Tensor(g.num_nodes(), b);
      for (std::size_t gi = 0; gi < g.num_graphs(); ++gi) {
        auto& rng = rngs[gi];
        if (scoring)
          for (auto p = g.pair_begin(gi); p < g.pair_end(gi); ++p) {
            noise.g1(p, 0) = gumbel_from_uniform(uniform01(rng));
            noise.g0(p, 0) = gumbel_from_uniform(uniform01(rng));
          }
        if (use_dropout) {
          const auto lo = g.node_offsets[gi], hi = g.node_offsets[gi + 1];
          Tensor part = dropout_mask(hi - lo, b, hyper.dropout, rng);
          std::copy(part.data().begin(), part.data().end(), mask.data().begin() + static_cast<long>(lo * b));
        }
      }
    }

    LayerTrace trace;
    if (scoring) {
      auto st = candidate_scores(tape, g, h, lv);
      auto sel = gumbel_select(tape, st.scores, noise, hyper.tau, threshold);
      if (threshold > 0.0 && threshold < 1.0) {
        const auto& p = tape.value(sel.p_soft);
        for (std::size_t i = 0; i < g.num_pairs(); ++i) {
          const auto c = g.pair_candidate[i];
          if (c != graph::npos && !state.selected[c])
            out.min_margin = std::min(out.min_margin, std::abs(p(i, 0) - threshold));
        }
      }
      update_global_neighbors(tape, g, sel, state, options.relaxed);
      regs.push_back(tape.scale(entropy_regularizer(tape, sel.p_soft, g.local_pairs), inv_graphs));
      if (options.trace) {
        trace.attention = column_values(tape.value(st.attention));
        trace.scores = column_values(tape.value(st.scores));
        trace.p_soft = column_values(tape.value(sel.p_soft));
        trace.p_hard = sel.p_hard;
        trace.g1 = noise.g1;
        trace.g0 = noise.g0;
      }
    } else {
      regs.push_back(tape.constant(Tensor::scalar(0.0)));
    }

    Var t = local_aggregate(tape, g, h);
    Var m = state.count > 0 ? global_aggregate(tape, g, state, h) : Var{};
    h = joint_update(tape, h, t, m, lv, use_dropout ? &mask : nullptr);
    if (options.trace) {
      trace.global_edges = state.edges(g);
      out.layers.push_back(std::move(trace));
    }
  }

  auto r = readout_and_loss(tape, g, h, vars, regs, hyper.lambda);
  out.logits = r.logits;
  out.total = r.total;
  out.final_h = h;
  out.losses = std::move(r.losses);
  out.global_edges = state.edges(g);
  return out;
}

std::vector<std::size_t> predictions(const Tensor& logits) {
  std::vector<std::size_t> out(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto row = logits.row(i);
    out[i] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

}  // namespace sgsl::model

#include <cmath>
#include <numeric>
#include <set>

#include "doctest.h"
#include "fixtures.hpp"
#include "oracles.hpp"
#include "sgsl/errors.hpp"
#include "sgsl/model.hpp"
#include "sgsl/optim.hpp"

using namespace sgsl;
using namespace sgsl::model;
using graph::Mode;
using testing::batch_docs;
using testing::make_doc;

namespace {

constexpr text::WordId a = 1, b = 2, c = 3, d = 4;

std::vector<std::uint64_t> seeds_for(std::size_t n, std::uint64_t base = 5) {
  std::vector<std::uint64_t> s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = derive_seed(base, {i});
  return s;
}

Tensor random_features(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor t(rows, cols);
  for (auto& x : t.data()) x = uniform(rng, -1.0, 1.0);
  return t;
}

HyperParams hyper_with(std::size_t layers, double tau, double threshold, double lambda = 0.1) {
  HyperParams h;
  h.layers = layers;
  h.tau = tau;
  h.threshold = threshold;
  h.lambda = lambda;
  return h;
}

Tensor rows_of(const Tensor& t, std::size_t lo, std::size_t hi) {
  Tensor out(hi - lo, t.cols());
  for (std::size_t r = lo; r < hi; ++r)
    for (std::size_t col = 0; col < t.cols(); ++col) out(r - lo, col) = t(r, col);
  return out;
}

}  // namespace

TEST_CASE("local_aggregate examples") {
  Tape tape;
  auto iso = batch_docs({make_doc({{a}})}, Mode::ours);
  Var x = tape.constant(Tensor{{3.0, -1.0}});
  CHECK(tape.value(local_aggregate(tape, iso, x)) == Tensor{{3.0, -1.0}});

  auto pair = batch_docs({make_doc({{a, b}})}, Mode::ours);
  Var h = tape.constant(Tensor{{1.0, 0.0}, {0.0, 1.0}});
  auto t = tape.value(local_aggregate(tape, pair, h));
  CHECK(t == Tensor{{0.5, 0.5}, {0.5, 0.5}});
}

TEST_CASE("local_aggregate matches the dense normalized adjacency") {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    auto doc = testing::random_doc(rng, 3, 5, 10);
    auto g = graph::assemble_document_graph(doc, Mode::ours, 2 + uniform_index(rng, 3));
    if (g.num_nodes() > 12) continue;
    auto batch = graph::batch_graphs(std::span(&g, 1));
    Tape tape;
    Tensor h = random_features(g.num_nodes(), 4, rng);
    auto got = tape.value(local_aggregate(tape, batch, tape.constant(h)));
    auto want = testing::dense_matmul(testing::dense_local_operator(g), h);
    CHECK(ad::max_abs_diff(got, want) < 1e-10);
  }
}

TEST_CASE("global_aggregate examples") {
  auto batch = batch_docs({make_doc({{a}, {b}})}, Mode::ours);
  REQUIRE(batch.candidate_edges.size() == 1);
  Tape tape;
  Var h = tape.constant(Tensor{{5.0, 5.0}, {2.0, 0.0}});
  GlobalEdgeState state(batch);
  CHECK(tape.value(global_aggregate(tape, batch, state, h)) == Tensor(2, 2));

  state.selected[0] = 1;
  state.count = 1;
  state.weights = tape.constant(Tensor::column({1.0}));
  auto m = tape.value(global_aggregate(tape, batch, state, h));
  CHECK(m(0, 0) == 2.0);
  CHECK(m(0, 1) == 0.0);
}

TEST_CASE("global_aggregate matches the dense operator") {
  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    auto g = graph::assemble_document_graph(testing::random_doc(rng, 3, 4, 8), Mode::ours, 3);
    auto batch = graph::batch_graphs(std::span(&g, 1));
    Tape tape;
    GlobalEdgeState state(batch);
    std::vector<graph::Edge> chosen;
    for (std::size_t k = 0; k < batch.candidate_edges.size(); ++k)
      if (uniform01(rng) < 0.4) {
        state.selected[k] = 1;
        ++state.count;
        chosen.push_back(batch.candidate_edges[k]);
      }
    state.weights = tape.constant(Tensor(batch.candidate_edges.size(), 1, 1.0));
    Tensor h = random_features(g.num_nodes(), 3, rng);
    auto got = tape.value(global_aggregate(tape, batch, state, tape.constant(h)));
    auto want = testing::dense_matmul(testing::dense_global_operator(g, chosen), h);
    CHECK(ad::max_abs_diff(got, want) < 1e-10);
  }
}

TEST_CASE("joint_update examples and dense oracle") {
  Tape tape;
  Tensor eye{{1.0, 0.0}, {0.0, 1.0}};
  Tensor zero(2, 2);
  Tensor h{{0.5, 2.0}, {0.0, 1.5}};
  LayerVars id{tape.constant(eye), tape.constant(zero), tape.constant(zero), Var{}, Var{}};
  Var hv = tape.constant(h);
  CHECK(tape.value(joint_update(tape, hv, tape.constant(Tensor{{9, 9}, {9, 9}}), hv, id, nullptr)) == h);

  LayerVars nothing{tape.constant(zero), tape.constant(zero), tape.constant(zero), Var{}, Var{}};
  CHECK(tape.value(joint_update(tape, hv, hv, hv, nothing, nullptr)) == zero);

  Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor hh = random_features(5, 3, rng), t = random_features(5, 3, rng), m = random_features(5, 3, rng);
    Tensor w1 = random_features(3, 3, rng), w2 = random_features(3, 3, rng), w3 = random_features(3, 3, rng);
    LayerVars lv{tape.constant(w1), tape.constant(w2), tape.constant(w3), Var{}, Var{}};
    auto got = tape.value(joint_update(tape, tape.constant(hh), tape.constant(t), tape.constant(m), lv, nullptr));
    using testing::dense_add, testing::dense_matmul;
    auto want = testing::dense_relu(
        dense_add(dense_add(dense_matmul(hh, w1), dense_matmul(t, w2)), dense_matmul(m, w3)));
    CHECK(ad::max_abs_diff(got, want) < 1e-10);
  }
}

TEST_CASE("joint_update applies the dropout mask") {
  Tape tape;
  Tensor eye{{1.0, 0.0}, {0.0, 1.0}};
  LayerVars id{tape.constant(eye), tape.constant(Tensor(2, 2)), tape.constant(Tensor(2, 2)), Var{}, Var{}};
  Var h = tape.constant(Tensor{{1.0, 2.0}, {3.0, 4.0}});
  Tensor mask{{2.0, 0.0}, {0.0, 2.0}};
  CHECK(tape.value(joint_update(tape, h, h, Var{}, id, &mask)) == Tensor{{2.0, 0.0}, {0.0, 8.0}});
}

TEST_CASE("candidate_scores examples") {
  // Three single-word sentences: every node scores the two others.
  auto batch = batch_docs({make_doc({{a}, {b}, {c}})}, Mode::ours);
  REQUIRE(batch.num_pairs() == 6);
  Tape tape;
  LayerVars lv;
  lv.w_att = tape.constant(Tensor{{1.0}});

  lv.att = tape.constant(Tensor{{0.0}, {0.0}});
  auto uniform_scores = tape.value(candidate_scores(tape, batch, tape.constant(Tensor{{1.0}, {2.0}, {3.0}}), lv).scores);
  for (double s : uniform_scores.data()) CHECK(s == 0.5);

  lv.att = tape.constant(Tensor{{0.0}, {1.0}});
  auto st = candidate_scores(tape, batch, tape.constant(Tensor{{0.0}, {std::log(2.0)}, {0.0}}), lv);
  auto s = tape.value(st.scores);
  REQUIRE(batch.pair_dst[0] == 1);
  CHECK(tape.value(st.attention)(0, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(s(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(s(1, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));

  auto single = batch_docs({make_doc({{a}, {b}})}, Mode::ours);
  auto one = tape.value(candidate_scores(tape, single, tape.constant(Tensor{{0.3}, {-0.7}}), lv).scores);
  CHECK(one == Tensor{{1.0}, {1.0}});
}

TEST_CASE("score rows sum to one and lie in (0, 1]") {
  Rng rng(14);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<text::Document> docs;
    for (int i = 0; i < 3; ++i) docs.push_back(testing::random_doc(rng, 4, 5, 12));
    auto batch = batch_docs(docs, Mode::ours);
    if (batch.num_pairs() == 0) continue;
    auto p = testing::random_model(12, 4, 4, 1, 2, 100 + trial);
    Tape tape;
    auto vars = bind_params(tape, p);
    Var h = tape.constant(random_features(batch.num_nodes(), 4, rng));
    auto s = tape.value(candidate_scores(tape, batch, h, vars.layers[0]).scores);
    for (std::size_t v = 0; v < batch.num_nodes(); ++v) {
      const auto lo = batch.pair_offsets[v], hi = batch.pair_offsets[v + 1];
      if (lo == hi) continue;
      double sum = 0.0;
      for (auto q = lo; q < hi; ++q) {
        CHECK(s(q, 0) > 0.0);
        CHECK(s(q, 0) <= 1.0);
        if (hi - lo > 1) CHECK(s(q, 0) < 1.0);
        sum += s(q, 0);
      }
      CHECK(std::abs(sum - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("sample_gumbel transform and mean") {
  CHECK(gumbel_from_uniform(std::exp(-1.0)) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(gumbel_from_uniform(std::exp(-std::exp(1.0))) == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(std::isfinite(gumbel_from_uniform(0.0)));
  CHECK(std::isfinite(gumbel_from_uniform(1.0)));

  Rng rng(15);
  auto g = sample_gumbel(100000, 1, rng);
  const double mean = std::accumulate(g.data().begin(), g.data().end(), 0.0) / 1e5;
  CHECK(std::abs(mean - 0.5772156649) < 0.02);
}

TEST_CASE("gumbel_select examples") {
  Tape tape;
  auto p_of = [&](double pi, double tau) {
    auto s = gumbel_select(tape, tape.constant(Tensor::column({pi})), GumbelNoise::zeros(1), tau, 0.5);
    return tape.value(s.p_soft)(0, 0);
  };
  for (double tau : {0.01, 0.3, 1.0, 5.0}) CHECK(p_of(0.5, tau) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(p_of(0.8, 1.0) == doctest::Approx(0.8).epsilon(1e-14));
  CHECK(p_of(0.8, 1e-3) > 1.0 - 1e-12);
  CHECK(p_of(0.8, 0.1) > p_of(0.8, 1.0));

  Var s = tape.constant(Tensor::column({0.999999, 0.5, 1e-9}));
  auto all = gumbel_select(tape, s, GumbelNoise::zeros(3), 0.5, 0.0);
  CHECK(all.p_hard == std::vector<std::uint8_t>{1, 1, 1});
  auto none = gumbel_select(tape, tape.constant(Tensor::column({1.0, 0.5})), GumbelNoise::zeros(2), 1e-3, 1.0);
  CHECK(none.p_hard == std::vector<std::uint8_t>{0, 0});
  CHECK_THROWS_AS(gumbel_select(tape, s, GumbelNoise::zeros(3), 0.0, 0.5), ConfigError);
  CHECK_THROWS_AS(gumbel_select(tape, s, GumbelNoise::zeros(3), -1.0, 0.5), ConfigError);
}

TEST_CASE("hard selector agrees with the threshold") {
  Rng rng(16);
  Tape tape;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> pis(10);
    for (auto& x : pis) x = uniform(rng, 0.01, 0.99);
    GumbelNoise noise{sample_gumbel(10, 1, rng), sample_gumbel(10, 1, rng)};
    const double thr = uniform(rng, 0.05, 0.95);
    auto sel = gumbel_select(tape, tape.constant(Tensor::column(pis)), noise, uniform(rng, 0.05, 2.0), thr);
    const auto& p = tape.value(sel.p_soft);
    for (std::size_t i = 0; i < 10; ++i) {
      CHECK(p(i, 0) >= 0.0);
      CHECK(p(i, 0) <= 1.0);
      CHECK((sel.p_hard[i] == 1) == (p(i, 0) >= thr));
    }
  }
}

TEST_CASE("sampler calibration: P(p-hat >= 0.5) equals pi at tau 1") {
  Rng rng(17);
  for (double pi : {0.1, 0.3, 0.5, 0.8}) {
    Tape tape;
    const std::size_t n = 10000;
    GumbelNoise noise{sample_gumbel(n, 1, rng), sample_gumbel(n, 1, rng)};
    auto sel = gumbel_select(tape, tape.constant(Tensor(n, 1, pi)), noise, 1.0, 0.5);
    const double frac = std::accumulate(sel.p_hard.begin(), sel.p_hard.end(), 0.0) / static_cast<double>(n);
    CHECK(std::abs(frac - pi) < 0.02);
  }
}

TEST_CASE("update_global_neighbors") {
  // Sentence 0: a b (local edge), sentence 1: c.
  auto batch = batch_docs({make_doc({{a, b}, {c}})}, Mode::ours);
  REQUIRE(batch.candidate_edges == std::vector<graph::Edge>{{0, 2}, {1, 2}});
  const auto np = batch.num_pairs();
  Tape tape;
  GlobalEdgeState state(batch);
  SelectorSample none{tape.constant(Tensor(np, 1, 0.2)), std::vector<std::uint8_t>(np, 0), 0.5};
  CHECK(update_global_neighbors(tape, batch, none, state) == 0);
  CHECK(state.count == 0);
  CHECK_FALSE(state.weights.valid());

  // Every pair fires, local ones included: only candidates may become global edges.
  SelectorSample all{tape.constant(Tensor(np, 1, 0.9)), std::vector<std::uint8_t>(np, 1), 0.5};
  CHECK(update_global_neighbors(tape, batch, all, state) == 2);
  CHECK(state.edges(batch) == batch.candidate_edges);
  CHECK(tape.value(state.weights) == Tensor{{1.0}, {1.0}});

  CHECK(update_global_neighbors(tape, batch, none, state) == 0);
  CHECK(state.edges(batch) == batch.candidate_edges);
  CHECK(update_global_neighbors(tape, batch, all, state) == 0);
  CHECK(tape.value(state.weights) == Tensor{{1.0}, {1.0}});
}

TEST_CASE("selected edge weight routes gradient through p-hat") {
  auto batch = batch_docs({make_doc({{a}, {b}})}, Mode::ours);
  Tensor p{{0.7}, {0.9}};
  Tape tape;
  Var pv = tape.parameter(p);
  SelectorSample sel{pv, {1, 1}, 0.5};
  GlobalEdgeState state(batch);
  update_global_neighbors(tape, batch, sel, state);
  CHECK(tape.value(state.weights)(0, 0) == 1.0);
  auto grads = tape.backward(tape.sum(state.weights));
  CHECK(grads.at(pv.id) == Tensor{{0.5}, {0.5}});

  Tape relaxed;
  Var rv = relaxed.parameter(p);
  GlobalEdgeState rs(batch);
  update_global_neighbors(relaxed, batch, SelectorSample{rv, {1, 0}, 0.5}, rs, true);
  CHECK(relaxed.value(rs.weights)(0, 0) == 0.7);
}

TEST_CASE("entropy_regularizer examples") {
  Tape tape;
  std::vector<std::size_t> one{0};
  CHECK(tape.value(entropy_regularizer(tape, tape.constant(Tensor::column({1.0})), one)).item() == 0.0);
  CHECK(tape.value(entropy_regularizer(tape, tape.constant(Tensor::column({0.5})), one)).item() ==
        doctest::Approx(0.34657359).epsilon(1e-8));
  CHECK(tape.value(entropy_regularizer(tape, tape.constant(Tensor::column({0.0})), one)).item() >= 0.0);
  CHECK(tape.value(entropy_regularizer(tape, tape.constant(Tensor::column({0.5})), {})).item() == 0.0);

  auto no_local = batch_docs({make_doc({{a}, {b}})}, Mode::ours);
  CHECK(no_local.local_pairs.empty());
}

TEST_CASE("readout_and_loss examples") {
  auto batch = batch_docs({make_doc({{a, b}}, 1)}, Mode::ours);
  Tape tape;
  ModelParams p;
  p.readout_w = Tensor{{1.0, 0.0}, {0.0, 1.0}};
  p.readout_b = Tensor(1, 2);
  ModelVars vars;
  vars.readout_w = tape.parameter(p.readout_w);
  vars.readout_b = tape.parameter(p.readout_b);
  Var h = tape.constant(Tensor{{1.0, 0.0}, {0.0, 1.0}});
  std::vector<Var> regs{tape.constant(Tensor::scalar(0.3)), tape.constant(Tensor::scalar(0.5))};

  auto r = readout_and_loss(tape, batch, h, vars, regs, 0.0);
  CHECK(tape.value(r.logits) == Tensor{{1.0, 1.0}});
  CHECK(r.losses.pred == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(r.losses.total == r.losses.pred);

  auto with_reg = readout_and_loss(tape, batch, h, vars, regs, 0.2);
  CHECK(with_reg.losses.total == doctest::Approx(std::log(2.0) + 0.2 * 0.4).epsilon(1e-14));
  CHECK(with_reg.losses.reg == std::vector<double>{0.3, 0.5});

  auto bad = batch;
  bad.labels[0] = 7;
  CHECK_THROWS_AS(readout_and_loss(tape, bad, h, vars, regs, 0.0), ContractViolation);
}

TEST_CASE("forward: eval pass matches the dense oracle") {
  Rng rng(18);
  int compared = 0;
  for (int trial = 0; trial < 100; ++trial) {
    auto doc = testing::random_doc(rng, 3, 5, 10, 3);
    const Mode mode = std::array{Mode::ours, Mode::disjoint, Mode::complete, Mode::wordcooc}[trial % 4];
    auto g = graph::assemble_document_graph(doc, mode, 3);
    auto batch = graph::batch_graphs(std::span(&g, 1));
    auto p = testing::random_model(10, 5, 4, 2, 3, 200 + trial);
    auto hyper = hyper_with(2, uniform(rng, 0.2, 2.0), uniform(rng, 0.1, 0.9));
    Tape tape;
    auto out = forward_document(tape, batch, p, hyper, {}, seeds_for(1));
    auto want = testing::dense_forward(g, p, hyper.tau, hyper.threshold);
    CHECK(out.global_edges == want.global_edges);
    if (out.global_edges == want.global_edges) {
      CHECK(ad::max_abs_diff(tape.value(out.logits), want.logits) < 1e-10);
      CHECK(ad::max_abs_diff(tape.value(out.final_h), want.h) < 1e-10);
      ++compared;
    }
  }
  CHECK(compared == 100);
}

TEST_CASE("forward: edge sets are monotone and disjoint from local edges") {
  Rng rng(19);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<text::Document> docs;
    for (int i = 0; i < 3; ++i) docs.push_back(testing::random_doc(rng, 4, 5, 10, 2));
    auto batch = batch_docs(docs, Mode::ours);
    auto p = testing::random_model(10, 4, 4, 3, 2, 300 + trial);
    Tape tape;
    ForwardOptions opt;
    opt.training = true;
    opt.trace = true;
    auto out = forward_document(tape, batch, p, hyper_with(3, 0.5, uniform(rng, 0.05, 0.6)), opt, seeds_for(3, trial));
    std::set<graph::Edge> local;
    for (const auto& e : batch.local_edges) local.insert({e.u, e.v});
    std::set<graph::Edge> prev;
    for (const auto& layer : out.layers) {
      std::set<graph::Edge> cur(layer.global_edges.begin(), layer.global_edges.end());
      CHECK(std::includes(cur.begin(), cur.end(), prev.begin(), prev.end()));
      for (const auto& e : cur) CHECK_FALSE(local.count(e));
      prev = std::move(cur);
    }
    CHECK(std::vector<graph::Edge>(prev.begin(), prev.end()) == out.global_edges);
  }
}

TEST_CASE("forward: T = 1 never selects and matches the local-only path bit for bit") {
  Rng rng(20);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<text::Document> docs;
    for (int i = 0; i < 2; ++i) docs.push_back(testing::random_doc(rng, 4, 5, 10, 2));
    auto ours = batch_docs(docs, Mode::ours);
    auto disjoint = batch_docs(docs, Mode::disjoint);
    auto p = testing::random_model(10, 4, 4, 2, 2, 400 + trial);
    auto hyper = hyper_with(2, 0.5, 1.0);
    hyper.dropout = 0.3;
    auto other = hyper;
    other.threshold = 0.3;
    for (bool training : {false, true}) {
      ForwardOptions opt;
      opt.training = training;
      opt.trace = true;
      Tape t1, t2;
      auto a1 = forward_document(t1, ours, p, hyper, opt, seeds_for(2, trial));
      auto a2 = forward_document(t2, disjoint, p, other, opt, seeds_for(2, trial));
      CHECK(a1.global_edges.empty());
      for (const auto& l : a1.layers) CHECK(l.global_edges.empty());
      CHECK(t1.value(a1.logits) == t2.value(a2.logits));
      CHECK(t1.value(a1.final_h) == t2.value(a2.final_h));
    }

    // Eval pass written without any global machinery.
    Tape t3, t4;
    auto out = forward_document(t3, ours, p, hyper, {}, seeds_for(2, trial));
    auto vars = bind_params(t4, p);
    std::vector<std::size_t> words;
    for (const auto& n : ours.nodes) words.push_back(n.word);
    Var h = t4.matmul(t4.gather_rows(vars.embedding, words), vars.input_proj);
    for (const auto& lv : vars.layers) h = joint_update(t4, h, local_aggregate(t4, ours, h), Var{}, lv, nullptr);
    Var pooled = t4.scatter_add_rows(h, ours.graph_of_node, ours.num_graphs());
    Var logits = t4.add(t4.matmul(pooled, vars.readout_w),
                        t4.gather_rows(vars.readout_b, std::vector<std::size_t>(ours.num_graphs(), 0)));
    CHECK(t3.value(out.logits) == t4.value(logits));
  }
}

TEST_CASE("forward: T = 0 selects every candidate in the first layer") {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<text::Document> docs{testing::random_doc(rng, 4, 4, 10, 2), testing::random_doc(rng, 4, 4, 10, 2)};
    for (Mode mode : {Mode::ours, Mode::complete}) {
      auto batch = batch_docs(docs, mode);
      auto p = testing::random_model(10, 4, 4, 2, 2, 500 + trial);
      Tape tape;
      ForwardOptions opt;
      opt.trace = true;
      opt.training = true;
      auto out = forward_document(tape, batch, p, hyper_with(2, 0.5, mode == Mode::ours ? 0.0 : 0.7), opt,
                                  seeds_for(2, trial));
      CHECK(out.layers[0].global_edges == batch.candidate_edges);
    }
  }
}

TEST_CASE("forward: single-sentence document behaves like Disjoint") {
  auto p = testing::random_model(10, 4, 4, 2, 2, 600);
  auto doc = make_doc({{a, b, c, d, a}});
  Tape t1, t2;
  auto o1 = forward_document(t1, batch_docs({doc}, Mode::ours), p, hyper_with(2, 0.5, 0.0), {}, seeds_for(1));
  auto o2 = forward_document(t2, batch_docs({doc}, Mode::disjoint), p, hyper_with(2, 0.5, 0.5), {}, seeds_for(1));
  CHECK(o1.global_edges.empty());
  CHECK(t1.value(o1.logits) == t2.value(o2.logits));
}

TEST_CASE("forward: WordCooc skips scoring and has zero regularizer") {
  auto p = testing::random_model(10, 4, 4, 2, 2, 601);
  Tape tape;
  auto out = forward_document(tape, batch_docs({make_doc({{a, b}, {c, d}})}, Mode::wordcooc), p,
                              hyper_with(2, 0.5, 0.0), {}, seeds_for(1));
  CHECK(out.global_edges.empty());
  CHECK(out.losses.reg == std::vector<double>{0.0, 0.0});
  CHECK(out.losses.total == out.losses.pred);
}

TEST_CASE("forward: batched equals per-graph") {
  Rng rng(22);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<text::Document> docs;
    for (int i = 0; i < 4; ++i) docs.push_back(testing::random_doc(rng, 4, 5, 10, 2));
    auto p = testing::random_model(10, 4, 4, 2, 2, 700 + trial);
    auto hyper = hyper_with(2, 0.5, 0.4);
    hyper.dropout = 0.2;
    auto seeds = seeds_for(4, trial);
    for (bool training : {false, true}) {
      ForwardOptions opt;
      opt.training = training;
      auto batch = batch_docs(docs, Mode::ours);
      Tape tb;
      auto all = forward_document(tb, batch, p, hyper, opt, seeds);
      double reg_sum = 0.0;
      for (std::size_t i = 0; i < docs.size(); ++i) {
        Tape ts;
        auto one = forward_document(ts, batch_docs({docs[i]}, Mode::ours), p, hyper, opt,
                                    std::span(&seeds[i], 1));
        CHECK(ad::max_abs_diff(ts.value(one.logits), rows_of(tb.value(all.logits), i, i + 1)) < 1e-10);
        const auto lo = batch.node_offsets[i], hi = batch.node_offsets[i + 1];
        CHECK(ad::max_abs_diff(ts.value(one.final_h), rows_of(tb.value(all.final_h), lo, hi)) < 1e-10);
        reg_sum += one.losses.reg[0];
      }
      CHECK(all.losses.reg[0] == doctest::Approx(reg_sum / 4.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("forward: logits invariant under node permutation within a sentence") {
  auto p = testing::random_model(10, 4, 4, 2, 2, 800);
  auto hyper = hyper_with(2, 0.5, 0.45);
  Tape t1, t2;
  auto o1 = forward_document(t1, batch_docs({make_doc({{a, b, c}, {d, a}})}, Mode::ours), p, hyper, {}, seeds_for(1));
  auto o2 = forward_document(t2, batch_docs({make_doc({{c, b, a}, {a, d}})}, Mode::ours), p, hyper, {}, seeds_for(1));
  CHECK(o1.global_edges.size() == o2.global_edges.size());
  CHECK(ad::max_abs_diff(t1.value(o1.logits), t2.value(o2.logits)) < 1e-10);
}

TEST_CASE("forward: deterministic given seeds") {
  auto p = testing::random_model(10, 4, 4, 2, 2, 801);
  auto hyper = hyper_with(2, 0.5, 0.4);
  hyper.dropout = 0.5;
  auto batch = batch_docs({make_doc({{a, b, c}, {d, a}}), make_doc({{b}, {c, d}})}, Mode::ours);
  ForwardOptions opt;
  opt.training = true;
  Tape t1, t2, t3;
  auto o1 = forward_document(t1, batch, p, hyper, opt, seeds_for(2, 1));
  auto o2 = forward_document(t2, batch, p, hyper, opt, seeds_for(2, 1));
  auto o3 = forward_document(t3, batch, p, hyper, opt, seeds_for(2, 2));
  CHECK(t1.value(o1.logits) == t2.value(o2.logits));
  CHECK_FALSE(t1.value(o1.logits) == t3.value(o3.logits));
}

TEST_CASE("forward: relaxed-path gradients match central differences") {
  Rng rng(23);
  int checked = 0;
  for (int trial = 0; trial < 40 && checked < 8; ++trial) {
    std::vector<text::Document> docs{testing::random_doc(rng, 3, 4, 6, 2), testing::random_doc(rng, 3, 4, 6, 2)};
    auto batch = batch_docs(docs, Mode::ours);
    if (batch.candidate_edges.empty() || batch.local_edges.empty()) continue;
    auto p = testing::random_model(6, 3, 3, 2, 2, 900 + trial);
    auto hyper = hyper_with(2, 0.7, 0.4, 0.5);
    hyper.dropout = 0.2;
    ForwardOptions opt;
    opt.training = true;
    opt.relaxed = true;
    auto seeds = seeds_for(2, trial);

    Tape probe;
    auto out = forward_document(probe, batch, p, hyper, opt, seeds);
    if (out.global_edges.empty() || out.min_margin < 1e-3) continue;

    auto program = [&](Tape& tape, std::span<const Var> flat) {
      return forward_document(tape, batch, p, vars_from_flat(flat, hyper.layers), hyper, opt, seeds).total;
    };
    auto tensors = p.tensors();
    CHECK(ad::check_gradient(program, tensors, 1e-6) < 1e-4);
    ++checked;
  }
  CHECK(checked == 8);
}

TEST_CASE("hyperparameter validation") {
  CHECK_THROWS_AS(hyper_with(2, 0.0, 0.5).validate(), ConfigError);
  CHECK_THROWS_AS(hyper_with(2, 0.5, 1.5).validate(), ConfigError);
  CHECK_THROWS_AS(hyper_with(2, 0.5, 0.5, -1.0).validate(), ConfigError);
  CHECK_NOTHROW(hyper_with(3, 0.1, 0.0, 0.0).validate());
}

TEST_CASE("parameter layout") {
  auto p = init_params({20, 6, 5, 2, 3}, 1);
  CHECK(p.embedding.rows() == 20);
  CHECK(p.input_proj.cols() == 5);
  CHECK(p.layers[1].att.rows() == 10);
  CHECK(p.tensors().size() == p.names().size());
  CHECK(p.names()[2] == "layer0.w_self");
  for (const auto* t : p.tensors()) CHECK(t->all_finite());
  CHECK(init_params({20, 6, 5, 2, 3}, 1) == p);
  CHECK_FALSE(init_params({20, 6, 5, 2, 3}, 2) == p);
  for (double x : p.embedding.data()) CHECK(std::abs(x) <= 0.01);
  CHECK(predictions(Tensor{{0.1, 0.9, 0.3}, {2.0, -1.0, 0.0}}) == std::vector<std::size_t>{1, 0});
}

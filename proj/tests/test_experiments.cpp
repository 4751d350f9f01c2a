#include <Eigen/Dense>
#include <algorithm>
#include <set>
#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "sgsl/errors.hpp"
#include "sgsl/experiments.hpp"
#include "sgsl/pca.hpp"

using namespace sgsl;
using namespace sgsl::exp;

namespace {

// Squared Frobenius norm of what the top-k principal subspace fails to explain.
double residual(const ad::Tensor& x, const Pca& pca) {
  double err = 0.0;
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) {
      double rec = pca.mean[c];
      for (std::size_t k = 0; k < pca.components.rows(); ++k) rec += pca.projected(r, k) * pca.components(k, c);
      err += (x(r, c) - rec) * (x(r, c) - rec);
    }
  return err;
}

struct EigenPca {
  std::vector<double> eigenvalues;  // descending
  double residual = 0.0;
};

EigenPca eigen_pca(const ad::Tensor& x, std::size_t k) {
  const auto n = static_cast<Eigen::Index>(x.rows()), d = static_cast<Eigen::Index>(x.cols());
  Eigen::MatrixXd m(n, d);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < d; ++c) m(r, c) = x(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
  Eigen::MatrixXd centered = m.rowwise() - m.colwise().mean();
  Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  EigenPca out;
  for (Eigen::Index i = d - 1; i >= 0; --i) out.eigenvalues.push_back(es.eigenvalues()(i));
  Eigen::MatrixXd top = es.eigenvectors().rightCols(static_cast<Eigen::Index>(k));
  Eigen::MatrixXd rec = centered * top * top.transpose();
  out.residual = (centered - rec).squaredNorm();
  return out;
}

SweepRow fake_row(std::string key, std::vector<double> acc) {
  SweepRow row;
  row.key = std::move(key);
  for (double a : acc) {
    RunResult r;
    r.train_docs = 10;
    r.test_accuracy = r.micro_f1 = r.macro_f1 = a;
    row.runs.push_back(r);
  }
  return row;
}

std::vector<std::vector<std::string>> read_tsv(const std::string& s) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(s);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, '\t')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

train::TrainConfig tiny_config() {
  train::TrainConfig cfg;
  cfg.hidden = 8;
  cfg.embedding_dim = 8;
  cfg.batch_size = 16;
  cfg.epochs = 1;
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST_CASE("pca recovers axis-aligned principal directions") {
  // Spread 9 along x, 1 along y, nothing along z, offset by a constant.
  ad::Tensor x(4, 3);
  const double pts[4][2] = {{3, 1}, {-3, 1}, {3, -1}, {-3, -1}};
  for (std::size_t r = 0; r < 4; ++r) {
    x(r, 0) = pts[r][0] + 10.0;
    x(r, 1) = pts[r][1] - 2.0;
    x(r, 2) = 7.0;
  }
  auto pca = pca_power_iteration(x, 2);
  CHECK(pca.mean[0] == doctest::Approx(10.0));
  CHECK(pca.mean[1] == doctest::Approx(-2.0));
  CHECK(pca.variances[0] == doctest::Approx(9.0));
  CHECK(pca.variances[1] == doctest::Approx(1.0));
  CHECK(pca.components(0, 0) == doctest::Approx(1.0));
  CHECK(pca.components(1, 1) == doctest::Approx(1.0));
  CHECK(std::abs(pca.components(0, 2)) < 1e-9);
  for (std::size_t r = 0; r < 4; ++r) {
    CHECK(pca.projected(r, 0) == doctest::Approx(pts[r][0]));
    CHECK(pca.projected(r, 1) == doctest::Approx(pts[r][1]));
  }
}

TEST_CASE("pca matches an eigendecomposition on random node sets") {
  Rng rng(17);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 3 + uniform_index(rng, 48), d = 2 + uniform_index(rng, 10);
    ad::Tensor x(n, d);
    // Uneven scales keep the leading eigenvalues apart so power iteration converges.
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < d; ++c) x(r, c) = uniform(rng, -1.0, 1.0) * (1.0 + 2.0 * static_cast<double>(c % 4));
    auto pca = pca_power_iteration(x, 2, 1e-12, 20000);
    auto ref = eigen_pca(x, 2);
    CAPTURE(trial);
    CHECK(residual(x, pca) <= ref.residual + 1e-6);
    for (std::size_t k = 0; k < 2; ++k) {
      CHECK(pca.variances[k] == doctest::Approx(ref.eigenvalues[k]).epsilon(1e-6));
      double norm = 0.0, biggest = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        norm += pca.components(k, c) * pca.components(k, c);
        if (std::abs(pca.components(k, c)) > std::abs(biggest)) biggest = pca.components(k, c);
      }
      CHECK(norm == doctest::Approx(1.0));
      CHECK(biggest > 0.0);
    }
    double dot = 0.0;
    for (std::size_t c = 0; c < d; ++c) dot += pca.components(0, c) * pca.components(1, c);
    CHECK(std::abs(dot) < 1e-6);
    for (std::size_t k = 0; k < 2; ++k) {
      double mean = 0.0;
      for (std::size_t r = 0; r < n; ++r) mean += pca.projected(r, k);
      CHECK(std::abs(mean / static_cast<double>(n)) < 1e-9);
    }
  }
}

TEST_CASE("pca is deterministic and rejects empty input") {
  ad::Tensor x(5, 3);
  Rng rng(2);
  for (auto& v : x.data()) v = uniform(rng, -1, 1);
  auto a = pca_power_iteration(x), b = pca_power_iteration(x);
  CHECK(a.components == b.components);
  CHECK(a.projected == b.projected);
  CHECK_THROWS_AS(pca_power_iteration(ad::Tensor(0, 3)), ContractViolation);
}

TEST_CASE("summaries use the sample standard deviation") {
  auto s = summarize({1.0, 2.0, 3.0});
  CHECK(s.mean == doctest::Approx(2.0));
  CHECK(s.stddev == doctest::Approx(1.0));
  auto one = summarize({0.7});
  CHECK(one.mean == doctest::Approx(0.7));
  CHECK(one.stddev == 0.0);
  CHECK(summarize({}).mean == 0.0);
}

TEST_CASE("tables have one header, one row per cell and FAILED markers") {
  auto ok = fake_row("0.5", {0.8, 0.9});
  auto bad = fake_row("1", {});
  bad.error = "boom";
  std::vector<SweepRow> rows{ok, bad};

  std::ostringstream t;
  write_temperature_table(t, rows);
  auto tsv = read_tsv(t.str());
  REQUIRE(tsv.size() == 3);
  CHECK(tsv[0] == std::vector<std::string>{"tau", "runs", "mean_accuracy", "std_accuracy"});
  CHECK(tsv[1][0] == "0.5");
  CHECK(tsv[1][1] == "2");
  CHECK(std::stod(tsv[1][2]) == doctest::Approx(0.85));
  CHECK(tsv[2][2] == "FAILED");
  CHECK(tsv[2][3] == "FAILED");

  std::ostringstream f;
  write_fraction_table(f, rows);
  auto ft = read_tsv(f.str());
  REQUIRE(ft.size() == 3);
  CHECK(ft[0].size() == 7);
  CHECK(ft[1].size() == 7);
  CHECK(ft[1][1] == "10");
  CHECK(ft[2][3] == "FAILED");

  rows[0].config.mode = graph::Mode::wordcooc;
  rows[1].config.mode = graph::Mode::complete;
  std::ostringstream a;
  write_ablation_table(a, rows);
  auto at = read_tsv(a.str());
  REQUIRE(at.size() == 3);
  CHECK(at[0][0] == "mode");
  CHECK(at[1][1] == "NA");
  CHECK(at[2][1] == "0");
  CHECK(at[2][4] == "FAILED");
}

TEST_CASE("temperature and fraction lists are validated before training") {
  auto corpus = testing::synthetic_corpus(text::SyntheticTask::bag, 40, 1);
  auto cfg = tiny_config();
  CHECK_THROWS_AS(run_temperature_sweep(corpus, cfg, {0.5, 0.0}), ConfigError);
  CHECK_THROWS_AS(run_temperature_sweep(corpus, cfg, {-1.0}), ConfigError);
  CHECK_THROWS_AS(run_temperature_sweep(corpus, cfg, {}), ConfigError);
  CHECK_THROWS_AS(run_fraction_sweep(corpus, cfg, {0.0}), ConfigError);
  CHECK_THROWS_AS(run_fraction_sweep(corpus, cfg, {1.01}), ConfigError);
}

TEST_CASE("ablation rows cover every construction and are reproducible") {
  auto corpus = testing::synthetic_corpus(text::SyntheticTask::bag, 60, 2);
  auto cfg = tiny_config();
  cfg.lambda = 0.0;
  SweepOptions opt;
  opt.repeats = 2;
  auto rows = run_ablation(corpus, cfg, opt);
  REQUIRE(rows.size() == 5);
  const std::vector<std::string> keys{"wordcooc", "disjoint", "complete", "ours", "ours+reg"};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].key == keys[i]);
    CHECK_FALSE(rows[i].failed());
    REQUIRE(rows[i].runs.size() == 2);
    CHECK(rows[i].runs[0].seed == cfg.seed);
    CHECK(rows[i].runs[1].seed == cfg.seed + 1);
  }
  CHECK(rows[3].config.lambda == 0.0);
  CHECK(rows[4].config.lambda == doctest::Approx(0.1));
  auto again = run_ablation(corpus, cfg, opt);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t r = 0; r < 2; ++r) CHECK(rows[i].runs[r].test_accuracy == again[i].runs[r].test_accuracy);
}

TEST_CASE("corpora without test documents fail every cell") {
  auto corpus = testing::synthetic_corpus(text::SyntheticTask::bag, 40, 3);
  for (auto& d : corpus.documents) d.split = text::Split::train;
  auto rows = run_temperature_sweep(corpus, tiny_config(), {0.5}, {1, nullptr, nullptr});
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].failed());
  std::ostringstream out;
  write_temperature_table(out, rows);
  CHECK(out.str().find("FAILED") != std::string::npos);
}

TEST_CASE("fraction sweep trains on nested, growing subsets") {
  auto corpus = testing::synthetic_corpus(text::SyntheticTask::bag, 80, 4);
  auto cfg = tiny_config();
  SweepOptions opt;
  opt.repeats = 1;
  auto rows = run_fraction_sweep(corpus, cfg, {1.0, 0.1, 0.5}, opt);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].key == "0.1");
  CHECK(rows[2].key == "1");
  const auto pool = train::resolve_splits(cfg, corpus).train.size();
  std::size_t prev = 0;
  for (const auto& r : rows) {
    REQUIRE_FALSE(r.failed());
    CHECK(r.runs[0].train_docs >= prev);
    prev = r.runs[0].train_docs;
  }
  CHECK(rows[0].runs[0].train_docs == static_cast<std::size_t>(std::ceil(0.1 * static_cast<double>(pool))));
  CHECK(rows[2].runs[0].train_docs == pool);
}

TEST_CASE("exported embeddings keep learned edges inside the candidate set") {
  auto corpus = testing::synthetic_corpus(text::SyntheticTask::bag, 30, 5);
  train::Checkpoint ck;
  ck.config = tiny_config();
  ck.config.threshold = 0.02;
  ck.params = testing::random_model(corpus.vocab.size(), 8, 8, 2, corpus.num_classes, 9);
  ck.vocab = corpus.vocab;
  ck.label_names = corpus.label_names;

  std::size_t with_edges = 0;
  for (const auto& doc : corpus.documents) {
    auto e = export_embeddings(ck, doc);
    auto g = graph::assemble_document_graph(doc, ck.config.mode, ck.config.window);
    REQUIRE(e.nodes.size() == g.num_nodes());
    std::set<std::pair<std::size_t, std::size_t>> cand, local;
    for (const auto& c : g.candidate_edges) cand.insert({std::min(c.u, c.v), std::max(c.u, c.v)});
    for (const auto& l : g.local_edges) local.insert({std::min(l.u, l.v), std::max(l.u, l.v)});
    for (const auto& m : e.global_edges) {
      const std::pair key{std::min(m.u, m.v), std::max(m.u, m.v)};
      CHECK(cand.count(key) == 1);
      CHECK(local.count(key) == 0);
    }
    with_edges += !e.global_edges.empty();
    for (const auto& n : e.nodes) {
      CHECK(n.vector.size() == 8);
      CHECK(n.has_coords == (g.num_nodes() >= 3));
    }

    std::ostringstream out;
    write_embedding_export(out, e);
    std::size_t node_lines = 0, m_lines = 0;
    std::istringstream in(out.str());
    std::string tag, kind;
    std::string line;
    while (std::getline(in, line)) {
      std::istringstream ls(line);
      ls >> tag;
      if (tag == "NODE") {
        ++node_lines;
        std::vector<std::string> f;
        for (std::string w; ls >> w;) f.push_back(w);
        CHECK(f.size() == 5 + 8);
      } else {
        REQUIRE(tag == "EDGE");
        ls >> kind;
        m_lines += kind == "M";
      }
    }
    CHECK(node_lines == e.nodes.size());
    CHECK(m_lines == e.global_edges.size());
  }
  CHECK(with_edges > 0);
}

TEST_CASE("tiny documents export without coordinates") {
  train::Checkpoint ck;
  ck.config = tiny_config();
  ck.vocab = text::Vocabulary({"a", "b"}, {1, 1});
  ck.label_names = {"x", "y"};
  ck.params = testing::random_model(3, 8, 8, 2, 2, 1);
  auto e = export_embeddings(ck, testing::make_doc({{1, 2}}));
  REQUIRE(e.nodes.size() == 2);
  CHECK_FALSE(e.nodes[0].has_coords);
  std::ostringstream out;
  write_embedding_export(out, e);
  CHECK(out.str().find("NODE 0 0 a NA NA") == 0);
}

#include "sgsl/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "sgsl/errors.hpp"
#include "sgsl/format.hpp"
#include "sgsl/pca.hpp"
#include "sgsl/rng.hpp"

namespace sgsl::exp {

namespace {

constexpr double kDefaultLambda = 0.1;

Summary summarize_field(const std::vector<RunResult>& runs, double RunResult::*field) {
  std::vector<double> v;
  for (const auto& r : runs) v.push_back(r.*field);
  return summarize(v);
}

void run_row(SweepRow& row, const text::Corpus& corpus, const SweepOptions& opt,
             const std::vector<std::size_t>* subset = nullptr) {
  for (std::size_t r = 0; r < opt.repeats; ++r) {
    auto cfg = row.config;
    cfg.seed = row.config.seed + r;
    try {
      row.runs.push_back(run_once(cfg, corpus, opt.embeddings, subset));
      if (opt.progress)
        *opt.progress << row.key << " run=" << r << " seed=" << cfg.seed
                      << " test_accuracy=" << format_double(row.runs.back().test_accuracy) << '\n'
                      << std::flush;
    } catch (const std::exception& e) {
      row.error = e.what();
      if (opt.progress) *opt.progress << row.key << " run=" << r << " failed: " << e.what() << '\n' << std::flush;
      return;
    }
  }
}

std::string cell(const SweepRow& row, Summary s) { return row.failed() ? "FAILED" : format_double(s.mean); }
std::string cell_std(const SweepRow& row, Summary s) { return row.failed() ? "FAILED" : format_double(s.stddev); }

}  // namespace

Summary summarize(const std::vector<double>& values) {
  Summary s;
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

Summary SweepRow::accuracy() const { return summarize_field(runs, &RunResult::test_accuracy); }
Summary SweepRow::micro_f1() const { return summarize_field(runs, &RunResult::micro_f1); }
Summary SweepRow::macro_f1() const { return summarize_field(runs, &RunResult::macro_f1); }

RunResult run_once(const train::TrainConfig& cfg, const text::Corpus& corpus, const ad::Tensor* embeddings,
                   const std::vector<std::size_t>* train_subset) {
  const auto test = corpus.indices(text::Split::test);
  if (test.empty()) throw ConfigError("corpus has no test documents");
  train::TrainOptions opt;
  opt.embeddings = embeddings;
  opt.train_subset = train_subset;
  auto result = train::train_model(cfg, corpus, opt);
  auto m = train::evaluate_model(result.best, corpus, test);
  RunResult r;
  r.seed = cfg.seed;
  r.best_epoch = result.best.epoch;
  r.train_docs = result.train_docs.size();
  r.val_accuracy = result.best.val_accuracy;
  r.test_accuracy = m.accuracy;
  r.micro_f1 = m.micro_f1;
  r.macro_f1 = m.macro_f1;
  return r;
}

std::vector<SweepRow> run_ablation(const text::Corpus& corpus, const train::TrainConfig& base,
                                   const SweepOptions& options) {
  std::vector<SweepRow> rows;
  auto add = [&](std::string key, graph::Mode mode, double lambda) {
    SweepRow row;
    row.key = std::move(key);
    row.config = base;
    row.config.mode = mode;
    row.config.lambda = lambda;
    rows.push_back(std::move(row));
  };
  add("wordcooc", graph::Mode::wordcooc, 0.0);
  add("disjoint", graph::Mode::disjoint, 0.0);
  add("complete", graph::Mode::complete, 0.0);
  add("ours", graph::Mode::ours, 0.0);
  add("ours+reg", graph::Mode::ours, base.lambda > 0.0 ? base.lambda : kDefaultLambda);
  for (auto& row : rows) run_row(row, corpus, options);
  return rows;
}

void validate_taus(const std::vector<double>& taus) {
  if (taus.empty()) throw ConfigError("temperature list is empty");
  for (double t : taus)
    if (!(t > 0.0) || !std::isfinite(t)) throw ConfigError("every temperature must be > 0, got " + format_double(t));
}

void validate_fractions(const std::vector<double>& fractions) {
  if (fractions.empty()) throw ConfigError("fraction list is empty");
  for (double f : fractions)
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("training fractions must lie in (0, 1], got " + format_double(f));
}

std::vector<SweepRow> run_temperature_sweep(const text::Corpus& corpus, const train::TrainConfig& base,
                                            const std::vector<double>& taus, const SweepOptions& options) {
  validate_taus(taus);
  std::vector<SweepRow> rows;
  for (double tau : taus) {
    SweepRow row;
    row.key = format_double(tau);
    row.config = base;
    row.config.tau = tau;
    run_row(row, corpus, options);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<SweepRow> run_fraction_sweep(const text::Corpus& corpus, const train::TrainConfig& base,
                                         const std::vector<double>& fractions, const SweepOptions& options) {
  validate_fractions(fractions);
  auto sorted = fractions;
  std::sort(sorted.begin(), sorted.end());
  auto pool = train::resolve_splits(base, corpus).train;
  Rng rng(derive_seed(base.seed, {0xF8AC}));
  shuffle(pool.begin(), pool.end(), rng);

  std::vector<SweepRow> rows;
  for (double f : sorted) {
    const auto n = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(f * static_cast<double>(pool.size()) - 1e-9)));
    std::vector<std::size_t> subset(pool.begin(), pool.begin() + static_cast<long>(std::min(n, pool.size())));
    std::sort(subset.begin(), subset.end());
    SweepRow row;
    row.key = format_double(f);
    row.config = base;
    run_row(row, corpus, options, &subset);
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_ablation_table(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "mode\tthreshold\tlambda\truns\tmean_accuracy\tstd_accuracy\n";
  for (const auto& r : rows) {
    const double t = model::effective_threshold(r.config.mode, r.config.threshold);
    out << r.key << '\t' << (r.config.mode == graph::Mode::wordcooc ? "NA" : format_double(t)) << '\t'
        << format_double(r.config.lambda) << '\t' << r.runs.size() << '\t' << cell(r, r.accuracy()) << '\t'
        << cell_std(r, r.accuracy()) << '\n';
  }
}

void write_temperature_table(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "tau\truns\tmean_accuracy\tstd_accuracy\n";
  for (const auto& r : rows)
    out << r.key << '\t' << r.runs.size() << '\t' << cell(r, r.accuracy()) << '\t' << cell_std(r, r.accuracy())
        << '\n';
}

void write_fraction_table(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "fraction\ttrain_docs\truns\tmean_micro_f1\tstd_micro_f1\tmean_macro_f1\tstd_macro_f1\n";
  for (const auto& r : rows) {
    out << r.key << '\t' << (r.runs.empty() ? std::string("NA") : std::to_string(r.runs.front().train_docs)) << '\t'
        << r.runs.size() << '\t' << cell(r, r.micro_f1()) << '\t' << cell_std(r, r.micro_f1()) << '\t'
        << cell(r, r.macro_f1()) << '\t' << cell_std(r, r.macro_f1()) << '\n';
  }
}

EmbeddingExport export_embeddings(const train::Checkpoint& ck, const text::Document& doc) {
  auto g = graph::assemble_document_graph(doc, ck.config.mode, ck.config.window);
  auto batch = graph::batch_graphs(std::span(&g, 1));
  ad::Tape tape;
  std::uint64_t seed = 0;
  auto out = model::forward_document(tape, batch, ck.params, ck.config.hyper(), {}, std::span(&seed, 1));
  const auto& h = tape.value(out.final_h);

  EmbeddingExport e;
  e.doc_id = doc.id;
  for (std::size_t v = 0; v < g.num_nodes(); ++v) {
    NodeEmbedding n;
    n.index = v;
    n.sentence = g.nodes[v].sentence;
    n.word = ck.vocab.word_of(g.nodes[v].word);
    auto row = h.row(v);
    n.vector.assign(row.begin(), row.end());
    e.nodes.push_back(std::move(n));
  }
  if (g.num_nodes() >= 3) {
    auto pca = pca_power_iteration(h, 2);
    e.pca_iterations = pca.iterations;
    for (std::size_t v = 0; v < g.num_nodes(); ++v) {
      e.nodes[v].has_coords = true;
      e.nodes[v].x = pca.projected(v, 0);
      e.nodes[v].y = pca.projected.cols() > 1 ? pca.projected(v, 1) : 0.0;
    }
  }
  e.local_edges = g.local_edges;
  e.candidate_edges = g.candidate_edges;
  e.global_edges = out.global_edges;
  return e;
}

void write_embedding_export(std::ostream& out, const EmbeddingExport& e) {
  for (const auto& n : e.nodes) {
    out << "NODE " << n.index << ' ' << n.sentence << ' ' << n.word << ' '
        << (n.has_coords ? format_double(n.x) : "NA") << ' ' << (n.has_coords ? format_double(n.y) : "NA");
    for (double v : n.vector) out << ' ' << format_double(v);
    out << '\n';
  }
  for (const auto& ed : e.local_edges) out << "EDGE T " << ed.u << ' ' << ed.v << ' ' << format_double(ed.weight) << '\n';
  for (const auto& ed : e.global_edges) out << "EDGE M " << ed.u << ' ' << ed.v << " 1\n";
}

}  // namespace sgsl::exp

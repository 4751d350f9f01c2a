#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "sgsl/graph.hpp"
#include "sgsl/textpipe.hpp"
#include "sgsl/train.hpp"

namespace sgsl::exp {

inline const std::vector<double> kDefaultTaus{0.01, 0.1, 0.2, 0.5, 1.0};
inline const std::vector<double> kDefaultFractions{0.025, 0.05, 0.1, 0.25, 0.5, 0.75, 1.0};

struct RunResult {
  std::uint64_t seed = 0;
  std::size_t best_epoch = 0;
  std::size_t train_docs = 0;
  double val_accuracy = 0.0;
  double test_accuracy = 0.0;
  double micro_f1 = 0.0;
  double macro_f1 = 0.0;
};

struct Summary {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation, 0 for a single run
};

Summary summarize(const std::vector<double>& values);

struct SweepRow {
  std::string key;  // mode name, tau or fraction
  train::TrainConfig config;
  std::vector<RunResult> runs;
  std::string error;  // non-empty when any run failed
  bool failed() const noexcept { return !error.empty(); }
  Summary accuracy() const;
  Summary micro_f1() const;
  Summary macro_f1() const;
};

struct SweepOptions {
  std::size_t repeats = 3;
  const ad::Tensor* embeddings = nullptr;
  std::ostream* progress = nullptr;
};

// One training run per seed base.seed + r; test metrics on test-tagged documents.
RunResult run_once(const train::TrainConfig& cfg, const text::Corpus& corpus, const ad::Tensor* embeddings,
                   const std::vector<std::size_t>* train_subset = nullptr);

// Rows: wordcooc, disjoint, complete, ours (lambda = 0), ours+reg (base lambda, or 0.1 when it is 0).
std::vector<SweepRow> run_ablation(const text::Corpus& corpus, const train::TrainConfig& base,
                                   const SweepOptions& options = {});
std::vector<SweepRow> run_temperature_sweep(const text::Corpus& corpus, const train::TrainConfig& base,
                                            const std::vector<double>& taus, const SweepOptions& options = {});
// Nested training subsets: the first ceil(f * n) documents of one seeded
// permutation of the training split, so larger fractions contain smaller ones.
std::vector<SweepRow> run_fraction_sweep(const text::Corpus& corpus, const train::TrainConfig& base,
                                         const std::vector<double>& fractions, const SweepOptions& options = {});

void validate_taus(const std::vector<double>& taus);
void validate_fractions(const std::vector<double>& fractions);

// Header line plus tab-separated rows; failed rows carry FAILED in every value column.
void write_ablation_table(std::ostream& out, const std::vector<SweepRow>& rows);
void write_temperature_table(std::ostream& out, const std::vector<SweepRow>& rows);
void write_fraction_table(std::ostream& out, const std::vector<SweepRow>& rows);

struct NodeEmbedding {
  std::size_t index = 0;
  std::size_t sentence = 0;
  std::string word;
  std::vector<double> vector;
  bool has_coords = false;
  double x = 0.0, y = 0.0;
};

struct EmbeddingExport {
  std::string doc_id;
  std::vector<NodeEmbedding> nodes;
  std::vector<graph::WeightedEdge> local_edges;
  std::vector<graph::Edge> candidate_edges;
  std::vector<graph::Edge> global_edges;
  std::size_t pca_iterations = 0;
};

// Final-layer node vectors in eval mode, 2-D PCA coordinates (skipped below
// 3 nodes) and the learned global edges of one document.
EmbeddingExport export_embeddings(const train::Checkpoint& ck, const text::Document& doc);

// NODE <idx> <sentence> <word> <x|NA> <y|NA> <v_1> ... <v_b>
// EDGE T <u> <v> <weight> and EDGE M <u> <v> 1
void write_embedding_export(std::ostream& out, const EmbeddingExport& e);

}  // namespace sgsl::exp

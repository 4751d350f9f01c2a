#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sgsl/graph.hpp"
#include "sgsl/model.hpp"
#include "sgsl/optim.hpp"
#include "sgsl/textpipe.hpp"

namespace sgsl::train {

struct TrainConfig {
  graph::Mode mode = graph::Mode::ours;
  std::size_t layers = 2;
  std::size_t hidden = 96;
  double tau = 0.5;
  double threshold = 0.5;
  double lambda = 0.1;
  double dropout = 0.0;
  double lr = 1e-3;
  std::size_t batch_size = 64;
  std::size_t epochs = 200;
  std::uint64_t seed = 1;
  std::size_t window = 3;
  double val_fraction = 0.1;
  std::size_t min_count = 1;
  std::size_t embedding_dim = 300;

  model::HyperParams hyper() const;
  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Keys accepted by set_config_value, in the order format_config writes them.
const std::vector<std::string>& config_keys();
void set_config_value(TrainConfig& cfg, std::string_view key, std::string_view value);
std::string get_config_value(const TrainConfig& cfg, std::string_view key);
// `key = value` lines; blank lines and '#' comments ignored. Starts from `base`.
TrainConfig read_config(std::istream& in, TrainConfig base = {});
TrainConfig load_config(const std::string& path, TrainConfig base = {});
std::string format_config(const TrainConfig& cfg);
// Human-readable notes for values outside the searched grids (allowed, just flagged).
std::vector<std::string> search_space_notes(const TrainConfig& cfg);

struct ClassStats {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct Metrics {
  std::size_t count = 0;
  double accuracy = 0.0;
  double micro_f1 = 0.0;
  double macro_f1 = 0.0;
  std::vector<ClassStats> per_class;
  model::LossBreakdown loss;
};

Metrics compute_metrics(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                        std::size_t num_classes);

// Document graphs built once per run.
struct Dataset {
  std::vector<graph::DocumentGraph> graphs;
  std::vector<std::size_t> doc_index;  // position in the source corpus
};

Dataset build_dataset(const text::Corpus& corpus, std::span<const std::size_t> indices, graph::Mode mode,
                      std::size_t window);

struct Checkpoint {
  model::ModelParams params;
  TrainConfig config;
  std::size_t epoch = 0;
  double val_accuracy = 0.0;
  std::vector<std::string> label_names;
  text::Vocabulary vocab;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ck);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_pred = 0.0;
  double train_reg = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  double mean_global_edges = 0.0;
};

// One key=value line, doubles in shortest round-trip form.
std::string format_epoch(const EpochRecord& r);

struct TrainResult {
  Checkpoint best;
  std::vector<EpochRecord> log;
  std::vector<std::size_t> train_docs;
  std::vector<std::size_t> val_docs;
};

struct TrainOptions {
  const ad::Tensor* embeddings = nullptr;  // |V| x embedding_dim initial table
  std::ostream* log = nullptr;             // receives format_epoch lines as they happen
  // Restricts training to these corpus indices (validation still comes from
  // val-tagged docs or a split of the training docs).
  const std::vector<std::size_t>* train_subset = nullptr;
};

TrainResult train_model(const TrainConfig& cfg, const text::Corpus& corpus, const TrainOptions& options = {});

struct StepResult {
  model::LossBreakdown loss;            // before the update
  std::vector<std::size_t> predicted;  // training-mode predictions
  std::size_t global_edges = 0;
};

// Train/validation documents: val-tagged documents when present, otherwise a
// seeded split of the training documents.
text::TrainValSplit resolve_splits(const TrainConfig& cfg, const text::Corpus& corpus);

// One optimizer step on a prepared batch.
StepResult train_step(model::ModelParams& params, ad::AdamState& adam, const graph::BatchedGraph& batch,
                      const model::HyperParams& hyper, std::span<const std::uint64_t> graph_seeds);

struct Evaluation {
  Metrics metrics;
  std::vector<std::size_t> predicted;
};

// Eval mode: zero Gumbel noise, no dropout.
Evaluation evaluate(const model::ModelParams& params, const TrainConfig& cfg, const Dataset& data,
                    std::size_t num_classes);
Metrics evaluate_model(const Checkpoint& ck, const text::Corpus& corpus, std::span<const std::size_t> indices);

// Seed of graph `position` in batch `batch` of `epoch`.
std::uint64_t noise_seed(std::uint64_t seed, std::size_t epoch, std::size_t batch, std::size_t position);

}  // namespace sgsl::train

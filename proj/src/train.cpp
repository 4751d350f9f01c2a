#include "sgsl/train.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>
#include <sstream>

#include "sgsl/errors.hpp"
#include "sgsl/format.hpp"
#include "sgsl/rng.hpp"

namespace sgsl::train {

namespace {

enum SeedStream : std::uint64_t { kInit = 1, kSplit = 2, kShuffle = 3, kNoise = 4 };

graph::BatchedGraph make_batch(const Dataset& data, std::span<const std::size_t> members) {
  std::vector<graph::DocumentGraph> gs;
  gs.reserve(members.size());
  for (auto i : members) gs.push_back(data.graphs[i]);
  return graph::batch_graphs(gs);
}

void accumulate(model::LossBreakdown& acc, const model::LossBreakdown& part, double weight) {
  acc.pred += weight * part.pred;
  acc.total += weight * part.total;
  acc.lambda = part.lambda;
  if (acc.reg.size() < part.reg.size()) acc.reg.resize(part.reg.size(), 0.0);
  for (std::size_t k = 0; k < part.reg.size(); ++k) acc.reg[k] += weight * part.reg[k];
}

void scale_loss(model::LossBreakdown& acc, double factor) {
  acc.pred *= factor;
  acc.total *= factor;
  for (auto& r : acc.reg) r *= factor;
}

}  // namespace

std::uint64_t noise_seed(std::uint64_t seed, std::size_t epoch, std::size_t batch, std::size_t position) {
  return derive_seed(seed, {kNoise, epoch, batch, position});
}

Dataset build_dataset(const text::Corpus& corpus, std::span<const std::size_t> indices, graph::Mode mode,
                      std::size_t window) {
  Dataset d;
  for (auto i : indices) {
    SGSL_EXPECT(i < corpus.documents.size(), "build_dataset: document index out of range");
    d.graphs.push_back(graph::assemble_document_graph(corpus.documents[i], mode, window));
    d.doc_index.push_back(i);
  }
  return d;
}

std::string format_epoch(const EpochRecord& r) {
  std::ostringstream os;
  os << "epoch=" << r.epoch << " train_loss=" << format_double(r.train_loss)
     << " train_pred=" << format_double(r.train_pred) << " train_reg=" << format_double(r.train_reg)
     << " train_accuracy=" << format_double(r.train_accuracy) << " val_loss=" << format_double(r.val_loss)
     << " val_accuracy=" << format_double(r.val_accuracy)
     << " mean_global_edges=" << format_double(r.mean_global_edges);
  return os.str();
}

text::TrainValSplit resolve_splits(const TrainConfig& cfg, const text::Corpus& corpus) {
  auto train = corpus.indices(text::Split::train);
  if (train.empty()) throw ConfigError("corpus has no training documents");
  auto val = corpus.indices(text::Split::val);
  if (!val.empty()) return {std::move(train), std::move(val)};
  return text::split_train_val(train, cfg.val_fraction, derive_seed(cfg.seed, {kSplit}));
}

StepResult train_step(model::ModelParams& params, ad::AdamState& adam, const graph::BatchedGraph& batch,
                      const model::HyperParams& hyper, std::span<const std::uint64_t> graph_seeds) {
  ad::Tape tape;
  model::ForwardOptions opt;
  opt.training = true;
  auto out = model::forward_document(tape, batch, params, hyper, opt, graph_seeds);
  auto grads = tape.backward(out.total);

  std::vector<ad::Tensor> g;
  for (auto v : out.vars.flat()) g.push_back(std::move(grads.at(v.id)));
  auto tensors = params.tensors();
  StepResult r;
  r.loss = out.losses;
  r.predicted = model::predictions(tape.value(out.logits));
  r.global_edges = out.global_edges.size();
  ad::adam_step(tensors, g, adam);
  return r;
}

Evaluation evaluate(const model::ModelParams& params, const TrainConfig& cfg, const Dataset& data,
                    std::size_t num_classes) {
  if (data.graphs.empty()) throw ConfigError("evaluation dataset is empty");
  const auto hyper = cfg.hyper();
  Evaluation ev;
  std::vector<std::size_t> truth;
  model::LossBreakdown loss;
  for (std::size_t lo = 0; lo < data.graphs.size(); lo += cfg.batch_size) {
    const auto hi = std::min(lo + cfg.batch_size, data.graphs.size());
    std::vector<std::size_t> members(hi - lo);
    std::iota(members.begin(), members.end(), lo);
    auto batch = make_batch(data, members);
    for (auto l : batch.labels)
      if (l >= num_classes) throw ConfigError("document label outside the model's classes");
    ad::Tape tape;
    std::vector<std::uint64_t> seeds(members.size(), 0);
    auto out = model::forward_document(tape, batch, params, hyper, {}, seeds);
    auto pred = model::predictions(tape.value(out.logits));
    ev.predicted.insert(ev.predicted.end(), pred.begin(), pred.end());
    truth.insert(truth.end(), batch.labels.begin(), batch.labels.end());
    accumulate(loss, out.losses, static_cast<double>(members.size()));
  }
  scale_loss(loss, 1.0 / static_cast<double>(data.graphs.size()));
  ev.metrics = compute_metrics(truth, ev.predicted, num_classes);
  ev.metrics.loss = loss;
  return ev;
}

Metrics evaluate_model(const Checkpoint& ck, const text::Corpus& corpus, std::span<const std::size_t> indices) {
  if (indices.empty()) throw ConfigError("evaluation dataset is empty");
  auto data = build_dataset(corpus, indices, ck.config.mode, ck.config.window);
  return evaluate(ck.params, ck.config, data, ck.params.num_classes()).metrics;
}

TrainResult train_model(const TrainConfig& cfg, const text::Corpus& corpus, const TrainOptions& options) {
  cfg.validate();
  if (corpus.num_classes == 0) throw ConfigError("corpus has no classes");
  auto split = resolve_splits(cfg, corpus);
  if (options.train_subset) {
    std::vector<std::size_t> keep;
    std::set_intersection(split.train.begin(), split.train.end(), options.train_subset->begin(),
                          options.train_subset->end(), std::back_inserter(keep));
    split.train = std::move(keep);
  }
  if (split.train.empty()) throw ConfigError("training split is empty");

  TrainResult result;
  result.train_docs = split.train;
  result.val_docs = split.val;
  const auto train_data = build_dataset(corpus, split.train, cfg.mode, cfg.window);
  const auto val_data = build_dataset(corpus, split.val, cfg.mode, cfg.window);

  model::ModelShape shape{corpus.vocab.size(), cfg.embedding_dim, cfg.hidden, cfg.layers, corpus.num_classes};
  auto params = model::init_params(shape, derive_seed(cfg.seed, {kInit}), options.embeddings);
  ad::AdamState adam;
  adam.lr = cfg.lr;
  const auto hyper = cfg.hyper();

  auto& best = result.best;
  best.config = cfg;
  best.label_names = corpus.label_names;
  best.vocab = corpus.vocab;
  bool have_best = false;

  std::vector<std::size_t> order(train_data.graphs.size());
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(cfg.seed, {kShuffle, epoch}));
    shuffle(order.begin(), order.end(), shuffle_rng);

    model::LossBreakdown loss;
    std::size_t correct = 0, edges = 0;
    for (std::size_t lo = 0, bi = 0; lo < order.size(); lo += cfg.batch_size, ++bi) {
      const auto hi = std::min(lo + cfg.batch_size, order.size());
      std::span<const std::size_t> members(order.data() + lo, hi - lo);
      auto batch = make_batch(train_data, members);
      std::vector<std::uint64_t> seeds(members.size());
      for (std::size_t p = 0; p < members.size(); ++p) seeds[p] = noise_seed(cfg.seed, epoch, bi, p);
      auto step = train_step(params, adam, batch, hyper, seeds);
      for (std::size_t p = 0; p < members.size(); ++p) correct += step.predicted[p] == batch.labels[p];
      edges += step.global_edges;
      accumulate(loss, step.loss, static_cast<double>(members.size()));
    }
    const double n = static_cast<double>(order.size());
    scale_loss(loss, 1.0 / n);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss.total;
    rec.train_pred = loss.pred;
    rec.train_reg = loss.reg.empty() ? 0.0 : std::accumulate(loss.reg.begin(), loss.reg.end(), 0.0) / loss.reg.size();
    rec.train_accuracy = static_cast<double>(correct) / n;
    rec.mean_global_edges = static_cast<double>(edges) / n;
    auto val = evaluate(params, cfg, val_data, corpus.num_classes);
    rec.val_loss = val.metrics.loss.total;
    rec.val_accuracy = val.metrics.accuracy;
    result.log.push_back(rec);
    if (options.log) *options.log << format_epoch(rec) << '\n' << std::flush;

    if (!have_best || rec.val_accuracy > best.val_accuracy) {
      have_best = true;
      best.params = params;
      best.epoch = epoch;
      best.val_accuracy = rec.val_accuracy;
    }
  }
  if (!have_best) {
    best.params = params;
    best.epoch = 0;
    if (!val_data.graphs.empty()) best.val_accuracy = evaluate(params, cfg, val_data, corpus.num_classes).metrics.accuracy;
  }
  return result;
}

}  // namespace sgsl::train

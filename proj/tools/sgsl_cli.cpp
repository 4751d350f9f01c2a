#include <cctype>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "sgsl/errors.hpp"
#include "sgsl/experiments.hpp"
#include "sgsl/graph.hpp"
#include "sgsl/textpipe.hpp"
#include "sgsl/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace sgsl;

namespace {

struct CommonFlags {
  std::string config_path;
  std::string corpus_path;
  std::string embeddings_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  std::optional<double> tau, threshold, lambda, lr, dropout;
  std::optional<std::size_t> epochs, hidden, layers, batch_size, embedding_dim;
  std::vector<std::string> overrides;  // key=value
};

void add_common(CLI::App* cmd, CommonFlags& f, bool corpus_required = true) {
  cmd->add_option("--config", f.config_path, "key = value config file");
  auto* c = cmd->add_option("--corpus", f.corpus_path, "corpus file (id<TAB>label<TAB>text[<TAB>split])");
  if (corpus_required) c->required();
  cmd->add_option("--embeddings", f.embeddings_path, "word vector file (word v1 ... vd per line)");
  cmd->add_option("--out", f.out_dir, "output directory")->capture_default_str();
  cmd->add_option("--seed", f.seed, "random seed");
  cmd->add_option("--mode", f.mode, "graph construction: wordcooc|disjoint|complete|ours");
  cmd->add_option("--tau", f.tau, "Gumbel-softmax temperature");
  cmd->add_option("--threshold", f.threshold, "selector threshold T");
  cmd->add_option("--lambda", f.lambda, "regularizer weight");
  cmd->add_option("--epochs", f.epochs, "training epochs");
  cmd->add_option("--lr", f.lr, "learning rate");
  cmd->add_option("--dropout", f.dropout, "dropout rate");
  cmd->add_option("--hidden", f.hidden, "hidden size b");
  cmd->add_option("--layers", f.layers, "number of layers K");
  cmd->add_option("--batch-size", f.batch_size, "mini-batch size");
  cmd->add_option("--embedding-dim", f.embedding_dim, "input embedding size");
  cmd->add_option("--set", f.overrides, "extra config override key=value (repeatable)");
}

train::TrainConfig resolve_config(const CommonFlags& f) {
  train::TrainConfig cfg;
  if (!f.config_path.empty()) cfg = train::load_config(f.config_path);
  for (const auto& kv : f.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    train::set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (f.seed) cfg.seed = *f.seed;
  if (f.mode) cfg.mode = graph::parse_mode(*f.mode);
  if (f.tau) cfg.tau = *f.tau;
  if (f.threshold) cfg.threshold = *f.threshold;
  if (f.lambda) cfg.lambda = *f.lambda;
  if (f.epochs) cfg.epochs = *f.epochs;
  if (f.lr) cfg.lr = *f.lr;
  if (f.dropout) cfg.dropout = *f.dropout;
  if (f.hidden) cfg.hidden = *f.hidden;
  if (f.layers) cfg.layers = *f.layers;
  if (f.batch_size) cfg.batch_size = *f.batch_size;
  if (f.embedding_dim) cfg.embedding_dim = *f.embedding_dim;
  cfg.validate();
  for (const auto& note : train::search_space_notes(cfg)) std::cerr << "note: " << note << '\n';
  return cfg;
}

json config_json(const train::TrainConfig& cfg) {
  json j;
  for (const auto& k : train::config_keys()) j[k] = train::get_config_value(cfg, k);
  return j;
}

text::Corpus load_encoded(const std::string& path, std::size_t min_count) {
  auto raw = text::load_corpus(path);
  return text::encode_corpus(raw, text::build_vocab(raw, min_count), text::collect_labels(raw));
}

struct Prepared {
  text::Corpus corpus;
  std::optional<ad::Tensor> embeddings;
};

Prepared prepare(const CommonFlags& f, const train::TrainConfig& cfg, json& summary) {
  Prepared p{load_encoded(f.corpus_path, cfg.min_count), std::nullopt};
  if (!f.embeddings_path.empty()) {
    auto table = text::load_embeddings(f.embeddings_path, p.corpus.vocab, cfg.embedding_dim, cfg.seed);
    summary["embeddings_found"] = table.found;
    p.embeddings = std::move(table.vectors);
  }
  return p;
}

fs::path ensure_dir(const std::string& dir) {
  fs::create_directories(dir);
  return fs::path(dir);
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  return out;
}

json metrics_json(const train::Metrics& m, const std::vector<std::string>& labels) {
  json j{{"count", m.count}, {"accuracy", m.accuracy}, {"micro_f1", m.micro_f1}, {"macro_f1", m.macro_f1}};
  json per = json::array();
  for (std::size_t c = 0; c < m.per_class.size(); ++c) {
    const auto& s = m.per_class[c];
    per.push_back({{"label", c < labels.size() ? labels[c] : std::to_string(c)},
                   {"precision", s.precision},
                   {"recall", s.recall},
                   {"f1", s.f1},
                   {"support", s.support}});
  }
  j["per_class"] = per;
  j["loss"] = {{"pred", m.loss.pred}, {"reg", m.loss.reg}, {"lambda", m.loss.lambda}, {"total", m.loss.total}};
  return j;
}

json rows_json(const std::vector<exp::SweepRow>& rows) {
  json arr = json::array();
  for (const auto& r : rows) {
    json runs = json::array();
    for (const auto& run : r.runs)
      runs.push_back({{"seed", run.seed},
                      {"best_epoch", run.best_epoch},
                      {"train_docs", run.train_docs},
                      {"val_accuracy", run.val_accuracy},
                      {"test_accuracy", run.test_accuracy},
                      {"micro_f1", run.micro_f1},
                      {"macro_f1", run.macro_f1}});
    json row{{"key", r.key}, {"runs", runs}};
    if (r.failed()) row["error"] = r.error;
    arr.push_back(row);
  }
  return arr;
}

std::vector<std::size_t> split_indices(const text::Corpus& corpus, const std::string& which) {
  if (which == "all") {
    std::vector<std::size_t> all(corpus.documents.size());
    std::iota(all.begin(), all.end(), 0);
    return all;
  }
  return corpus.indices(text::parse_split(which));
}

int emit(const json& summary) {
  std::cout << summary.dump(2) << '\n';
  return summary.value("status", "ok") == "ok" ? 0 : 1;
}

int cmd_gen_synthetic(const std::string& task, const text::SyntheticSpec& base, std::uint64_t seed,
                      const std::string& out_dir) {
  auto spec = base;
  spec.task = text::parse_synthetic_task(task);
  auto corpus = text::generate_synthetic_corpus(spec, seed);
  const auto path = ensure_dir(out_dir) / "corpus.tsv";
  auto out = open_out(path);
  text::write_corpus(out, corpus);
  std::size_t test = 0;
  for (const auto& d : corpus.documents) test += d.split == text::Split::test;
  return emit({{"status", "ok"},
               {"command", "gen-synthetic"},
               {"task", task},
               {"seed", seed},
               {"documents", corpus.documents.size()},
               {"test_documents", test},
               {"artifacts", {{"corpus", path.string()}}}});
}

int cmd_preprocess(const CommonFlags& f, const std::size_t dump_docs) {
  auto cfg = resolve_config(f);
  auto raw = text::load_corpus(f.corpus_path);
  auto corpus = text::encode_corpus(raw, text::build_vocab(raw, cfg.min_count), text::collect_labels(raw));
  const auto dir = ensure_dir(f.out_dir);
  const auto vocab_path = dir / "vocab.tsv", labels_path = dir / "labels.txt", corpus_path = dir / "corpus.tsv";
  {
    auto out = open_out(vocab_path);
    for (text::WordId w = 0; w < corpus.vocab.size(); ++w)
      out << corpus.vocab.word_of(w) << '\t' << corpus.vocab.count_of(w) << '\n';
  }
  {
    auto out = open_out(labels_path);
    for (const auto& l : corpus.label_names) out << l << '\n';
  }
  {
    auto out = open_out(corpus_path);
    text::write_corpus(out, raw);
  }

  json stats;
  double nodes = 0, local = 0, cand = 0;
  for (const auto& d : corpus.documents) {
    auto g = graph::assemble_document_graph(d, cfg.mode, cfg.window);
    nodes += static_cast<double>(g.num_nodes());
    local += static_cast<double>(g.local_edges.size());
    cand += static_cast<double>(g.candidate_edges.size());
  }
  const double n = static_cast<double>(corpus.documents.size());
  json artifacts{{"vocab", vocab_path.string()}, {"labels", labels_path.string()}, {"corpus", corpus_path.string()}};
  if (dump_docs > 0) {
    const auto graphs_path = dir / "graphs.txt";
    auto out = open_out(graphs_path);
    for (std::size_t i = 0; i < std::min(dump_docs, corpus.documents.size()); ++i) {
      out << "DOC " << corpus.documents[i].id << '\n';
      graph::write_graph_dump(out, graph::assemble_document_graph(corpus.documents[i], cfg.mode, cfg.window),
                              corpus.vocab);
    }
    artifacts["graphs"] = graphs_path.string();
  }
  return emit({{"status", "ok"},
               {"command", "preprocess"},
               {"documents", corpus.documents.size()},
               {"train", corpus.indices(text::Split::train).size()},
               {"val", corpus.indices(text::Split::val).size()},
               {"test", corpus.indices(text::Split::test).size()},
               {"classes", corpus.num_classes},
               {"vocab_size", corpus.vocab.size()},
               {"mode", graph::mode_name(cfg.mode)},
               {"window", cfg.window},
               {"mean_nodes", nodes / n},
               {"mean_local_edges", local / n},
               {"mean_candidate_edges", cand / n},
               {"artifacts", artifacts}});
}

int cmd_train(const CommonFlags& f) {
  auto cfg = resolve_config(f);
  json summary{{"status", "ok"}, {"command", "train"}};
  auto prep = prepare(f, cfg, summary);
  const auto dir = ensure_dir(f.out_dir);
  const auto log_path = dir / "train_log.txt", ck_path = dir / "checkpoint.txt", cfg_path = dir / "config.txt";
  auto log = open_out(log_path);
  train::TrainOptions opt;
  opt.log = &log;
  if (prep.embeddings) opt.embeddings = &*prep.embeddings;
  auto result = train::train_model(cfg, prep.corpus, opt);
  train::save_checkpoint(ck_path.string(), result.best);
  open_out(cfg_path) << train::format_config(cfg);

  summary["config"] = config_json(cfg);
  summary["train_docs"] = result.train_docs.size();
  summary["val_docs"] = result.val_docs.size();
  summary["best_epoch"] = result.best.epoch;
  summary["val_accuracy"] = result.best.val_accuracy;
  const auto test = prep.corpus.indices(text::Split::test);
  if (!test.empty())
    summary["test"] = metrics_json(train::evaluate_model(result.best, prep.corpus, test), prep.corpus.label_names);
  summary["artifacts"] = {{"checkpoint", ck_path.string()}, {"log", log_path.string()}, {"config", cfg_path.string()}};
  return emit(summary);
}

int cmd_eval(const std::string& ck_path, const std::string& corpus_path, const std::string& split,
             const std::string& out_dir) {
  auto ck = train::load_checkpoint(ck_path);
  auto raw = text::load_corpus(corpus_path);
  auto corpus = text::encode_corpus(raw, ck.vocab, ck.label_names);
  const auto idx = split_indices(corpus, split);
  if (idx.empty()) throw ConfigError("no documents in split '" + split + "'");
  auto data = train::build_dataset(corpus, idx, ck.config.mode, ck.config.window);
  auto ev = train::evaluate(ck.params, ck.config, data, ck.params.num_classes());
  json summary{{"status", "ok"},
               {"command", "eval"},
               {"checkpoint", ck_path},
               {"epoch", ck.epoch},
               {"split", split},
               {"metrics", metrics_json(ev.metrics, ck.label_names)}};
  if (!out_dir.empty()) {
    const auto path = ensure_dir(out_dir) / "predictions.tsv";
    auto out = open_out(path);
    out << "id\tlabel\tpredicted\n";
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const auto& d = corpus.documents[idx[i]];
      out << d.id << '\t' << ck.label_names[d.label] << '\t' << ck.label_names[ev.predicted[i]] << '\n';
    }
    summary["artifacts"] = {{"predictions", path.string()}};
  }
  return emit(summary);
}

using SweepFn = std::function<std::vector<exp::SweepRow>(const text::Corpus&, const train::TrainConfig&,
                                                         const exp::SweepOptions&)>;
using TableFn = void (*)(std::ostream&, const std::vector<exp::SweepRow>&);

int cmd_sweep(const std::string& name, const CommonFlags& f, std::size_t repeats, const SweepFn& run,
              TableFn write_table, const std::string& file, json extra = json::object()) {
  auto cfg = resolve_config(f);
  json summary{{"status", "ok"}, {"command", name}};
  auto prep = prepare(f, cfg, summary);
  exp::SweepOptions opt;
  opt.repeats = repeats;
  opt.progress = &std::cerr;
  if (prep.embeddings) opt.embeddings = &*prep.embeddings;
  auto rows = run(prep.corpus, cfg, opt);

  const auto path = ensure_dir(f.out_dir) / file;
  auto out = open_out(path);
  write_table(out, rows);
  bool failed = false;
  for (const auto& r : rows) failed |= r.failed();
  if (failed) summary["status"] = "failed";
  summary["config"] = config_json(cfg);
  summary["repeats"] = repeats;
  for (auto& [k, v] : extra.items()) summary[k] = v;
  summary["rows"] = rows_json(rows);
  summary["artifacts"] = {{"table", path.string()}};
  return emit(summary);
}

int cmd_export(const std::string& ck_path, const std::string& corpus_path, const std::string& doc_id,
               const std::string& out_dir) {
  auto ck = train::load_checkpoint(ck_path);
  auto raw = text::load_corpus(corpus_path);
  auto corpus = text::encode_corpus(raw, ck.vocab, ck.label_names);
  const text::Document* doc = nullptr;
  for (const auto& d : corpus.documents)
    if (d.id == doc_id) doc = &d;
  if (!doc) throw ConfigError("document '" + doc_id + "' not found in corpus");
  auto e = exp::export_embeddings(ck, *doc);
  std::string safe = doc_id;
  for (auto& ch : safe)
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_') ch = '_';
  const auto path = ensure_dir(out_dir) / ("embeddings_" + safe + ".txt");
  auto out = open_out(path);
  exp::write_embedding_export(out, e);
  return emit({{"status", "ok"},
               {"command", "export-embeddings"},
               {"document", doc_id},
               {"nodes", e.nodes.size()},
               {"global_edges", e.global_edges.size()},
               {"pca", e.nodes.size() >= 3},
               {"pca_iterations", e.pca_iterations},
               {"artifacts", {{"embeddings", path.string()}}}});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Document classification over learned word graphs"};
  app.require_subcommand(1);

  CommonFlags pre_f, train_f, ablate_f, tau_f, frac_f;
  std::size_t dump_docs = 0;
  auto* pre = app.add_subcommand("preprocess", "tokenize, build vocabulary and per-document graph statistics");
  add_common(pre, pre_f);
  pre->add_option("--dump", dump_docs, "write graph dumps of the first N documents");

  auto* trn = app.add_subcommand("train", "train one model and save the best-validation checkpoint");
  add_common(trn, train_f);

  std::string ck_path, eval_corpus, split = "test", eval_out;
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  ev->add_option("--checkpoint", ck_path, "checkpoint file")->required();
  ev->add_option("--corpus", eval_corpus, "corpus file")->required();
  ev->add_option("--split", split, "train|val|test|all")->capture_default_str();
  ev->add_option("--out", eval_out, "directory for predictions.tsv");

  std::size_t repeats = 3;
  auto* abl = app.add_subcommand("ablate", "compare graph constructions");
  add_common(abl, ablate_f);
  abl->add_option("--repeats", repeats, "seeded runs per mode")->capture_default_str();

  std::vector<double> taus = exp::kDefaultTaus;
  auto* tau = app.add_subcommand("sweep-temperature", "test accuracy per Gumbel temperature");
  add_common(tau, tau_f);
  tau->add_option("--taus", taus, "comma-separated temperatures")->delimiter(',')->capture_default_str();
  tau->add_option("--repeats", repeats, "seeded runs per temperature")->capture_default_str();

  std::vector<double> fractions = exp::kDefaultFractions;
  auto* frac = app.add_subcommand("fraction-sweep", "micro/macro-F1 versus fraction of training data");
  add_common(frac, frac_f);
  frac->add_option("--fractions", fractions, "comma-separated fractions in (0, 1]")->delimiter(',')->capture_default_str();
  frac->add_option("--repeats", repeats, "seeded runs per fraction")->capture_default_str();

  std::string task = "bag", gen_out = "out";
  std::uint64_t gen_seed = 1;
  text::SyntheticSpec spec;
  auto* gen = app.add_subcommand("gen-synthetic", "write a synthetic corpus");
  gen->add_option("--task", task, "bag|cross_sentence_xor")->capture_default_str();
  gen->add_option("--docs", spec.num_docs, "number of documents")->capture_default_str();
  gen->add_option("--classes", spec.num_classes, "number of classes (bag)")->capture_default_str();
  gen->add_option("--vocab-size", spec.vocab_size, "vocabulary size")->capture_default_str();
  gen->add_option("--sentences", spec.sentences_per_doc, "sentences per document")->capture_default_str();
  gen->add_option("--tokens", spec.tokens_per_sentence, "tokens per sentence")->capture_default_str();
  gen->add_option("--test-fraction", spec.test_fraction, "fraction tagged test")->capture_default_str();
  gen->add_option("--seed", gen_seed, "random seed")->capture_default_str();
  gen->add_option("--out", gen_out, "output directory")->capture_default_str();

  std::string exp_ck, exp_corpus, doc_id, exp_out = "out";
  auto* ex = app.add_subcommand("export-embeddings", "final node vectors, PCA coordinates and learned edges");
  ex->add_option("--checkpoint", exp_ck, "checkpoint file")->required();
  ex->add_option("--corpus", exp_corpus, "corpus file")->required();
  ex->add_option("--doc", doc_id, "document id")->required();
  ex->add_option("--out", exp_out, "output directory")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*pre) return cmd_preprocess(pre_f, dump_docs);
    if (*trn) return cmd_train(train_f);
    if (*ev) return cmd_eval(ck_path, eval_corpus, split, eval_out);
    if (*abl) return cmd_sweep("ablate", ablate_f, repeats, exp::run_ablation, exp::write_ablation_table, "ablation.tsv");
    if (*tau) {
      exp::validate_taus(taus);
      auto run = [&](const text::Corpus& c, const train::TrainConfig& cfg, const exp::SweepOptions& o) {
        return exp::run_temperature_sweep(c, cfg, taus, o);
      };
      return cmd_sweep("sweep-temperature", tau_f, repeats, run, exp::write_temperature_table, "temperature.tsv",
                       {{"taus", taus}});
    }
    if (*frac) {
      exp::validate_fractions(fractions);
      auto run = [&](const text::Corpus& c, const train::TrainConfig& cfg, const exp::SweepOptions& o) {
        return exp::run_fraction_sweep(c, cfg, fractions, o);
      };
      return cmd_sweep("fraction-sweep", frac_f, repeats, run, exp::write_fraction_table, "fractions.tsv",
                       {{"fractions", fractions}});
    }
    if (*gen) return cmd_gen_synthetic(task, spec, gen_seed, gen_out);
    if (*ex) return cmd_export(exp_ck, exp_corpus, doc_id, exp_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

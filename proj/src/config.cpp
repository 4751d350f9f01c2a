#include <algorithm>
#include <fstream>
#include <istream>
#include <sstream>

#include "sgsl/errors.hpp"
#include "sgsl/format.hpp"
#include "sgsl/train.hpp"

namespace sgsl::train {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  return s.substr(first, s.find_last_not_of(" \t\r") - first + 1);
}

double to_double(std::string_view key, std::string_view value) {
  auto v = parse_double(value);
  if (!v) throw ConfigError("config '" + std::string(key) + "': not a number: '" + std::string(value) + "'");
  return *v;
}

std::size_t to_size(std::string_view key, std::string_view value) {
  auto v = parse_unsigned(value);
  if (!v) throw ConfigError("config '" + std::string(key) + "': not a non-negative integer: '" + std::string(value) + "'");
  return static_cast<std::size_t>(*v);
}

template <class T>
bool one_of(T v, std::initializer_list<T> grid) {
  return std::find(grid.begin(), grid.end(), v) != grid.end();
}

}  // namespace

model::HyperParams TrainConfig::hyper() const {
  model::HyperParams h;
  h.layers = layers;
  h.tau = tau;
  h.threshold = threshold;
  h.lambda = lambda;
  h.dropout = dropout;
  return h;
}

void TrainConfig::validate() const {
  hyper().validate();
  if (hidden == 0) throw ConfigError("hidden size must be positive");
  if (embedding_dim == 0) throw ConfigError("embedding_dim must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(lr >= 0.0)) throw ConfigError("learning rate must be >= 0");
  if (window < 2) throw ConfigError("window must be at least 2");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must lie in (0, 1)");
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys{"mode",       "layers",  "hidden", "tau",          "threshold",
                                             "lambda",     "dropout", "lr",     "batch_size",   "epochs",
                                             "seed",       "window",  "val_fraction", "min_count", "embedding_dim"};
  return keys;
}

void set_config_value(TrainConfig& cfg, std::string_view key, std::string_view value) {
  value = trim(value);
  if (key == "mode") cfg.mode = graph::parse_mode(value);
  else if (key == "layers") cfg.layers = to_size(key, value);
  else if (key == "hidden") cfg.hidden = to_size(key, value);
  else if (key == "tau") cfg.tau = to_double(key, value);
  else if (key == "threshold") cfg.threshold = to_double(key, value);
  else if (key == "lambda") cfg.lambda = to_double(key, value);
  else if (key == "dropout") cfg.dropout = to_double(key, value);
  else if (key == "lr") cfg.lr = to_double(key, value);
  else if (key == "batch_size") cfg.batch_size = to_size(key, value);
  else if (key == "epochs") cfg.epochs = to_size(key, value);
  else if (key == "seed") cfg.seed = to_size(key, value);
  else if (key == "window") cfg.window = to_size(key, value);
  else if (key == "val_fraction") cfg.val_fraction = to_double(key, value);
  else if (key == "min_count") cfg.min_count = to_size(key, value);
  else if (key == "embedding_dim") cfg.embedding_dim = to_size(key, value);
  else throw ConfigError("unknown config key '" + std::string(key) + "'");
}

std::string get_config_value(const TrainConfig& cfg, std::string_view key) {
  if (key == "mode") return graph::mode_name(cfg.mode);
  if (key == "layers") return std::to_string(cfg.layers);
  if (key == "hidden") return std::to_string(cfg.hidden);
  if (key == "tau") return format_double(cfg.tau);
  if (key == "threshold") return format_double(cfg.threshold);
  if (key == "lambda") return format_double(cfg.lambda);
  if (key == "dropout") return format_double(cfg.dropout);
  if (key == "lr") return format_double(cfg.lr);
  if (key == "batch_size") return std::to_string(cfg.batch_size);
  if (key == "epochs") return std::to_string(cfg.epochs);
  if (key == "seed") return std::to_string(cfg.seed);
  if (key == "window") return std::to_string(cfg.window);
  if (key == "val_fraction") return format_double(cfg.val_fraction);
  if (key == "min_count") return std::to_string(cfg.min_count);
  if (key == "embedding_dim") return std::to_string(cfg.embedding_dim);
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

TrainConfig read_config(std::istream& in, TrainConfig cfg) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto body = trim(std::string_view(line).substr(0, line.find('#')));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) throw ParseError("config line is not 'key = value'", lineno);
    set_config_value(cfg, trim(body.substr(0, eq)), body.substr(eq + 1));
  }
  return cfg;
}

TrainConfig load_config(const std::string& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return read_config(in, std::move(base));
}

std::string format_config(const TrainConfig& cfg) {
  std::ostringstream os;
  for (const auto& k : config_keys()) os << k << " = " << get_config_value(cfg, k) << '\n';
  return os.str();
}

std::vector<std::string> search_space_notes(const TrainConfig& cfg) {
  std::vector<std::string> notes;
  if (!one_of<std::size_t>(cfg.batch_size, {16, 64, 128, 256}))
    notes.push_back("batch_size " + std::to_string(cfg.batch_size) + " is outside {16, 64, 128, 256}");
  if (!one_of(cfg.lr, {1e-4, 5e-4, 1e-3})) notes.push_back("lr " + format_double(cfg.lr) + " is outside {1e-4, 5e-4, 1e-3}");
  if (!one_of(cfg.dropout, {0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0}))
    notes.push_back("dropout " + format_double(cfg.dropout) + " is outside {0, 0.1, 0.3, 0.5, 0.7, 0.9, 1}");
  if (!one_of<std::size_t>(cfg.layers, {2, 3})) notes.push_back("layers " + std::to_string(cfg.layers) + " is outside {2, 3}");
  return notes;
}

}  // namespace sgsl::train

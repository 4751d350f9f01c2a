#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "sgsl/errors.hpp"
#include "sgsl/format.hpp"
#include "sgsl/train.hpp"

namespace sgsl::train {

namespace {

constexpr std::string_view kMagic = "sgsl-checkpoint 1";

struct LineReader {
  std::istream& in;
  std::size_t lineno = 0;

  std::string next() {
    std::string line;
    if (!std::getline(in, line)) throw ParseError("checkpoint truncated", lineno + 1);
    ++lineno;
    return line;
  }

  // "<key> <rest>" -> rest
  std::string field(std::string_view key) {
    auto line = next();
    if (line.rfind(std::string(key) + ' ', 0) != 0) throw ParseError("expected '" + std::string(key) + "'", lineno);
    return line.substr(key.size() + 1);
  }

  std::size_t count(std::string_view key) {
    auto v = parse_unsigned(field(key));
    if (!v) throw ParseError("bad count for '" + std::string(key) + "'", lineno);
    return static_cast<std::size_t>(*v);
  }
};

void write_tensor(std::ostream& out, const std::string& name, const ad::Tensor& t) {
  out << "tensor " << name << ' ' << t.rows() << ' ' << t.cols() << '\n';
  for (std::size_t r = 0; r < t.rows(); ++r) {
    auto row = t.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) out << (c ? " " : "") << format_double(row[c]);
    out << '\n';
  }
}

ad::Tensor read_tensor(LineReader& rd, const std::string& name) {
  std::istringstream head(rd.field("tensor"));
  std::string got;
  std::size_t rows = 0, cols = 0;
  if (!(head >> got >> rows >> cols) || got != name)
    throw ParseError("expected tensor '" + name + "'", rd.lineno);
  ad::Tensor t(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    std::istringstream line(rd.next());
    std::string tok;
    std::size_t c = 0;
    while (line >> tok) {
      auto v = parse_double(tok);
      if (!v || c >= cols) throw ParseError("bad value in tensor '" + name + "'", rd.lineno);
      t(r, c++) = *v;
    }
    if (c != cols) throw ParseError("short row in tensor '" + name + "'", rd.lineno);
  }
  return t;
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& ck) {
  out << kMagic << '\n';
  const auto cfg = format_config(ck.config);
  out << "config " << config_keys().size() << '\n' << cfg;
  out << "epoch " << ck.epoch << '\n';
  out << "val_accuracy " << format_double(ck.val_accuracy) << '\n';
  out << "labels " << ck.label_names.size() << '\n';
  for (const auto& l : ck.label_names) out << l << '\n';
  out << "vocab " << ck.vocab.size() - 1 << '\n';
  for (text::WordId w = 1; w < ck.vocab.size(); ++w) out << ck.vocab.word_of(w) << '\t' << ck.vocab.count_of(w) << '\n';
  out << "layers " << ck.params.layers.size() << '\n';
  const auto names = ck.params.names();
  const auto tensors = ck.params.tensors();
  for (std::size_t i = 0; i < names.size(); ++i) write_tensor(out, names[i], *tensors[i]);
  out << "end\n";
}

Checkpoint read_checkpoint(std::istream& in) {
  LineReader rd{in};
  if (rd.next() != kMagic) throw ParseError("not a checkpoint (bad header)", 1);
  Checkpoint ck;
  std::ostringstream cfg;
  for (std::size_t i = 0, n = rd.count("config"); i < n; ++i) cfg << rd.next() << '\n';
  std::istringstream cfg_in(cfg.str());
  ck.config = read_config(cfg_in);
  ck.epoch = rd.count("epoch");
  auto acc = parse_double(rd.field("val_accuracy"));
  if (!acc) throw ParseError("bad val_accuracy", rd.lineno);
  ck.val_accuracy = *acc;
  for (std::size_t i = 0, n = rd.count("labels"); i < n; ++i) ck.label_names.push_back(rd.next());

  std::vector<std::string> words;
  std::vector<std::size_t> counts;
  for (std::size_t i = 0, n = rd.count("vocab"); i < n; ++i) {
    auto line = rd.next();
    const auto tab = line.rfind('\t');
    auto c = tab == std::string::npos ? std::nullopt : parse_unsigned(std::string_view(line).substr(tab + 1));
    if (!c) throw ParseError("bad vocabulary entry", rd.lineno);
    words.push_back(line.substr(0, tab));
    counts.push_back(static_cast<std::size_t>(*c));
  }
  ck.vocab = text::Vocabulary(std::move(words), std::move(counts));

  ck.params.layers.resize(rd.count("layers"));
  const auto names = ck.params.names();
  const auto tensors = ck.params.tensors();
  for (std::size_t i = 0; i < names.size(); ++i) *tensors[i] = read_tensor(rd, names[i]);
  if (rd.next() != "end") throw ParseError("expected 'end'", rd.lineno);
  return ck;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write checkpoint '" + path + "'");
  write_checkpoint(out, ck);
  if (!out) throw ConfigError("failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open checkpoint '" + path + "'");
  return read_checkpoint(in);
}

}  // namespace sgsl::train

#include "sgsl/tape.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "sgsl/errors.hpp"

namespace sgsl::ad {

namespace {

constexpr std::size_t npos = static_cast<std::size_t>(-1);

void matmul_into(const Tensor& a, const Tensor& b, Tensor& out) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  for (std::size_t i = 0; i < n; ++i) {
    double* o = out.row(i).data();
    const double* ai = a.row(i).data();
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      if (aip == 0.0) continue;
      const double* bp = b.row(p).data();
      for (std::size_t j = 0; j < m; ++j) o[j] += aip * bp[j];
    }
  }
}

// out += a^T * g
void matmul_at_into(const Tensor& a, const Tensor& g, Tensor& out) {
  const std::size_t n = a.rows(), k = a.cols(), m = g.cols();
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a.row(i).data();
    const double* gi = g.row(i).data();
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      if (aip == 0.0) continue;
      double* o = out.row(p).data();
      for (std::size_t j = 0; j < m; ++j) o[j] += aip * gi[j];
    }
  }
}

// out += g * b^T
void matmul_bt_into(const Tensor& g, const Tensor& b, Tensor& out) {
  const std::size_t n = g.rows(), m = g.cols(), k = b.rows();
  for (std::size_t i = 0; i < n; ++i) {
    const double* gi = g.row(i).data();
    double* o = out.row(i).data();
    for (std::size_t p = 0; p < k; ++p) {
      const double* bp = b.row(p).data();
      double acc = 0.0;
      for (std::size_t j = 0; j < m; ++j) acc += gi[j] * bp[j];
      o[p] += acc;
    }
  }
}

}  // namespace

const char* op_name(Op op) noexcept {
  switch (op) {
    case Op::constant: return "constant";
    case Op::parameter: return "parameter";
    case Op::matmul: return "matmul";
    case Op::add: return "add";
    case Op::scale: return "scale";
    case Op::mul: return "mul";
    case Op::concat_cols: return "concat_cols";
    case Op::gather_rows: return "gather_rows";
    case Op::scatter_add_rows: return "scatter_add_rows";
    case Op::relu: return "relu";
    case Op::leaky_relu: return "leaky_relu";
    case Op::exp: return "exp";
    case Op::log: return "log";
    case Op::row_softmax: return "row_softmax";
    case Op::segment_softmax: return "segment_softmax";
    case Op::sum: return "sum";
    case Op::mean: return "mean";
    case Op::dropout: return "dropout";
    case Op::cross_entropy: return "cross_entropy";
    case Op::clamp: return "clamp";
    case Op::straight_through: return "straight_through";
  }
  return "unknown";
}

const Tensor& Tape::val(std::size_t id) const {
  const auto& n = nodes_[id];
  return n.external ? *n.external : n.value;
}

const Tensor& Tape::value(Var v) const {
  check(v);
  return val(v.id);
}

Op Tape::op(Var v) const {
  check(v);
  return nodes_[v.id].op;
}

void Tape::check(Var v) const { SGSL_EXPECT(v.valid() && v.id < nodes_.size(), "variable not on this tape"); }

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

Var Tape::constant(Tensor value) {
  Node n{Op::constant};
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::parameter(const Tensor& value) {
  Node n{Op::parameter};
  n.external = &value;
  return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
  check(a), check(b);
  const auto& x = val(a.id);
  const auto& y = val(b.id);
  SGSL_EXPECT(x.cols() == y.rows(), "matmul inner dimensions differ");
  Node n{Op::matmul, a.id, b.id};
  n.value = Tensor(x.rows(), y.cols());
  matmul_into(x, y, n.value);
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  check(a), check(b);
  const auto& x = val(a.id);
  const auto& y = val(b.id);
  SGSL_EXPECT(x.same_shape(y), "add shape mismatch");
  Node n{Op::add, a.id, b.id};
  n.value = x;
  for (std::size_t i = 0; i < y.size(); ++i) n.value[i] += y[i];
  return push(std::move(n));
}

Var Tape::scale(Var a, double factor) {
  check(a);
  Node n{Op::scale, a.id};
  n.s0 = factor;
  n.value = val(a.id);
  for (auto& x : n.value.data()) x *= factor;
  return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
  check(a), check(b);
  const auto& x = val(a.id);
  const auto& y = val(b.id);
  const bool broadcast = !x.same_shape(y);
  SGSL_EXPECT(!broadcast || (y.rows() == x.rows() && y.cols() == 1), "mul shape mismatch");
  Node n{Op::mul, a.id, b.id};
  n.value = x;
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) n.value(r, c) *= broadcast ? y(r, 0) : y(r, c);
  return push(std::move(n));
}

Var Tape::concat_cols(Var a, Var b) {
  check(a), check(b);
  const auto& x = val(a.id);
  const auto& y = val(b.id);
  SGSL_EXPECT(x.rows() == y.rows(), "concat_cols row mismatch");
  Node n{Op::concat_cols, a.id, b.id};
  n.value = Tensor(x.rows(), x.cols() + y.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto o = n.value.row(r);
    std::copy(x.row(r).begin(), x.row(r).end(), o.begin());
    std::copy(y.row(r).begin(), y.row(r).end(), o.begin() + static_cast<std::ptrdiff_t>(x.cols()));
  }
  return push(std::move(n));
}

Var Tape::gather_rows(Var a, std::vector<std::size_t> index) {
  check(a);
  const auto& x = val(a.id);
  Node n{Op::gather_rows, a.id};
  n.value = Tensor(index.size(), x.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    SGSL_EXPECT(index[i] < x.rows(), "gather_rows index out of range");
    std::copy(x.row(index[i]).begin(), x.row(index[i]).end(), n.value.row(i).begin());
  }
  n.index = std::move(index);
  return push(std::move(n));
}

Var Tape::scatter_add_rows(Var a, std::vector<std::size_t> index, std::size_t out_rows) {
  check(a);
  const auto& x = val(a.id);
  SGSL_EXPECT(index.size() == x.rows(), "scatter_add_rows needs one index per row");
  Node n{Op::scatter_add_rows, a.id};
  n.value = Tensor(out_rows, x.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    SGSL_EXPECT(index[i] < out_rows, "scatter_add_rows index out of range");
    auto o = n.value.row(index[i]);
    auto src = x.row(i);
    for (std::size_t c = 0; c < x.cols(); ++c) o[c] += src[c];
  }
  n.index = std::move(index);
  n.count = out_rows;
  return push(std::move(n));
}

Var Tape::relu(Var a) {
  check(a);
  Node n{Op::relu, a.id};
  n.value = val(a.id);
  for (auto& x : n.value.data()) x = x > 0.0 ? x : 0.0;
  return push(std::move(n));
}

Var Tape::leaky_relu(Var a, double slope) {
  check(a);
  Node n{Op::leaky_relu, a.id};
  n.s0 = slope;
  n.value = val(a.id);
  for (auto& x : n.value.data()) x = x > 0.0 ? x : slope * x;
  return push(std::move(n));
}

Var Tape::exp(Var a) {
  check(a);
  Node n{Op::exp, a.id};
  n.value = val(a.id);
  for (auto& x : n.value.data()) x = std::exp(x);
  return push(std::move(n));
}

Var Tape::log(Var a) {
  check(a);
  Node n{Op::log, a.id};
  n.value = val(a.id);
  for (auto& x : n.value.data()) x = std::log(x);
  return push(std::move(n));
}

Var Tape::row_softmax(Var a) {
  check(a);
  Node n{Op::row_softmax, a.id};
  n.value = stable_softmax(val(a.id));
  return push(std::move(n));
}

Var Tape::segment_softmax(Var a, std::vector<std::size_t> offsets) {
  check(a);
  const auto& x = val(a.id);
  SGSL_EXPECT(x.cols() == 1, "segment_softmax expects a column");
  SGSL_EXPECT(!offsets.empty() && offsets.front() == 0 && offsets.back() == x.rows(),
              "segment offsets must span the column");
  Node n{Op::segment_softmax, a.id};
  n.value = Tensor(x.rows(), 1);
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    const auto lo = offsets[s], hi = offsets[s + 1];
    SGSL_EXPECT(lo <= hi, "segment offsets must be non-decreasing");
    if (lo == hi) continue;
    auto p = stable_softmax(x.data().subspan(lo, hi - lo));
    std::copy(p.begin(), p.end(), n.value.data().begin() + static_cast<std::ptrdiff_t>(lo));
  }
  n.index = std::move(offsets);
  return push(std::move(n));
}

Var Tape::sum(Var a) {
  check(a);
  Node n{Op::sum, a.id};
  double s = 0.0;
  for (double x : val(a.id).data()) s += x;
  n.value = Tensor::scalar(s);
  return push(std::move(n));
}

Var Tape::mean(Var a) {
  check(a);
  const auto& x = val(a.id);
  SGSL_EXPECT(x.size() > 0, "mean of an empty tensor");
  Node n{Op::mean, a.id};
  double s = 0.0;
  for (double v : x.data()) s += v;
  n.value = Tensor::scalar(s / static_cast<double>(x.size()));
  return push(std::move(n));
}

Var Tape::dropout(Var a, Tensor mask) {
  check(a);
  const auto& x = val(a.id);
  SGSL_EXPECT(x.same_shape(mask), "dropout mask shape mismatch");
  Node n{Op::dropout, a.id};
  n.value = x;
  for (std::size_t i = 0; i < x.size(); ++i) n.value[i] *= mask[i];
  n.aux = std::move(mask);
  return push(std::move(n));
}

Var Tape::cross_entropy(Var logits, std::vector<std::size_t> labels) {
  check(logits);
  const auto& x = val(logits.id);
  SGSL_EXPECT(labels.size() == x.rows() && x.rows() > 0, "cross_entropy needs one label per row");
  Node n{Op::cross_entropy, logits.id};
  n.aux = stable_softmax(x);
  double loss = 0.0;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    SGSL_EXPECT(labels[r] < x.cols(), "label out of range");
    const auto row = x.row(r);
    const double hi = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - hi);
    loss += hi + std::log(z) - row[labels[r]];
  }
  n.value = Tensor::scalar(loss / static_cast<double>(x.rows()));
  n.index = std::move(labels);
  return push(std::move(n));
}

Var Tape::clamp(Var a, double lo, double hi) {
  check(a);
  SGSL_EXPECT(lo <= hi, "clamp bounds inverted");
  Node n{Op::clamp, a.id};
  n.s0 = lo;
  n.s1 = hi;
  n.value = val(a.id);
  for (auto& x : n.value.data()) x = std::clamp(x, lo, hi);
  return push(std::move(n));
}

Var Tape::straight_through(Tensor hard, Var soft) {
  check(soft);
  SGSL_EXPECT(hard.same_shape(val(soft.id)), "straight_through shape mismatch");
  Node n{Op::straight_through, soft.id};
  n.value = std::move(hard);
  return push(std::move(n));
}

Gradients Tape::backward(Var loss) {
  check(loss);
  SGSL_EXPECT(val(loss.id).rows() == 1 && val(loss.id).cols() == 1, "backward requires a scalar loss");

  std::vector<std::optional<Tensor>> grad(nodes_.size());
  auto acc = [&](std::size_t id) -> Tensor& {
    if (!grad[id]) grad[id] = Tensor(val(id).rows(), val(id).cols());
    return *grad[id];
  };
  grad[loss.id] = Tensor::scalar(1.0);
  visits_ = 0;

  for (std::size_t i = loss.id + 1; i-- > 0;) {
    ++visits_;
    if (!grad[i]) continue;
    const Node& n = nodes_[i];
    const Tensor& g = *grad[i];
    switch (n.op) {
      case Op::constant:
      case Op::parameter:
        break;
      case Op::matmul:
        matmul_bt_into(g, val(n.b), acc(n.a));
        matmul_at_into(val(n.a), g, acc(n.b));
        break;
      case Op::add: {
        auto& ga = acc(n.a);
        for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k];
        auto& gb = acc(n.b);
        for (std::size_t k = 0; k < g.size(); ++k) gb[k] += g[k];
        break;
      }
      case Op::scale: {
        auto& ga = acc(n.a);
        for (std::size_t k = 0; k < g.size(); ++k) ga[k] += n.s0 * g[k];
        break;
      }
      case Op::mul: {
        const auto& x = val(n.a);
        const auto& y = val(n.b);
        const bool broadcast = !x.same_shape(y);
        auto& ga = acc(n.a);
        auto& gb = acc(n.b);
        for (std::size_t r = 0; r < x.rows(); ++r)
          for (std::size_t c = 0; c < x.cols(); ++c) {
            const double yv = broadcast ? y(r, 0) : y(r, c);
            ga(r, c) += g(r, c) * yv;
            (broadcast ? gb(r, 0) : gb(r, c)) += g(r, c) * x(r, c);
          }
        break;
      }
      case Op::concat_cols: {
        auto& ga = acc(n.a);
        auto& gb = acc(n.b);
        const auto ca = ga.cols();
        for (std::size_t r = 0; r < g.rows(); ++r) {
          auto gr = g.row(r);
          for (std::size_t c = 0; c < ca; ++c) ga(r, c) += gr[c];
          for (std::size_t c = 0; c < gb.cols(); ++c) gb(r, c) += gr[ca + c];
        }
        break;
      }
      case Op::gather_rows: {
        auto& ga = acc(n.a);
        for (std::size_t k = 0; k < n.index.size(); ++k) {
          auto dst = ga.row(n.index[k]);
          auto src = g.row(k);
          for (std::size_t c = 0; c < g.cols(); ++c) dst[c] += src[c];
        }
        break;
      }
      case Op::scatter_add_rows: {
        auto& ga = acc(n.a);
        for (std::size_t k = 0; k < n.index.size(); ++k) {
          auto dst = ga.row(k);
          auto src = g.row(n.index[k]);
          for (std::size_t c = 0; c < g.cols(); ++c) dst[c] += src[c];
        }
        break;
      }
      case Op::relu: {
        const auto& x = val(n.a);
        auto& ga = acc(n.a);
        for (std::size_t k = 0; k < g.size(); ++k) ga[k] += x[k] > 0.0 ? g[k] : 0.0;
        break;
      }
      case Op::leaky_relu: {
        const auto& x = val(n.a);
        auto& ga = acc(n.a);
        for (std::size_t k = 0; k < g.size(); ++k) ga[k] += x[k] > 0.0 ? g[k] : n.s0 * g[k];
        break;
      }
      case Op::exp: {
        auto& ga = acc(n.a);
        for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] * n.value[k];
        break;
      }
      case Op::log: {
        const auto& x = val(n.a);
        auto& ga = acc(n.a);
        for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] / x[k];
        break;
      }
      case Op::row_softmax: {
        auto& ga = acc(n.a);
        for (std::size_t r = 0; r < g.rows(); ++r) {
          auto y = n.value.row(r);
          auto gr = g.row(r);
          double dot = 0.0;
          for (std::size_t c = 0; c < y.size(); ++c) dot += y[c] * gr[c];
          for (std::size_t c = 0; c < y.size(); ++c) ga(r, c) += y[c] * (gr[c] - dot);
        }
        break;
      }
      case Op::segment_softmax: {
        auto& ga = acc(n.a);
        for (std::size_t s = 0; s + 1 < n.index.size(); ++s) {
          const auto lo = n.index[s], hi = n.index[s + 1];
          double dot = 0.0;
          for (auto k = lo; k < hi; ++k) dot += n.value[k] * g[k];
          for (auto k = lo; k < hi; ++k) ga[k] += n.value[k] * (g[k] - dot);
        }
        break;
      }
      case Op::sum: {
        auto& ga = acc(n.a);
        for (auto& x : ga.data()) x += g[0];
        break;
      }
      case Op::mean: {
        auto& ga = acc(n.a);
        const double w = g[0] / static_cast<double>(ga.size());
        for (auto& x : ga.data()) x += w;
        break;
      }
      case Op::dropout: {
        auto& ga = acc(n.a);
        for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] * n.aux[k];
        break;
      }
      case Op::cross_entropy: {
        auto& ga = acc(n.a);
        const double w = g[0] / static_cast<double>(ga.rows());
        for (std::size_t r = 0; r < ga.rows(); ++r)
          for (std::size_t c = 0; c < ga.cols(); ++c)
            ga(r, c) += w * (n.aux(r, c) - (c == n.index[r] ? 1.0 : 0.0));
        break;
      }
      case Op::clamp: {
        const auto& x = val(n.a);
        auto& ga = acc(n.a);
        for (std::size_t k = 0; k < g.size(); ++k)
          if (x[k] >= n.s0 && x[k] <= n.s1) ga[k] += g[k];
        break;
      }
      case Op::straight_through: {
        auto& ga = acc(n.a);
        for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k];
        break;
      }
    }
  }

  Gradients out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].op != Op::parameter) continue;
    out.emplace(i, grad[i] ? std::move(*grad[i]) : Tensor(val(i).rows(), val(i).cols()));
  }
  return out;
}

}  // namespace sgsl::ad

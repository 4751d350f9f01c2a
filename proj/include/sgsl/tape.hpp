#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <vector>

#include "sgsl/tensor.hpp"

namespace sgsl::ad {

// Handle to a node recorded on a Tape.
struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
  bool valid() const noexcept { return id != static_cast<std::size_t>(-1); }
};

enum class Op : std::uint8_t {
  constant,
  parameter,
  matmul,
  add,
  scale,
  mul,
  concat_cols,
  gather_rows,
  scatter_add_rows,
  relu,
  leaky_relu,
  exp,
  log,
  row_softmax,
  segment_softmax,
  sum,
  mean,
  dropout,
  cross_entropy,
  clamp,
  straight_through,
};

const char* op_name(Op op) noexcept;

// Map from parameter node id to d(loss)/d(parameter).
using Gradients = std::map<std::size_t, Tensor>;

// Records primitive applications in execution order and replays them in
// reverse to accumulate gradients. Not thread-safe; one tape per forward pass.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  Var constant(Tensor value);
  // The tensor is referenced, not copied; it must outlive the tape.
  Var parameter(const Tensor& value);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var scale(Var a, double factor);
  // Elementwise product. `b` may also be a column (rows x 1) broadcast across a's columns.
  Var mul(Var a, Var b);
  Var concat_cols(Var a, Var b);
  Var gather_rows(Var a, std::vector<std::size_t> index);
  // out[index[i]] += a[i]; out has `out_rows` rows.
  Var scatter_add_rows(Var a, std::vector<std::size_t> index, std::size_t out_rows);
  Var relu(Var a);
  Var leaky_relu(Var a, double slope);
  Var exp(Var a);
  Var log(Var a);
  Var row_softmax(Var a);
  // Softmax of a column over contiguous segments [offsets[i], offsets[i+1]).
  Var segment_softmax(Var a, std::vector<std::size_t> offsets);
  Var sum(Var a);
  Var mean(Var a);
  // Multiplies by a fixed mask (already scaled by 1/(1-rate)).
  Var dropout(Var a, Tensor mask);
  // Mean over rows of -log softmax(logits)[label].
  Var cross_entropy(Var logits, std::vector<std::size_t> labels);
  Var clamp(Var a, double lo, double hi);
  // Forward value is `hard`; the backward pass routes gradients to `soft` unchanged.
  Var straight_through(Tensor hard, Var soft);

  const Tensor& value(Var v) const;
  Op op(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }

  // Reverse sweep from a 1x1 loss. Returns gradients for every parameter node;
  // parameters off the loss path get zero tensors.
  Gradients backward(Var loss);
  std::size_t last_backward_visits() const noexcept { return visits_; }

 private:
  struct Node {
    explicit Node(Op o, std::size_t lhs = static_cast<std::size_t>(-1),
                  std::size_t rhs = static_cast<std::size_t>(-1))
        : op(o), a(lhs), b(rhs) {}
    Op op;
    std::size_t a = static_cast<std::size_t>(-1);
    std::size_t b = static_cast<std::size_t>(-1);
    double s0 = 0.0;
    double s1 = 0.0;
    std::vector<std::size_t> index;
    std::size_t count = 0;
    Tensor aux;  // saved mask / hard value / softmax output
    Tensor value;
    const Tensor* external = nullptr;
  };

  const Tensor& val(std::size_t id) const;
  Var push(Node node);
  void check(Var v) const;

  std::vector<Node> nodes_;
  std::size_t visits_ = 0;
};

}  // namespace sgsl::ad

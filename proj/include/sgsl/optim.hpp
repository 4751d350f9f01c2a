#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "sgsl/tape.hpp"
#include "sgsl/tensor.hpp"

namespace sgsl::ad {

struct AdamState {
  std::size_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam update, in place. Moment buffers are created on the first call.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state);

// Builds a scalar loss on `tape` from the parameter handles (one per tensor, same order).
using TapeProgram = std::function<Var(Tape& tape, std::span<const Var> params)>;

// Max over all entries of |analytic - central| / max(|analytic|, |central|, 1e-6).
// Gradients below the floor are judged on absolute error at that scale; central
// differences cannot resolve them relatively in double precision.
// `f` must be deterministic: any noise it draws has to be fixed across calls.
double check_gradient(const TapeProgram& f, std::span<Tensor* const> params, double eps = 1e-5);
double check_gradient(const TapeProgram& f, Tensor& x, double eps = 1e-5);

}  // namespace sgsl::ad

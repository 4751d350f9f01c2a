#include "sgsl/optim.hpp"

#include <algorithm>
#include <cmath>

#include "sgsl/errors.hpp"

namespace sgsl::ad {

void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state) {
  SGSL_EXPECT(params.size() == grads.size(), "adam_step: one gradient per parameter");
  SGSL_EXPECT(state.lr >= 0.0, "adam_step: negative learning rate");
  if (state.m.empty()) {
    for (const Tensor* p : params) {
      state.m.emplace_back(p->rows(), p->cols());
      state.v.emplace_back(p->rows(), p->cols());
    }
  }
  SGSL_EXPECT(state.m.size() == params.size(), "adam_step: parameter count changed");
  for (std::size_t i = 0; i < params.size(); ++i) {
    SGSL_EXPECT(params[i]->same_shape(grads[i]) && state.m[i].same_shape(grads[i]),
                "adam_step: shape mismatch");
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    const Tensor& g = grads[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g[k];
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g[k] * g[k];
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      p[k] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

double check_gradient(const TapeProgram& f, std::span<Tensor* const> params, double eps) {
  if (!(eps > 0.0)) throw ContractViolation("check_gradient: eps must be positive");

  auto evaluate = [&]() {
    Tape tape;
    std::vector<Var> vars;
    for (Tensor* p : params) vars.push_back(tape.parameter(*p));
    return tape.value(f(tape, vars)).item();
  };

  Tape tape;
  std::vector<Var> vars;
  for (Tensor* p : params) vars.push_back(tape.parameter(*p));
  Var loss = f(tape, vars);
  auto grads = tape.backward(loss);

  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& analytic = grads.at(vars[i].id);
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double saved = p[k];
      p[k] = saved + eps;
      const double up = evaluate();
      p[k] = saved - eps;
      const double down = evaluate();
      p[k] = saved;
      const double central = (up - down) / (2.0 * eps);
      const double a = analytic[k];
      const double denom = std::max({std::abs(a), std::abs(central), 1e-6});
      worst = std::max(worst, std::abs(a - central) / denom);
    }
  }
  return worst;
}

double check_gradient(const TapeProgram& f, Tensor& x, double eps) {
  Tensor* ptr = &x;
  return check_gradient(f, std::span<Tensor* const>(&ptr, 1), eps);
}

}  // namespace sgsl::ad

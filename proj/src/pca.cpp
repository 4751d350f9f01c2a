#include "sgsl/pca.hpp"

#include <algorithm>
#include <cmath>

#include "sgsl/errors.hpp"

namespace sgsl {

namespace {

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

std::vector<double> multiply(const ad::Tensor& c, const std::vector<double>& v) {
  std::vector<double> out(v.size(), 0.0);
  for (std::size_t i = 0; i < v.size(); ++i)
    for (std::size_t j = 0; j < v.size(); ++j) out[i] += c(i, j) * v[j];
  return out;
}

void fix_sign(std::vector<double>& v) {
  auto it = std::max_element(v.begin(), v.end(), [](double a, double b) { return std::abs(a) < std::abs(b); });
  if (it != v.end() && *it < 0)
    for (auto& x : v) x = -x;
}

}  // namespace

Pca pca_power_iteration(const ad::Tensor& x, std::size_t k, double tol, std::size_t max_iter) {
  SGSL_EXPECT(x.rows() > 0 && x.cols() > 0, "pca: empty input");
  SGSL_EXPECT(k > 0, "pca: need at least one component");
  const auto n = x.rows(), d = x.cols();
  k = std::min(k, d);

  Pca out;
  out.mean.assign(d, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) out.mean[c] += x(r, c) / static_cast<double>(n);
  ad::Tensor centered(n, d);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) centered(r, c) = x(r, c) - out.mean[c];

  ad::Tensor cov(d, d);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) cov(i, j) += centered(r, i) * centered(r, j) / static_cast<double>(n);

  out.components = ad::Tensor(k, d);
  std::vector<std::vector<double>> found;
  for (std::size_t comp = 0; comp < k; ++comp) {
    // Deterministic start with every coordinate nonzero and no symmetry.
    std::vector<double> v(d);
    for (std::size_t i = 0; i < d; ++i) v[i] = 1.0 + 0.1 * static_cast<double>(i % 7) + 0.01 * static_cast<double>(i);
    auto orthogonalize = [&](std::vector<double>& w) {
      for (const auto& u : found) {
        double dot = 0.0;
        for (std::size_t i = 0; i < d; ++i) dot += w[i] * u[i];
        for (std::size_t i = 0; i < d; ++i) w[i] -= dot * u[i];
      }
    };
    orthogonalize(v);
    double nv = norm(v);
    for (auto& e : v) e /= nv;

    double lambda = 0.0;
    for (std::size_t it = 0; it < max_iter; ++it) {
      ++out.iterations;
      auto w = multiply(cov, v);
      orthogonalize(w);
      const double nw = norm(w);
      if (nw < 1e-300) {
        lambda = 0.0;
        break;
      }
      for (auto& e : w) e /= nw;
      fix_sign(w);
      double delta = 0.0;
      for (std::size_t i = 0; i < d; ++i) delta = std::max(delta, std::abs(w[i] - v[i]));
      v = std::move(w);
      lambda = nw;
      if (delta < tol) break;
    }
    fix_sign(v);
    found.push_back(v);
    out.variances.push_back(lambda);
    for (std::size_t i = 0; i < d; ++i) out.components(comp, i) = v[i];
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) cov(i, j) -= lambda * v[i] * v[j];
  }

  out.projected = ad::Tensor(n, k);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < k; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i < d; ++i) s += centered(r, i) * out.components(c, i);
      out.projected(r, c) = s;
    }
  return out;
}

}  // namespace sgsl

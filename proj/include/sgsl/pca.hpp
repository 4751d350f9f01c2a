#pragma once

#include <cstddef>
#include <vector>

#include "sgsl/tensor.hpp"

namespace sgsl {

struct Pca {
  ad::Tensor components;  // k x d, unit rows
  ad::Tensor projected;   // n x k coordinates of the centered rows
  std::vector<double> mean;
  std::vector<double> variances;  // eigenvalues of the covariance, descending
  std::size_t iterations = 0;
};

// Top-k principal axes of the rows of `x` by power iteration with deflation.
// Each axis is signed so that its largest-magnitude entry is positive.
Pca pca_power_iteration(const ad::Tensor& x, std::size_t k = 2, double tol = 1e-9, std::size_t max_iter = 1000);

}  // namespace sgsl

#include "sgsl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sgsl/errors.hpp"

namespace sgsl::ad {

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  SGSL_EXPECT(data_.size() == rows * cols, "tensor data length must equal rows*cols");
}

Tensor::Tensor(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    SGSL_EXPECT(r.size() == cols_, "ragged tensor literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Tensor Tensor::column(std::vector<double> values) {
  const auto n = values.size();
  return Tensor(n, 1, std::move(values));
}

double Tensor::item() const {
  SGSL_EXPECT(rows_ == 1 && cols_ == 1, "item() requires a 1x1 tensor");
  return data_[0];
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  SGSL_EXPECT(a.same_shape(b), "max_abs_diff shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::vector<double> stable_softmax(std::span<const double> row) {
  SGSL_EXPECT(!row.empty(), "softmax of an empty row");
  const double hi = *std::max_element(row.begin(), row.end());
  std::vector<double> out(row.size());
  double z = 0.0;
  for (std::size_t i = 0; i < row.size(); ++i) {
    out[i] = std::exp(row[i] - hi);
    z += out[i];
  }
  for (auto& x : out) x /= z;
  return out;
}

Tensor stable_softmax(const Tensor& rows) {
  SGSL_EXPECT(rows.cols() > 0 && rows.rows() > 0, "softmax of an empty row");
  Tensor out(rows.rows(), rows.cols());
  for (std::size_t r = 0; r < rows.rows(); ++r) {
    auto s = stable_softmax(rows.row(r));
    std::copy(s.begin(), s.end(), out.row(r).begin());
  }
  return out;
}

}  // namespace sgsl::ad

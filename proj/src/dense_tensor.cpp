#include "polydec/dense_tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <string>

#include "polydec/errors.hpp"

namespace polydec {

std::size_t product(std::span<const std::size_t> dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

bool next_index(std::vector<std::size_t>& index, std::span<const std::size_t> dims) {
  for (std::size_t p = 0; p < index.size(); ++p) {
    if (++index[p] < dims[p]) return true;
    index[p] = 0;
  }
  return false;
}

DenseTensor::DenseTensor(std::vector<std::size_t> dims)
    : dims_(std::move(dims)), data_(product(dims_), 0.0) {}

DenseTensor::DenseTensor(std::vector<std::size_t> dims, std::vector<double> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
  if (data_.size() != product(dims_)) {
    throw DimensionError("DenseTensor: data length " + std::to_string(data_.size()) +
                         " does not match product of dims " + std::to_string(product(dims_)));
  }
}

DenseTensor DenseTensor::from_matrix(const Eigen::MatrixXd& m) {
  DenseTensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  Eigen::Map<Eigen::MatrixXd>(t.data_.data(), m.rows(), m.cols()) = m;
  return t;
}

std::size_t DenseTensor::linear_index(std::span<const std::size_t> index) const {
  if (index.size() != dims_.size()) {
    throw DimensionError("DenseTensor: index of order " + std::to_string(index.size()) +
                         " for tensor of order " + std::to_string(dims_.size()));
  }
  std::size_t lin = 0;
  std::size_t stride = 1;
  for (std::size_t p = 0; p < dims_.size(); ++p) {
    if (index[p] >= dims_[p]) throw DimensionError("DenseTensor: index out of range");
    lin += index[p] * stride;
    stride *= dims_[p];
  }
  return lin;
}

double DenseTensor::norm() const {
  double s = 0.0;
  for (double x : data_) s += x * x;
  return std::sqrt(s);
}

DenseTensor DenseTensor::reshaped(std::vector<std::size_t> dims) const {
  return DenseTensor(std::move(dims), data_);
}

Eigen::Map<const Eigen::MatrixXd> DenseTensor::as_matrix() const {
  const auto rows = static_cast<Eigen::Index>(dims_.empty() ? 1 : dims_[0]);
  const auto cols = static_cast<Eigen::Index>(rows == 0 ? 0 : data_.size() / rows);
  return Eigen::Map<const Eigen::MatrixXd>(data_.data(), rows, cols);
}

double relative_error(const DenseTensor& a, const DenseTensor& b) {
  if (a.dims() != b.dims()) throw DimensionError("relative_error: dims differ");
  double diff = 0.0;
  double ref = 0.0;
  const auto da = a.data();
  const auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) {
    diff += (da[i] - db[i]) * (da[i] - db[i]);
    ref += db[i] * db[i];
  }
  return ref > 0.0 ? std::sqrt(diff / ref) : std::sqrt(diff);
}

}  // namespace polydec

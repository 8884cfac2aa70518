#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace polydec {

/// Dense real tensor of arbitrary order stored column-major (first index
/// fastest). With this layout the first-mode unfolding is a plain reshape,
/// and vec(a * b^T) = kron(b, a).
class DenseTensor {
 public:
  DenseTensor() = default;
  explicit DenseTensor(std::vector<std::size_t> dims);
  DenseTensor(std::vector<std::size_t> dims, std::vector<double> data);

  static DenseTensor from_matrix(const Eigen::MatrixXd& m);

  std::size_t order() const { return dims_.size(); }
  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t dim(std::size_t mode) const { return dims_.at(mode); }
  std::size_t size() const { return data_.size(); }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  std::size_t linear_index(std::span<const std::size_t> index) const;

  double& at(std::span<const std::size_t> index) { return data_[linear_index(index)]; }
  double at(std::span<const std::size_t> index) const { return data_[linear_index(index)]; }

  template <typename... Idx>
  double& operator()(Idx... i) {
    const std::size_t idx[] = {static_cast<std::size_t>(i)...};
    return at(idx);
  }
  template <typename... Idx>
  double operator()(Idx... i) const {
    const std::size_t idx[] = {static_cast<std::size_t>(i)...};
    return at(idx);
  }

  double norm() const;

  // Reinterpret the same data under new dims with equal element count.
  DenseTensor reshaped(std::vector<std::size_t> dims) const;

  // Column-major view of the data as dims[0] x (product of the rest).
  Eigen::Map<const Eigen::MatrixXd> as_matrix() const;

  bool operator==(const DenseTensor& other) const = default;

 private:
  std::vector<std::size_t> dims_;
  std::vector<double> data_;
};

std::size_t product(std::span<const std::size_t> dims);

// Advances a column-major multi-index; returns false after the last index.
bool next_index(std::vector<std::size_t>& index, std::span<const std::size_t> dims);

// ||a - b||_F / ||b||_F, or ||a - b||_F when b is zero.
double relative_error(const DenseTensor& a, const DenseTensor& b);

}  // namespace polydec

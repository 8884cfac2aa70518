#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "polydec/dense_tensor.hpp"

namespace polydec {

// Exponent vector of a monomial u_1^a_1 ... u_m^a_m, length m.
using Exponent = std::vector<int>;

int total_degree(const Exponent& alpha);

// s! / (a_1! ... a_m!) for s = |alpha|.
double multinomial(const Exponent& alpha);

std::int64_t binomial(int n, int k);

// All exponents with |alpha| == s over m variables, in lexicographic order.
std::vector<Exponent> exponents_of_degree(int m, int s);

// Index multiset of a symmetric-tensor entry mapped to its exponent vector.
Exponent exponent_of_index(std::span<const std::size_t> index, int m);

struct Term {
  int output;  // 0-based
  Exponent alpha;
  double coeff;
};

/// Polynomial vector map f : R^m -> R^n of total degree at most d without
/// constant terms. Coefficients are stored sparsely per output, keyed by
/// exponent vector; exact zeros are not stored.
class PolyMap {
 public:
  PolyMap(int m, int n, int d);

  // Validates and canonicalizes a term list; duplicate monomials are summed.
  // Throws DimensionError on out-of-range indices or degree overflow and
  // std::invalid_argument on constant terms or nonfinite coefficients.
  static PolyMap from_terms(int m, int n, int d, std::span<const Term> terms);

  int num_inputs() const { return m_; }
  int num_outputs() const { return n_; }
  int degree() const { return d_; }

  const std::map<Exponent, double>& terms(int output) const { return terms_.at(output); }
  double coeff(int output, const Exponent& alpha) const;
  std::size_t term_count() const;

  // Adds c to the coefficient of u^alpha in output i (dropping exact zeros).
  void add(int output, const Exponent& alpha, double c);

  bool operator==(const PolyMap& other) const = default;

 private:
  int m_;
  int n_;
  int d_;
  std::vector<std::map<Exponent, double>> terms_;
};

/// Per output i and degree s, the unique symmetric order-s tensor of
/// dimension m reproducing the degree-s homogeneous part of f_i.
struct GradedSymmetric {
  int m = 0;
  int n = 0;
  int d = 0;
  std::vector<std::vector<DenseTensor>> blocks;  // blocks[i][s - 1]

  const DenseTensor& block(int output, int s) const { return blocks.at(output).at(s - 1); }
};

/// f(u) = W g(V^T u) with g_k(t) = sum_s C(k, s-1) t^s.
struct DecoupledModel {
  Eigen::MatrixXd W;  // n x r
  Eigen::MatrixXd V;  // m x r
  Eigen::MatrixXd C;  // r x d

  int rank() const { return static_cast<int>(W.cols()); }
  int num_inputs() const { return static_cast<int>(V.rows()); }
  int num_outputs() const { return static_cast<int>(W.rows()); }
  int degree() const { return static_cast<int>(C.cols()); }

  // Throws DimensionError if the shapes disagree or r == 0.
  void validate() const;
};

// Branch polynomial g_k and its derivative at t.
double branch_value(const DecoupledModel& model, int k, double t);
double branch_derivative(const DecoupledModel& model, int k, double t);

GradedSymmetric to_graded(const PolyMap& f);

// Requires exactly symmetric blocks; throws std::invalid_argument otherwise.
PolyMap from_graded(const GradedSymmetric& g);

Eigen::VectorXd eval_polymap(const PolyMap& f, const Eigen::VectorXd& u);
Eigen::VectorXd eval_decoupled(const DecoupledModel& model, const Eigen::VectorXd& u);

// Symbolic expansion of sum_k w_k g_k(v_k^T u) into monomials.
PolyMap expand_decoupled(const DecoupledModel& model);

Eigen::MatrixXd jacobian(const PolyMap& f, const Eigen::VectorXd& u);
Eigen::MatrixXd jacobian_decoupled(const DecoupledModel& model, const Eigen::VectorXd& u);

struct ParameterCounts {
  std::int64_t coupled;
  std::int64_t decoupled;
};

ParameterCounts report_compression(int m, int n, int d, int r);

// Coefficient difference ||coeffs(a) - coeffs(b)|| / ||coeffs(b)|| over the
// union of monomials (absolute when b is zero).
double coefficient_residual(const PolyMap& a, const PolyMap& b);

}  // namespace polydec

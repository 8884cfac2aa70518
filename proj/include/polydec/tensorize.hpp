#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "polydec/dense_tensor.hpp"
#include "polydec/polymap.hpp"

namespace polydec {

// Contracts mode `mode` of t against the columns of `m` (shape J x I_mode):
// result(..., j, ...) = sum_i t(..., i, ...) * m(j, i).
DenseTensor mode_n_product(const DenseTensor& t, const Eigen::MatrixXd& m, std::size_t mode);

// I_1 x (I_2 ... I_N) matrix whose row i is vec of slice i.
Eigen::MatrixXd unfold_mode1(const DenseTensor& t);

// Kronecker product a (x) b with b's index fastest.
Eigen::VectorXd kron(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// v (x) ... (x) v with `power` factors; power 0 yields the scalar 1.
Eigen::VectorXd kron_power(const Eigen::VectorXd& v, int power);

// delta = sum_{k=1..d} m^(k-1): length of a coefficient tube.
std::int64_t tube_length(int m, int d);

// M = binom(m+d-1, d-1), the bound on rank(A).
std::int64_t rank_bound(int m, int d);
// The same bound accumulated as 1 + m + binom(m+1, 2) + ... + binom(m+d-2, d-1).
std::int64_t rank_bound_by_blocks(int m, int d);

// [Psi1 | Psi2 | unfold(Psi3) | ... | unfold(Psi_d)] for output `output` of f.
Eigen::MatrixXd psi_matrix(const PolyMap& f, int output);

// Coefficient tensor Q (n x m x delta) with Q(i, :, :) = psi_matrix(f, i).
DenseTensor build_q(const PolyMap& f);

/// Sampling points together with the Vandermonde-like matrix A whose column j
/// is [1 | 2 u_j | 3 u_j (x) u_j | ... | d u_j^(x)(d-1)].
struct SamplePlan {
  Eigen::MatrixXd points;  // m x N, column j is u^(j)
  int degree = 0;
  Eigen::MatrixXd A;  // delta x N

  int num_inputs() const { return static_cast<int>(points.rows()); }
  int num_points() const { return static_cast<int>(points.cols()); }
};

SamplePlan build_sample_plan(const Eigen::MatrixXd& points, int m, int d);

// N i.i.d. standard-normal points from a generator seeded with `seed`.
Eigen::MatrixXd default_points(int m, int d, int n_points, std::uint64_t seed);

// Jacobian tensor J (n x m x N) with J(:, :, k) = jacobian(f, u^(k)).
DenseTensor build_j(const PolyMap& f, const SamplePlan& plan);

// delta x r matrix whose column k is [c_k1 | c_k2 v_k | c_k3 v_k (x) v_k | ...].
Eigen::MatrixXd z_factors(const DecoupledModel& model);

// N x r matrix with H(j, k) = g_k'(v_k^T u^(j)).
Eigen::MatrixXd h_factors(const DecoupledModel& model, const SamplePlan& plan);

// Degree-s blocks stacked along a new first mode: order s+1, n x m x ... x m.
DenseTensor build_ts(const PolyMap& f, int s);

// (1,2)-reshaping n x m x m^(s-1) with tube (i, j, :) = vec(T(i, j, :, ..., :)).
DenseTensor reshape_ts_12(const DenseTensor& ts);

// Concatenates reshaped T^1..T^d along the third mode.
DenseTensor stack_q_from_ts(const std::vector<DenseTensor>& reshaped);

// Largest violation of within-block symmetry over every tube of Q: entries
// of a degree block whose indices form the same multiset must agree.
double structure_violation(const DenseTensor& q, int m, int d);
// Same check for a single delta-vector.
double structure_violation(const Eigen::VectorXd& tube, int m, int d);

// Singular values above sigma_1 * max(rows, cols) * eps * 64.
int numerical_rank(const Eigen::MatrixXd& a);

}  // namespace polydec

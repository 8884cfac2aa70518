#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "polydec/dense_tensor.hpp"
#include "polydec/tensorize.hpp"

namespace polydec {

/// Rank-r CP model sum_k weight_k * a_k^(1) o ... o a_k^(P) plus the
/// diagnostics of the run that produced it.
struct CpdFactors {
  std::vector<Eigen::MatrixXd> factors;  // factor p is dims[p] x r
  Eigen::VectorXd weights;               // empty means all ones
  double fit = 0.0;                      // ||T - model|| / ||T||
  int iterations = 0;
  bool converged = false;
  int restart = 0;                   // index of the winning restart
  std::vector<double> fit_history;   // per-sweep fit of the winning restart
  std::vector<std::string> warnings;

  int rank() const { return factors.empty() ? 0 : static_cast<int>(factors.front().cols()); }
};

struct CpdOptions {
  int max_iters = 2000;
  double tol = 1e-12;
  int restarts = 10;
  std::uint64_t seed = 0;
  // Replaces the random start of restart 0 when set.
  std::optional<std::vector<Eigen::MatrixXd>> init;
};

DenseTensor cpd_reconstruct(const CpdFactors& cpd, const std::vector<std::size_t>& dims);

// Alternating least squares, best fit over `restarts` seeded random starts.
// Requires order >= 3 and r >= 1; throws std::invalid_argument otherwise.
CpdFactors cp_als(const DenseTensor& t, int r, const CpdOptions& options = {});

struct RankOneApprox {
  std::vector<Eigen::VectorXd> vectors;  // unit vectors, one per mode
  double scale = 0.0;
  double residual = 0.0;  // relative error of the rank-one fit
};

// Higher-order power iteration seeded by sequential leading singular vectors.
// The zero tensor yields zero vectors and residual 0.
RankOneApprox best_rank_one(const DenseTensor& t);

struct FactorMatch {
  std::vector<int> permutation;                   // column k of F1 pairs with column permutation[k] of F2
  std::vector<std::vector<double>> scales;        // scales[k][p]: F1_p(:,k) ~ scales[k][p] * F2_p(:,perm[k])
  double congruence = 0.0;                        // min over k of prod over modes of |cos|
  double max_residual = 0.0;
};

// Aligns two factor lists up to column permutation and per-mode scaling.
FactorMatch match_factors(const std::vector<Eigen::MatrixXd>& f1, const std::vector<Eigen::MatrixXd>& f2);

// Replaces the third factor Z of a Q-decomposition by A^T Z.
CpdFactors transfer_third_factor(const CpdFactors& q_cpd, const SamplePlan& plan);

// Replaces the third factor H of a J-decomposition by (A^+)^T H. Requires
// rank(A) == M; throws SamplingError when the plan is under-sampled.
CpdFactors inverse_transfer(const CpdFactors& j_cpd, const SamplePlan& plan);

}  // namespace polydec

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "polydec/cpd.hpp"
#include "polydec/polymap.hpp"
#include "polydec/tensorize.hpp"

namespace polydec {

enum class DecoupleMethod { JacobianCpd, CoefficientCpd, CoupledStructured };

std::string to_string(DecoupleMethod method);

struct DecoupleOptions {
  CpdOptions cpd;  // ALS budget; `restarts` and `seed` are shared with the coupled solver

  // Coupled solver budget per restart.
  int outer_max_iters = 3000;
  double outer_tol = 1e-15;

  // Sampling points for the Jacobian seed of the coupled solver; 0 means max(M, d).
  int seed_points = 0;
};

struct DecoupleReport {
  DecoupledModel model;
  DecoupleMethod method = DecoupleMethod::JacobianCpd;
  double tensor_fit = 0.0;
  double map_residual = 0.0;
  double structure_residual = 0.0;
  bool converged = false;
  int restarts = 0;
  int iterations = 0;
  std::uint64_t seed = 0;
  std::vector<double> objective_history;  // coupled solver only, winning restart
};

// Puts every v_k at unit norm with its largest-magnitude entry positive and
// rescales c_ks by alpha^s so the represented map is unchanged.
DecoupledModel normalize_gauge(DecoupledModel model);

// Least-squares coefficients c of g with g'(v^T u^(j)) ~ h_j. Throws
// SamplingError when the projections do not determine a degree-d polynomial.
Eigen::VectorXd fit_g_from_h(const Eigen::VectorXd& v, const Eigen::VectorXd& h, const SamplePlan& plan, int d);

DecoupleReport decouple_via_j(const PolyMap& f, const SamplePlan& plan, int r, const DecoupleOptions& options = {});
DecoupleReport decouple_via_q(const PolyMap& f, int r, const DecoupleOptions& options = {});

/// Block-coordinate solver for the coupled partially symmetric decomposition
/// T^s = [[W, V, ..., V]] weighted by c_s, jointly over s = 1..d.
DecoupleReport coupled_psym_cpd(const PolyMap& f, int r, const DecoupleOptions& options = {});

// Objective sum_s ||T^s - model_s||_F^2 of the coupled decomposition.
double coupled_objective(const PolyMap& f, const DecoupledModel& model);

struct RankOneResult {
  bool rank_one = false;
  DecoupledModel model;  // r = 1 when rank_one
  double tensor_residual = 0.0;
  double map_residual = 0.0;
};

RankOneResult rank_one_extract(const PolyMap& f);

struct VerificationRecord {
  double identity_residual = 0.0;    // ||J - Q x3 A^T|| / ||J||
  double structure_violation = 0.0;  // max over tubes of Q
  int rank_a = 0;
  std::int64_t rank_bound = 0;
  std::optional<double> h_residual;             // ||H - A^T Z|| / ||H||
  std::optional<double> coefficient_cpd_residual;  // ||Q - [[W, V, Z]]|| / ||Q||
  std::optional<double> jacobian_cpd_residual;     // ||J - [[W, V, H]]|| / ||J||

  bool all_within(double tol) const;
};

VerificationRecord verify_relations(const PolyMap& f, const SamplePlan& plan,
                                    const std::optional<DecoupledModel>& model = std::nullopt);

}  // namespace polydec

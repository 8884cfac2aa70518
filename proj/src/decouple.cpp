#include "polydec/decouple.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "polydec/errors.hpp"

namespace polydec {

namespace {

constexpr double kRankOneTolerance = 1e-8;

Eigen::MatrixXd solve_gram(Eigen::MatrixXd gram, const Eigen::MatrixXd& rhs) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  if (ldlt.info() != Eigen::Success || ldlt.rcond() < 1e-12) {
    gram.diagonal().array() += 1e-12 * std::max(gram.trace(), std::numeric_limits<double>::min());
    ldlt.compute(gram);
  }
  return ldlt.solve(rhs.transpose()).transpose();
}

double frobenius_relative(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const double ref = b.norm();
  const double diff = (a - b).norm();
  return ref > 0.0 ? diff / ref : diff;
}

// Scalar alpha with v / alpha of unit norm and largest-magnitude entry positive.
double gauge_scale(const Eigen::VectorXd& v) {
  const double nrm = v.norm();
  if (nrm == 0.0) return 0.0;
  Eigen::Index imax = 0;
  v.cwiseAbs().maxCoeff(&imax);
  return v[imax] < 0.0 ? -nrm : nrm;
}

Eigen::VectorXd unit_vector(Eigen::Index size, Eigen::Index at) {
  Eigen::VectorXd e = Eigen::VectorXd::Zero(size);
  e[at] = 1.0;
  return e;
}

// Coefficients of a tube of the form z = [c1 | c2 v | c3 v(x)v | ...] read off a tube
// by projecting each degree block onto the Kronecker power of a unit v.
Eigen::VectorXd coefficients_from_tube(const Eigen::VectorXd& z, const Eigen::VectorXd& v, int d) {
  Eigen::VectorXd c(d);
  Eigen::Index offset = 0;
  for (int s = 1; s <= d; ++s) {
    const Eigen::VectorXd power = kron_power(v, s - 1);
    const double nrm2 = power.squaredNorm();
    c[s - 1] = nrm2 > 0.0 ? z.segment(offset, power.size()).dot(power) / nrm2 : 0.0;
    offset += power.size();
  }
  return c;
}

DecoupledModel zero_model(int m, int n, int d, int r) {
  DecoupledModel model{Eigen::MatrixXd::Zero(n, r), Eigen::MatrixXd::Zero(m, r), Eigen::MatrixXd::Zero(r, d)};
  model.V.row(0).setOnes();
  return model;
}

// ---------------------------------------------------------------------------
// Coupled partially symmetric decomposition.

struct CoupledData {
  int m = 0;
  int n = 0;
  int d = 0;
  std::vector<Eigen::MatrixXd> unfolded;  // [s-1]: n x m^s
  double norm_sq = 0.0;
};

CoupledData make_coupled_data(const PolyMap& f) {
  CoupledData data{f.num_inputs(), f.num_outputs(), f.degree(), {}, 0.0};
  for (int s = 1; s <= data.d; ++s) {
    data.unfolded.emplace_back(build_ts(f, s).as_matrix());
    data.norm_sq += data.unfolded.back().squaredNorm();
  }
  return data;
}

// [s-1]: m^s x r matrix with column k = v_k (x) ... (x) v_k (s factors).
std::vector<Eigen::MatrixXd> kron_powers(const Eigen::MatrixXd& v, int d) {
  std::vector<Eigen::MatrixXd> out;
  for (int s = 1; s <= d; ++s) {
    Eigen::MatrixXd k(static_cast<Eigen::Index>(std::pow(v.rows(), s)), v.cols());
    for (Eigen::Index c = 0; c < v.cols(); ++c) k.col(c) = kron_power(v.col(c), s);
    out.push_back(std::move(k));
  }
  return out;
}

double objective(const CoupledData& data, const DecoupledModel& model) {
  const auto powers = kron_powers(model.V, data.d);
  double obj = 0.0;
  for (int s = 1; s <= data.d; ++s) {
    const Eigen::MatrixXd fitted =
        model.W * model.C.col(s - 1).asDiagonal() * powers[static_cast<std::size_t>(s - 1)].transpose();
    obj += (data.unfolded[static_cast<std::size_t>(s - 1)] - fitted).squaredNorm();
  }
  return obj;
}

void update_w(const CoupledData& data, DecoupledModel& model) {
  const auto powers = kron_powers(model.V, data.d);
  const Eigen::MatrixXd vtv = model.V.transpose() * model.V;
  const auto r = model.rank();
  Eigen::MatrixXd lhs = Eigen::MatrixXd::Zero(r, r);
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(data.n, r);
  Eigen::MatrixXd gram_power = Eigen::MatrixXd::Ones(r, r);
  for (int s = 1; s <= data.d; ++s) {
    gram_power.array() *= vtv.array();
    const auto cs = model.C.col(s - 1).asDiagonal();
    lhs += cs * gram_power * cs;
    rhs += data.unfolded[static_cast<std::size_t>(s - 1)] * powers[static_cast<std::size_t>(s - 1)] * cs;
  }
  model.W = solve_gram(lhs, rhs);
}

void update_c(const CoupledData& data, DecoupledModel& model) {
  const auto powers = kron_powers(model.V, data.d);
  const Eigen::MatrixXd vtv = model.V.transpose() * model.V;
  const Eigen::MatrixXd wtw = model.W.transpose() * model.W;
  const auto r = model.rank();
  Eigen::MatrixXd gram_power = Eigen::MatrixXd::Ones(r, r);
  for (int s = 1; s <= data.d; ++s) {
    gram_power.array() *= vtv.array();
    const Eigen::MatrixXd gram = wtw.cwiseProduct(gram_power);
    const Eigen::VectorXd rhs =
        (model.W.transpose() * data.unfolded[static_cast<std::size_t>(s - 1)] * powers[static_cast<std::size_t>(s - 1)])
            .diagonal();
    model.C.col(s - 1) = solve_gram(gram, rhs.transpose()).transpose();
  }
}

// One accepted Levenberg-damped Gauss-Newton step on all of (W, V, C), or no
// change if no damping level within the retry budget decreases the objective.
// Parameters are stacked as [vec W | vec V | vec C].
void joint_step(const CoupledData& data, DecoupledModel& model, double& lambda, double current) {
  const int m = data.m;
  const int n = data.n;
  const int r = model.rank();
  const Eigen::Index w_params = static_cast<Eigen::Index>(n) * r;
  const Eigen::Index v_params = static_cast<Eigen::Index>(m) * r;
  const Eigen::Index c_params = static_cast<Eigen::Index>(r) * data.d;
  Eigen::Index rows = 0;
  for (const auto& t : data.unfolded) rows += t.size();

  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(rows, w_params + v_params + c_params);
  Eigen::VectorXd residual(rows);
  const auto powers = kron_powers(model.V, data.d);
  {
    Eigen::Index row = 0;
    for (int s = 1; s <= data.d; ++s) {
      const Eigen::MatrixXd fitted =
          model.W * model.C.col(s - 1).asDiagonal() * powers[static_cast<std::size_t>(s - 1)].transpose();
      const Eigen::MatrixXd res = data.unfolded[static_cast<std::size_t>(s - 1)] - fitted;
      residual.segment(row, res.size()) = Eigen::Map<const Eigen::VectorXd>(res.data(), res.size());
      row += res.size();
    }
  }
  for (int k = 0; k < r; ++k) {
    const Eigen::VectorXd v = model.V.col(k);
    const Eigen::VectorXd w = model.W.col(k);
    // power = v^(x)s and deriv(:, a) = d power / d v_a, grown one factor at a time.
    Eigen::VectorXd power = Eigen::VectorXd::Ones(1);
    Eigen::MatrixXd deriv = Eigen::MatrixXd::Zero(1, m);
    Eigen::Index row = 0;
    for (int s = 1; s <= data.d; ++s) {
      Eigen::MatrixXd next(power.size() * m, m);
      for (int a = 0; a < m; ++a) {
        next.col(a) = kron(deriv.col(a), v) + kron(power, unit_vector(m, a));
      }
      deriv = std::move(next);
      power = kron(power, v);
      const double c = model.C(k, s - 1);
      const Eigen::Index block = static_cast<Eigen::Index>(n) * power.size();
      for (int i = 0; i < n; ++i) {
        jac.block(row, static_cast<Eigen::Index>(k) * n + i, block, 1) = c * kron(power, unit_vector(n, i));
      }
      for (int a = 0; a < m; ++a) {
        jac.block(row, w_params + static_cast<Eigen::Index>(k) * m + a, block, 1) = c * kron(deriv.col(a), w);
      }
      jac.block(row, w_params + v_params + static_cast<Eigen::Index>(s - 1) * r + k, block, 1) = kron(power, w);
      row += block;
    }
  }

  const Eigen::MatrixXd jtj = jac.transpose() * jac;
  const Eigen::VectorXd grad = jac.transpose() * residual;
  const double mu = std::max(jtj.diagonal().mean(), std::numeric_limits<double>::min());
  for (int attempt = 0; attempt < 12; ++attempt) {
    Eigen::MatrixXd damped = jtj;
    damped.diagonal().array() += lambda * mu;
    const Eigen::VectorXd step = damped.ldlt().solve(grad);
    DecoupledModel trial = model;
    trial.W += Eigen::Map<const Eigen::MatrixXd>(step.data(), n, r);
    trial.V += Eigen::Map<const Eigen::MatrixXd>(step.data() + w_params, m, r);
    trial.C += Eigen::Map<const Eigen::MatrixXd>(step.data() + w_params + v_params, r, data.d);
    const double value = objective(data, trial);
    if (std::isfinite(value) && value < current) {
      model = std::move(trial);
      lambda = std::max(lambda * 0.3, 1e-15);
      return;
    }
    lambda = std::min(lambda * 4.0, 1e12);
  }
}

// Unit v_k plus equal norms for w_k and c_k; the represented map is unchanged.
void rebalance(DecoupledModel& model) {
  model = normalize_gauge(std::move(model));
  for (int k = 0; k < model.rank(); ++k) {
    const double a = model.W.col(k).norm();
    const double b = model.C.row(k).norm();
    if (a == 0.0 || b == 0.0) continue;
    const double beta = std::sqrt(b / a);
    model.W.col(k) *= beta;
    model.C.row(k) /= beta;
  }
}

struct CoupledRun {
  DecoupledModel model;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> history;
};

CoupledRun run_coupled(const CoupledData& data, DecoupledModel start, const DecoupleOptions& options) {
  CoupledRun run;
  run.model = std::move(start);
  rebalance(run.model);
  double obj = objective(data, run.model);
  run.history.push_back(obj);
  double lambda = 1e-3;
  double prev_rho = std::sqrt(obj / data.norm_sq);
  for (int it = 1; it <= options.outer_max_iters; ++it) {
    update_w(data, run.model);
    update_c(data, run.model);
    obj = objective(data, run.model);
    joint_step(data, run.model, lambda, obj);
    rebalance(run.model);
    obj = objective(data, run.model);
    run.history.push_back(obj);
    run.iterations = it;
    const double rho = std::sqrt(obj / data.norm_sq);
    if (!std::isfinite(rho)) break;
    if (rho < 1e-14 || std::abs(prev_rho - rho) < options.outer_tol) {
      run.converged = true;
      break;
    }
    prev_rho = rho;
  }
  run.objective = obj;
  return run;
}

DecoupledModel random_start(const CoupledData& data, int r, std::mt19937_64& gen) {
  std::normal_distribution<double> normal(0.0, 1.0);
  DecoupledModel model{Eigen::MatrixXd(data.n, r), Eigen::MatrixXd(data.m, r), Eigen::MatrixXd::Zero(r, data.d)};
  for (Eigen::Index k = 0; k < r; ++k) {
    for (Eigen::Index i = 0; i < data.n; ++i) model.W(i, k) = normal(gen);
    for (Eigen::Index i = 0; i < data.m; ++i) model.V(i, k) = normal(gen);
  }
  update_c(data, model);
  return model;
}

SamplePlan resampled_plan(const SamplePlan& plan, std::uint64_t seed) {
  const Eigen::MatrixXd pts = default_points(plan.num_inputs(), plan.degree, plan.num_points(), seed);
  return build_sample_plan(pts, plan.num_inputs(), plan.degree);
}

DecoupleReport decouple_via_j_once(const PolyMap& f, const SamplePlan& plan, int r, const DecoupleOptions& options) {
  const int d = f.degree();
  const CpdFactors cpd = cp_als(build_j(f, plan), r, options.cpd);
  DecoupleReport report;
  report.method = DecoupleMethod::JacobianCpd;
  report.tensor_fit = cpd.fit;
  report.converged = cpd.converged;
  report.iterations = cpd.iterations;
  report.restarts = options.cpd.restarts;
  report.seed = options.cpd.seed;

  DecoupledModel model{cpd.factors[0], cpd.factors[1], Eigen::MatrixXd::Zero(r, d)};
  Eigen::MatrixXd h = cpd.factors[2];
  Eigen::MatrixXd h_fit = Eigen::MatrixXd::Zero(h.rows(), h.cols());
  for (int k = 0; k < r; ++k) {
    const double alpha = gauge_scale(model.V.col(k));
    if (alpha == 0.0) {
      model.V.col(k) = unit_vector(f.num_inputs(), 0);
      h.col(k).setZero();
      continue;
    }
    model.V.col(k) /= alpha;
    h.col(k) *= alpha;
    const Eigen::VectorXd c = fit_g_from_h(model.V.col(k), h.col(k), plan, d);
    model.C.row(k) = c.transpose();
    DecoupledModel branch{Eigen::MatrixXd::Ones(1, 1), model.V.col(k), c.transpose()};
    h_fit.col(k) = h_factors(branch, plan);
  }
  report.model = std::move(model);
  report.structure_residual = frobenius_relative(h_fit, h);
  report.map_residual = coefficient_residual(expand_decoupled(report.model), f);
  return report;
}

}  // namespace

std::string to_string(DecoupleMethod method) {
  switch (method) {
    case DecoupleMethod::JacobianCpd:
      return "jacobian-cpd";
    case DecoupleMethod::CoefficientCpd:
      return "coefficient-cpd";
    case DecoupleMethod::CoupledStructured:
      return "coupled-structured";
  }
  return "unknown";
}

DecoupledModel normalize_gauge(DecoupledModel model) {
  model.validate();
  constexpr double eps = std::numeric_limits<double>::epsilon();
  for (int k = 0; k < model.rank(); ++k) {
    const double alpha = gauge_scale(model.V.col(k));
    if (alpha == 0.0 || (alpha > 0.0 && std::abs(alpha - 1.0) <= 4.0 * eps)) continue;
    model.V.col(k) /= alpha;
    double power = 1.0;
    for (int s = 1; s <= model.degree(); ++s) {
      power *= alpha;
      model.C(k, s - 1) *= power;
    }
  }
  return model;
}

Eigen::VectorXd fit_g_from_h(const Eigen::VectorXd& v, const Eigen::VectorXd& h, const SamplePlan& plan, int d) {
  if (v.size() != plan.num_inputs()) throw DimensionError("fit_g_from_h: direction and plan dimensions differ");
  if (h.size() != plan.num_points()) throw DimensionError("fit_g_from_h: h length differs from point count");
  if (d < 1) throw DimensionError("fit_g_from_h: degree must be positive");
  if (plan.num_points() < d) {
    throw SamplingError("fit_g_from_h: " + std::to_string(plan.num_points()) + " points cannot determine degree " +
                        std::to_string(d));
  }
  const Eigen::VectorXd t = plan.points.transpose() * v;
  Eigen::MatrixXd basis(t.size(), d);
  for (Eigen::Index j = 0; j < t.size(); ++j) {
    double power = 1.0;
    for (int s = 1; s <= d; ++s) {
      basis(j, s - 1) = s * power;
      power *= t[j];
    }
  }
  if (numerical_rank(basis) < d) throw SamplingError("fit_g_from_h: degenerate sampling for branch");
  return basis.colPivHouseholderQr().solve(h);
}

DecoupleReport decouple_via_j(const PolyMap& f, const SamplePlan& plan, int r, const DecoupleOptions& options) {
  if (r < 1) throw std::invalid_argument("decouple_via_j: rank must be at least 1");
  if (plan.num_inputs() != f.num_inputs() || plan.degree != f.degree()) {
    throw DimensionError("decouple_via_j: plan does not match the map dimensions");
  }
  try {
    return decouple_via_j_once(f, plan, r, options);
  } catch (const SamplingError&) {
    // One retry on a fresh plan of the same size.
    return decouple_via_j_once(f, resampled_plan(plan, options.cpd.seed + 1), r, options);
  }
}

DecoupleReport decouple_via_q(const PolyMap& f, int r, const DecoupleOptions& options) {
  if (r < 1) throw std::invalid_argument("decouple_via_q: rank must be at least 1");
  const int d = f.degree();
  const CpdFactors cpd = cp_als(build_q(f), r, options.cpd);
  DecoupleReport report;
  report.method = DecoupleMethod::CoefficientCpd;
  report.tensor_fit = cpd.fit;
  report.converged = cpd.converged;
  report.iterations = cpd.iterations;
  report.restarts = options.cpd.restarts;
  report.seed = options.cpd.seed;

  DecoupledModel model{cpd.factors[0], cpd.factors[1], Eigen::MatrixXd::Zero(r, d)};
  Eigen::MatrixXd z = cpd.factors[2];
  Eigen::MatrixXd z_fit = Eigen::MatrixXd::Zero(z.rows(), z.cols());
  for (int k = 0; k < r; ++k) {
    const double alpha = gauge_scale(model.V.col(k));
    if (alpha == 0.0) {
      model.V.col(k) = unit_vector(f.num_inputs(), 0);
      z.col(k).setZero();
      continue;
    }
    model.V.col(k) /= alpha;
    z.col(k) *= alpha;
    model.C.row(k) = coefficients_from_tube(z.col(k), model.V.col(k), d).transpose();
  }
  z_fit = z_factors(model);
  report.model = std::move(model);
  report.structure_residual = frobenius_relative(z_fit, z);
  report.map_residual = coefficient_residual(expand_decoupled(report.model), f);
  return report;
}

double coupled_objective(const PolyMap& f, const DecoupledModel& model) {
  model.validate();
  return objective(make_coupled_data(f), model);
}

DecoupleReport coupled_psym_cpd(const PolyMap& f, int r, const DecoupleOptions& options) {
  if (r < 1) throw std::invalid_argument("coupled_psym_cpd: rank must be at least 1");
  const CoupledData data = make_coupled_data(f);
  DecoupleReport report;
  report.method = DecoupleMethod::CoupledStructured;
  report.seed = options.cpd.seed;
  if (data.norm_sq == 0.0) {
    report.model = zero_model(data.m, data.n, data.d, r);
    report.converged = true;
    return report;
  }

  std::vector<DecoupledModel> starts;
  {
    const int m = f.num_inputs();
    const int d = f.degree();
    const int n_points =
        options.seed_points > 0 ? options.seed_points : static_cast<int>(std::max<std::int64_t>(rank_bound(m, d), d));
    try {
      const SamplePlan plan = build_sample_plan(default_points(m, d, n_points, options.cpd.seed), m, d);
      starts.push_back(decouple_via_j(f, plan, r, options).model);
    } catch (const SamplingError&) {
      // The Jacobian seed is optional; random starts follow.
    }
  }

  std::optional<CoupledRun> best;
  double best_residual = std::numeric_limits<double>::infinity();
  int used = 0;
  const int total = static_cast<int>(starts.size()) + options.cpd.restarts;
  for (int i = 0; i < total; ++i) {
    DecoupledModel start;
    if (i < static_cast<int>(starts.size())) {
      start = starts[static_cast<std::size_t>(i)];
    } else {
      std::seed_seq seq{static_cast<std::uint32_t>(options.cpd.seed), static_cast<std::uint32_t>(options.cpd.seed >> 32),
                        static_cast<std::uint32_t>(i), 0x5eedu};
      std::mt19937_64 gen(seq);
      start = random_start(data, r, gen);
    }
    CoupledRun run = run_coupled(data, std::move(start), options);
    ++used;
    const double residual = coefficient_residual(expand_decoupled(run.model), f);
    if (std::isfinite(residual) && residual < best_residual) {
      best_residual = residual;
      best = std::move(run);
    }
    if (best_residual <= 1e-12) break;
  }
  if (!best) throw std::runtime_error("coupled_psym_cpd: every start produced non-finite values");

  report.model = normalize_gauge(best->model);
  report.tensor_fit = std::sqrt(best->objective / data.norm_sq);
  report.map_residual = coefficient_residual(expand_decoupled(report.model), f);
  report.structure_residual = 0.0;
  report.converged = best->converged;
  report.iterations = best->iterations;
  report.restarts = used;
  report.objective_history = std::move(best->history);
  return report;
}

RankOneResult rank_one_extract(const PolyMap& f) {
  const int m = f.num_inputs();
  const int n = f.num_outputs();
  const int d = f.degree();
  const DenseTensor q = build_q(f);
  RankOneResult result;
  if (q.norm() == 0.0) {
    result.rank_one = true;
    result.model = zero_model(m, n, d, 1);
    return result;
  }
  const RankOneApprox approx = best_rank_one(q);
  result.tensor_residual = approx.residual;
  if (approx.residual > kRankOneTolerance) return result;

  Eigen::VectorXd v = approx.vectors[1];
  Eigen::VectorXd z = approx.vectors[2];
  const double alpha = gauge_scale(v);
  v /= alpha;
  z *= alpha;
  DecoupledModel model{approx.scale * approx.vectors[0], v, coefficients_from_tube(z, v, d).transpose()};
  result.map_residual = coefficient_residual(expand_decoupled(model), f);
  result.model = std::move(model);
  result.rank_one = result.map_residual <= kRankOneTolerance;
  return result;
}

bool VerificationRecord::all_within(double tol) const {
  auto ok = [tol](const std::optional<double>& x) { return !x || *x <= tol; };
  return identity_residual <= tol && structure_violation <= tol && ok(h_residual) && ok(coefficient_cpd_residual) &&
         ok(jacobian_cpd_residual);
}

VerificationRecord verify_relations(const PolyMap& f, const SamplePlan& plan, const std::optional<DecoupledModel>& model) {
  if (plan.num_inputs() != f.num_inputs() || plan.degree != f.degree()) {
    throw DimensionError("verify_relations: plan does not match the map dimensions");
  }
  const DenseTensor q = build_q(f);
  const DenseTensor j = build_j(f, plan);
  VerificationRecord rec;
  rec.identity_residual = relative_error(mode_n_product(q, plan.A.transpose(), 2), j);
  rec.structure_violation = structure_violation(q, f.num_inputs(), f.degree());
  rec.rank_a = numerical_rank(plan.A);
  rec.rank_bound = rank_bound(f.num_inputs(), f.degree());
  if (model) {
    model->validate();
    if (model->num_inputs() != f.num_inputs() || model->num_outputs() != f.num_outputs() ||
        model->degree() != f.degree()) {
      throw DimensionError("verify_relations: model does not match the map dimensions");
    }
    const Eigen::MatrixXd z = z_factors(*model);
    const Eigen::MatrixXd h = h_factors(*model, plan);
    rec.h_residual = frobenius_relative(plan.A.transpose() * z, h);
    CpdFactors qc;
    qc.factors = {model->W, model->V, z};
    CpdFactors jc;
    jc.factors = {model->W, model->V, h};
    rec.coefficient_cpd_residual = relative_error(cpd_reconstruct(qc, q.dims()), q);
    rec.jacobian_cpd_residual = relative_error(cpd_reconstruct(jc, j.dims()), j);
  }
  return rec;
}

}  // namespace polydec

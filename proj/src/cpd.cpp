#include "polydec/cpd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "polydec/errors.hpp"

namespace polydec {

namespace {

void check_shapes(const std::vector<Eigen::MatrixXd>& factors, const std::vector<std::size_t>& dims) {
  if (factors.size() != dims.size()) {
    throw DimensionError("cpd: " + std::to_string(factors.size()) + " factors for a tensor of order " +
                         std::to_string(dims.size()));
  }
  for (std::size_t p = 0; p < dims.size(); ++p) {
    if (static_cast<std::size_t>(factors[p].rows()) != dims[p] || factors[p].cols() != factors[0].cols()) {
      throw DimensionError("cpd: factor " + std::to_string(p + 1) + " has shape " +
                           std::to_string(factors[p].rows()) + "x" + std::to_string(factors[p].cols()) +
                           ", expected " + std::to_string(dims[p]) + "x" + std::to_string(factors[0].cols()));
    }
  }
}

// Matricized tensor times Khatri-Rao product of every factor except `mode`.
Eigen::MatrixXd mttkrp(const DenseTensor& t, const std::vector<Eigen::MatrixXd>& factors, std::size_t mode) {
  const auto r = factors.front().cols();
  const auto& dims = t.dims();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dims[mode]), r);
  std::vector<std::size_t> idx(dims.size(), 0);
  const auto data = t.data();
  Eigen::RowVectorXd prod(r);
  std::size_t lin = 0;
  do {
    const double x = data[lin++];
    if (x == 0.0) continue;
    prod.setConstant(x);
    for (std::size_t q = 0; q < dims.size(); ++q) {
      if (q != mode) prod.array() *= factors[q].row(static_cast<Eigen::Index>(idx[q])).array();
    }
    out.row(static_cast<Eigen::Index>(idx[mode])) += prod;
  } while (next_index(idx, dims));
  return out;
}

Eigen::MatrixXd solve_gram(Eigen::MatrixXd gram, const Eigen::MatrixXd& rhs) {
  // rhs * gram^{-1}; gram is symmetric positive semidefinite.
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  if (ldlt.info() != Eigen::Success || ldlt.rcond() < 1e-12) {
    const double jitter = 1e-12 * std::max(gram.trace(), std::numeric_limits<double>::min());
    gram.diagonal().array() += jitter;
    ldlt.compute(gram);
  }
  return ldlt.solve(rhs.transpose()).transpose();
}

// Unit columns on all but the last factor, largest-magnitude entry positive;
// magnitudes and signs are pushed into the last factor.
void normalize_columns(std::vector<Eigen::MatrixXd>& factors) {
  auto& last = factors.back();
  for (std::size_t p = 0; p + 1 < factors.size(); ++p) {
    for (Eigen::Index k = 0; k < last.cols(); ++k) {
      auto col = factors[p].col(k);
      const double nrm = col.norm();
      if (nrm == 0.0) continue;
      Eigen::Index imax = 0;
      col.cwiseAbs().maxCoeff(&imax);
      const double scale = col[imax] < 0.0 ? -nrm : nrm;
      col /= scale;
      last.col(k) *= scale;
    }
  }
}

double fit_of(const DenseTensor& t, const CpdFactors& cpd, double t_norm) {
  const DenseTensor model = cpd_reconstruct(cpd, t.dims());
  double diff = 0.0;
  const auto a = t.data();
  const auto b = model.data();
  for (std::size_t i = 0; i < a.size(); ++i) diff += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(diff) / t_norm;
}

std::vector<Eigen::MatrixXd> random_factors(const std::vector<std::size_t>& dims, int r, std::mt19937_64& gen) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Eigen::MatrixXd> f;
  for (std::size_t dim : dims) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(dim), r);
    for (Eigen::Index k = 0; k < m.cols(); ++k) {
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, k) = normal(gen);
    }
    f.push_back(std::move(m));
  }
  return f;
}

CpdFactors als_run(const DenseTensor& t, std::vector<Eigen::MatrixXd> factors, const CpdOptions& opt,
                   double t_norm) {
  const std::size_t order = t.order();
  const auto r = factors.front().cols();
  CpdFactors cpd;
  cpd.factors = std::move(factors);
  double prev = std::numeric_limits<double>::infinity();
  double step = 1.5;
  for (int it = 1; it <= opt.max_iters; ++it) {
    const std::vector<Eigen::MatrixXd> before = cpd.factors;
    for (std::size_t p = 0; p < order; ++p) {
      Eigen::MatrixXd gram = Eigen::MatrixXd::Ones(r, r);
      for (std::size_t q = 0; q < order; ++q) {
        if (q != p) gram.array() *= (cpd.factors[q].transpose() * cpd.factors[q]).array();
      }
      cpd.factors[p] = solve_gram(gram, mttkrp(t, cpd.factors, p));
    }
    double fit = fit_of(t, cpd, t_norm);
    // Extrapolate along the sweep direction; kept only if it helps. The
    // factor grows while extrapolation keeps paying off.
    if (it > 2 && std::isfinite(fit)) {
      CpdFactors jump;
      for (std::size_t p = 0; p < order; ++p) {
        jump.factors.push_back(before[p] + step * (cpd.factors[p] - before[p]));
      }
      const double jump_fit = fit_of(t, jump, t_norm);
      if (std::isfinite(jump_fit) && jump_fit < fit) {
        cpd.factors = std::move(jump.factors);
        fit = jump_fit;
        step = std::min(step * 1.5, 64.0);
      } else {
        step = 1.5;
      }
    }
    normalize_columns(cpd.factors);
    fit = fit_of(t, cpd, t_norm);
    cpd.fit = fit;
    cpd.iterations = it;
    cpd.fit_history.push_back(fit);
    if (!std::isfinite(fit)) return cpd;
    if (std::abs(prev - fit) < opt.tol * prev || fit < opt.tol) {
      cpd.converged = true;
      break;
    }
    prev = fit;
  }
  return cpd;
}

// Pseudo-inverse with the same singular-value cutoff as numerical_rank.
Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& a) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double cutoff = (sv.size() ? sv[0] : 0.0) * static_cast<double>(std::max(a.rows(), a.cols())) *
                        std::numeric_limits<double>::epsilon() * 64.0;
  Eigen::VectorXd inv(sv.size());
  for (Eigen::Index i = 0; i < sv.size(); ++i) inv[i] = sv[i] > cutoff ? 1.0 / sv[i] : 0.0;
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

// Contraction of t with every vector except mode p.
Eigen::VectorXd contract_except(const DenseTensor& t, const std::vector<Eigen::VectorXd>& x, std::size_t p) {
  const auto& dims = t.dims();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dims[p]));
  std::vector<std::size_t> idx(dims.size(), 0);
  const auto data = t.data();
  std::size_t lin = 0;
  do {
    double v = data[lin++];
    for (std::size_t q = 0; q < dims.size() && v != 0.0; ++q) {
      if (q != p) v *= x[q][static_cast<Eigen::Index>(idx[q])];
    }
    out[static_cast<Eigen::Index>(idx[p])] += v;
  } while (next_index(idx, dims));
  return out;
}

// Leading singular pair of the first unfolding, recursing on the right
// singular vector reshaped over the remaining modes.
std::vector<Eigen::VectorXd> svd_seed(const DenseTensor& t) {
  if (t.order() == 1) {
    Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(t.data().data(), static_cast<Eigen::Index>(t.size()));
    return {v / v.norm()};
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(t.as_matrix(), Eigen::ComputeThinU | Eigen::ComputeThinV);
  std::vector<Eigen::VectorXd> out{svd.matrixU().col(0)};
  const Eigen::VectorXd right = svd.matrixV().col(0);
  std::vector<std::size_t> rest(t.dims().begin() + 1, t.dims().end());
  const DenseTensor sub(rest, std::vector<double>(right.data(), right.data() + right.size()));
  for (auto& v : svd_seed(sub)) out.push_back(std::move(v));
  return out;
}

void best_permutation_bruteforce(const Eigen::MatrixXd& score, std::vector<int>& best) {
  const auto r = static_cast<int>(score.rows());
  std::vector<int> perm(static_cast<std::size_t>(r));
  std::iota(perm.begin(), perm.end(), 0);
  double best_score = -std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (int k = 0; k < r; ++k) s += score(k, perm[static_cast<std::size_t>(k)]);
    if (s > best_score) {  // strict: keeps the lexicographically smallest maximizer
      best_score = s;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
}

// Hungarian algorithm (maximization) for larger ranks.
void best_permutation_hungarian(const Eigen::MatrixXd& score, std::vector<int>& best) {
  const int n = static_cast<int>(score.rows());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = -score(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  best.assign(static_cast<std::size_t>(n), 0);
  for (int j = 1; j <= n; ++j) best[static_cast<std::size_t>(p[j] - 1)] = j - 1;
}

double abs_cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::min(1.0, std::abs(a.dot(b)) / (na * nb));
}

}  // namespace

DenseTensor cpd_reconstruct(const CpdFactors& cpd, const std::vector<std::size_t>& dims) {
  DenseTensor out(dims);
  if (cpd.factors.empty() || cpd.rank() == 0) return out;
  check_shapes(cpd.factors, dims);
  const auto r = cpd.factors.front().cols();
  std::vector<std::size_t> idx(dims.size(), 0);
  auto data = out.data();
  std::size_t lin = 0;
  Eigen::RowVectorXd prod(r);
  do {
    if (cpd.weights.size() == r) {
      prod = cpd.weights.transpose();
    } else {
      prod.setOnes();
    }
    for (std::size_t q = 0; q < dims.size(); ++q) {
      prod.array() *= cpd.factors[q].row(static_cast<Eigen::Index>(idx[q])).array();
    }
    data[lin++] = prod.sum();
  } while (next_index(idx, dims));
  return out;
}

CpdFactors cp_als(const DenseTensor& t, int r, const CpdOptions& options) {
  if (t.order() < 3) {
    throw std::invalid_argument("cp_als: tensor of order " + std::to_string(t.order()) +
                                " given; use a matrix factorization (e.g. SVD) for order-2 data");
  }
  if (r < 1) throw std::invalid_argument("cp_als: rank must be at least 1");
  if (options.restarts < 1 || options.max_iters < 1) {
    throw std::invalid_argument("cp_als: restarts and max_iters must be positive");
  }
  const auto& dims = t.dims();
  const double t_norm = t.norm();

  if (t_norm == 0.0) {
    CpdFactors zero;
    for (std::size_t dim : dims) zero.factors.push_back(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim), r));
    zero.converged = true;
    return zero;
  }
  if (options.init) check_shapes(*options.init, dims);

  std::optional<CpdFactors> best;
  for (int restart = 0; restart < options.restarts; ++restart) {
    std::seed_seq seq{static_cast<std::uint32_t>(options.seed), static_cast<std::uint32_t>(options.seed >> 32),
                      static_cast<std::uint32_t>(restart)};
    std::mt19937_64 gen(seq);
    CpdFactors run;
    // A run that produces NaN is restarted from a fresh draw.
    for (int attempt = 0; attempt < 3; ++attempt) {
      auto init = (restart == 0 && attempt == 0 && options.init) ? *options.init : random_factors(dims, r, gen);
      run = als_run(t, std::move(init), options, t_norm);
      if (std::isfinite(run.fit)) break;
    }
    if (!std::isfinite(run.fit)) continue;
    run.restart = restart;
    if (!best || run.fit < best->fit) best = std::move(run);
  }
  if (!best) throw std::runtime_error("cp_als: every restart produced non-finite values");
  std::vector<std::size_t> sorted = dims;
  std::sort(sorted.rbegin(), sorted.rend());
  if (static_cast<std::size_t>(r) > sorted[0] * sorted[1]) {
    best->warnings.push_back("rank " + std::to_string(r) + " exceeds the product of the two largest dimensions (" +
                             std::to_string(sorted[0] * sorted[1]) + ")");
  }
  // Recompute from the final factors so the reported fit is exactly reproducible.
  best->fit = relative_error(cpd_reconstruct(*best, dims), t);
  return *best;
}

RankOneApprox best_rank_one(const DenseTensor& t) {
  if (t.order() < 2) throw DimensionError("best_rank_one: tensor must have order at least 2");
  RankOneApprox out;
  const double t_norm = t.norm();
  if (t_norm == 0.0) {
    for (std::size_t dim : t.dims()) out.vectors.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim)));
    return out;
  }
  std::vector<Eigen::VectorXd> x = svd_seed(t);
  const std::size_t order = t.order();
  double scale = contract_except(t, x, 0).dot(x[0]);
  for (int it = 0; it < 1000; ++it) {
    for (std::size_t p = 0; p < order; ++p) {
      Eigen::VectorXd y = contract_except(t, x, p);
      const double nrm = y.norm();
      if (nrm == 0.0) break;
      x[p] = y / nrm;
    }
    const double next = contract_except(t, x, 0).dot(x[0]);
    const bool done = std::abs(next - scale) <= 1e-15 * std::abs(next);
    scale = next;
    if (done) break;
  }
  if (scale < 0.0) {
    x[0] = -x[0];
    scale = -scale;
  }
  out.vectors = std::move(x);
  out.scale = scale;

  CpdFactors one;
  for (const auto& v : out.vectors) one.factors.emplace_back(v);
  one.weights = Eigen::VectorXd::Constant(1, scale);
  out.residual = relative_error(cpd_reconstruct(one, t.dims()), t);
  return out;
}

FactorMatch match_factors(const std::vector<Eigen::MatrixXd>& f1, const std::vector<Eigen::MatrixXd>& f2) {
  if (f1.empty() || f1.size() != f2.size()) throw DimensionError("match_factors: factor lists differ in length");
  const auto r = f1.front().cols();
  for (std::size_t p = 0; p < f1.size(); ++p) {
    if (f1[p].rows() != f2[p].rows() || f1[p].cols() != r || f2[p].cols() != r) {
      throw DimensionError("match_factors: factor " + std::to_string(p + 1) + " shapes differ");
    }
  }
  const std::size_t modes = f1.size();
  std::vector<Eigen::MatrixXd> cosines(modes, Eigen::MatrixXd(r, r));
  Eigen::MatrixXd score = Eigen::MatrixXd::Zero(r, r);
  for (std::size_t p = 0; p < modes; ++p) {
    for (Eigen::Index a = 0; a < r; ++a) {
      for (Eigen::Index b = 0; b < r; ++b) {
        cosines[p](a, b) = abs_cosine(f1[p].col(a), f2[p].col(b));
        score(a, b) += cosines[p](a, b);
      }
    }
  }

  FactorMatch match;
  if (r <= 8) {
    best_permutation_bruteforce(score, match.permutation);
  } else {
    best_permutation_hungarian(score, match.permutation);
  }

  match.congruence = r > 0 ? 1.0 : 0.0;
  for (Eigen::Index a = 0; a < r; ++a) {
    const int b = match.permutation[static_cast<std::size_t>(a)];
    double cong = 1.0;
    std::vector<double> scales(modes, 0.0);
    double scale_product = 1.0;
    for (std::size_t p = 0; p < modes; ++p) {
      cong *= cosines[p](a, b);
      if (p + 1 < modes) {
        const double den = f2[p].col(b).squaredNorm();
        scales[p] = den > 0.0 ? f1[p].col(a).dot(f2[p].col(b)) / den : 0.0;
        scale_product *= scales[p];
      }
    }
    scales[modes - 1] = scale_product != 0.0 ? 1.0 / scale_product : 0.0;
    for (std::size_t p = 0; p < modes; ++p) {
      const Eigen::VectorXd diff = f1[p].col(a) - scales[p] * f2[p].col(b);
      const double ref = f1[p].col(a).norm();
      const double res = ref > 0.0 ? diff.norm() / ref : diff.norm();
      match.max_residual = std::max(match.max_residual, res);
    }
    match.congruence = std::min(match.congruence, cong);
    match.scales.push_back(std::move(scales));
  }
  return match;
}

CpdFactors transfer_third_factor(const CpdFactors& q_cpd, const SamplePlan& plan) {
  if (q_cpd.factors.size() != 3) throw DimensionError("transfer_third_factor: expected a third-order CPD");
  if (q_cpd.factors[2].rows() != plan.A.rows()) {
    throw DimensionError("transfer_third_factor: third factor has " + std::to_string(q_cpd.factors[2].rows()) +
                         " rows, A has " + std::to_string(plan.A.rows()));
  }
  CpdFactors out = q_cpd;
  out.factors[2] = plan.A.transpose() * q_cpd.factors[2];
  return out;
}

CpdFactors inverse_transfer(const CpdFactors& j_cpd, const SamplePlan& plan) {
  if (j_cpd.factors.size() != 3) throw DimensionError("inverse_transfer: expected a third-order CPD");
  if (j_cpd.factors[2].rows() != plan.A.cols()) {
    throw DimensionError("inverse_transfer: third factor has " + std::to_string(j_cpd.factors[2].rows()) +
                         " rows, plan has " + std::to_string(plan.A.cols()) + " points");
  }
  const auto bound = rank_bound(plan.num_inputs(), plan.degree);
  const int rank = numerical_rank(plan.A);
  if (rank != bound) {
    throw SamplingError("inverse_transfer: under-sampled plan, rank(A) = " + std::to_string(rank) +
                        " < M = " + std::to_string(bound));
  }
  CpdFactors out = j_cpd;
  out.factors[2] = pseudo_inverse(plan.A).transpose() * j_cpd.factors[2];
  return out;
}

}  // namespace polydec

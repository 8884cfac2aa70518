#include "polydec/tensorize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "polydec/errors.hpp"

namespace polydec {

namespace {

std::size_t pow_size(std::size_t base, int e) {
  std::size_t r = 1;
  for (int i = 0; i < e; ++i) r *= base;
  return r;
}

// Column-major multi-index of length `order` over extent m for linear q.
std::vector<std::size_t> unravel(std::size_t q, std::size_t m, int order) {
  std::vector<std::size_t> idx(static_cast<std::size_t>(order));
  for (auto& x : idx) {
    x = q % m;
    q /= m;
  }
  return idx;
}

}  // namespace

DenseTensor mode_n_product(const DenseTensor& t, const Eigen::MatrixXd& m, std::size_t mode) {
  if (mode >= t.order()) {
    throw DimensionError("mode_n_product: mode " + std::to_string(mode + 1) + " out of range for order " +
                         std::to_string(t.order()));
  }
  const auto& dims = t.dims();
  if (static_cast<std::size_t>(m.cols()) != dims[mode]) {
    throw DimensionError("mode_n_product: matrix has " + std::to_string(m.cols()) + " columns, mode " +
                         std::to_string(mode + 1) + " has extent " + std::to_string(dims[mode]));
  }
  const std::size_t left = product(std::span(dims).first(mode));
  const std::size_t right = product(std::span(dims).subspan(mode + 1));
  const std::size_t in_extent = dims[mode];
  const auto out_extent = static_cast<std::size_t>(m.rows());

  std::vector<std::size_t> out_dims = dims;
  out_dims[mode] = out_extent;
  DenseTensor out(out_dims);
  const auto in = t.data();
  auto dst = out.data();
  const auto L = static_cast<Eigen::Index>(left);
  for (std::size_t r = 0; r < right; ++r) {
    Eigen::Map<const Eigen::MatrixXd> src(in.data() + r * left * in_extent, L,
                                          static_cast<Eigen::Index>(in_extent));
    Eigen::Map<Eigen::MatrixXd> res(dst.data() + r * left * out_extent, L,
                                    static_cast<Eigen::Index>(out_extent));
    res.noalias() = src * m.transpose();
  }
  return out;
}

Eigen::MatrixXd unfold_mode1(const DenseTensor& t) {
  if (t.order() < 2) throw DimensionError("unfold_mode1: tensor must have order at least 2");
  return t.as_matrix();
}

Eigen::VectorXd kron(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  Eigen::VectorXd out(a.size() * b.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) out.segment(i * b.size(), b.size()) = a[i] * b;
  return out;
}

Eigen::VectorXd kron_power(const Eigen::VectorXd& v, int power) {
  Eigen::VectorXd out = Eigen::VectorXd::Ones(1);
  for (int p = 0; p < power; ++p) out = kron(out, v);
  return out;
}

std::int64_t tube_length(int m, int d) {
  std::int64_t delta = 0;
  std::int64_t block = 1;
  for (int k = 1; k <= d; ++k) {
    delta += block;
    block *= m;
  }
  return delta;
}

std::int64_t rank_bound(int m, int d) { return binomial(m + d - 1, d - 1); }

std::int64_t rank_bound_by_blocks(int m, int d) {
  // Dimension of symmetric order-s tensors over R^m is binom(m+s-1, s).
  std::int64_t total = 0;
  for (int s = 0; s <= d - 1; ++s) total += binomial(m + s - 1, s);
  return total;
}

Eigen::MatrixXd psi_matrix(const PolyMap& f, int output) {
  if (output < 0 || output >= f.num_outputs()) throw DimensionError("psi_matrix: output index out of range");
  const int m = f.num_inputs();
  const int d = f.degree();
  const auto mm = static_cast<std::size_t>(m);
  Eigen::MatrixXd psi = Eigen::MatrixXd::Zero(m, tube_length(m, d));
  Eigen::Index offset = 0;
  for (int s = 1; s <= d; ++s) {
    const std::size_t width = pow_size(mm, s - 1);
    for (std::size_t q = 0; q < width; ++q) {
      std::vector<std::size_t> idx = unravel(q, mm, s - 1);
      idx.insert(idx.begin(), 0);
      for (std::size_t j = 0; j < mm; ++j) {
        idx[0] = j;
        const Exponent alpha = exponent_of_index(idx, m);
        psi(static_cast<Eigen::Index>(j), offset + static_cast<Eigen::Index>(q)) =
            f.coeff(output, alpha) / multinomial(alpha);
      }
    }
    offset += static_cast<Eigen::Index>(width);
  }
  return psi;
}

DenseTensor build_q(const PolyMap& f) {
  const auto n = static_cast<std::size_t>(f.num_outputs());
  const auto m = static_cast<std::size_t>(f.num_inputs());
  const auto delta = static_cast<std::size_t>(tube_length(f.num_inputs(), f.degree()));
  DenseTensor q({n, m, delta});
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::MatrixXd psi = psi_matrix(f, static_cast<int>(i));
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t p = 0; p < delta; ++p) {
        q(i, j, p) = psi(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(p));
      }
    }
  }
  return q;
}

SamplePlan build_sample_plan(const Eigen::MatrixXd& points, int m, int d) {
  if (points.rows() != m) {
    throw DimensionError("build_sample_plan: points have dimension " + std::to_string(points.rows()) +
                         ", expected " + std::to_string(m));
  }
  if (points.cols() < 1) throw DimensionError("build_sample_plan: at least one point is required");
  if (d < 1) throw DimensionError("build_sample_plan: degree must be positive");
  SamplePlan plan{points, d, Eigen::MatrixXd(tube_length(m, d), points.cols())};
  for (Eigen::Index j = 0; j < points.cols(); ++j) {
    const Eigen::VectorXd u = points.col(j);
    Eigen::VectorXd power = Eigen::VectorXd::Ones(1);
    Eigen::Index offset = 0;
    for (int s = 1; s <= d; ++s) {
      plan.A.col(j).segment(offset, power.size()) = s * power;
      offset += power.size();
      power = kron(power, u);
    }
  }
  return plan;
}

Eigen::MatrixXd default_points(int m, [[maybe_unused]] int d, int n_points, std::uint64_t seed) {
  if (m < 1 || n_points < 1) throw DimensionError("default_points: m and N must be positive");
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd pts(m, n_points);
  for (Eigen::Index j = 0; j < pts.cols(); ++j) {
    for (Eigen::Index i = 0; i < pts.rows(); ++i) pts(i, j) = normal(gen);
  }
  return pts;
}

DenseTensor build_j(const PolyMap& f, const SamplePlan& plan) {
  if (plan.num_inputs() != f.num_inputs()) {
    throw DimensionError("build_j: plan has dimension " + std::to_string(plan.num_inputs()) +
                         ", map has " + std::to_string(f.num_inputs()));
  }
  const auto n = static_cast<std::size_t>(f.num_outputs());
  const auto m = static_cast<std::size_t>(f.num_inputs());
  const auto N = static_cast<std::size_t>(plan.num_points());
  DenseTensor j_tensor({n, m, N});
  for (std::size_t k = 0; k < N; ++k) {
    const Eigen::MatrixXd jac = jacobian(f, plan.points.col(static_cast<Eigen::Index>(k)));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < m; ++c) {
        j_tensor(i, c, k) = jac(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
      }
    }
  }
  return j_tensor;
}

Eigen::MatrixXd z_factors(const DecoupledModel& model) {
  model.validate();
  const int m = model.num_inputs();
  Eigen::MatrixXd z(tube_length(m, model.degree()), model.rank());
  for (int k = 0; k < model.rank(); ++k) {
    Eigen::Index offset = 0;
    Eigen::VectorXd power = Eigen::VectorXd::Ones(1);
    for (int s = 1; s <= model.degree(); ++s) {
      z.col(k).segment(offset, power.size()) = model.C(k, s - 1) * power;
      offset += power.size();
      power = kron(power, model.V.col(k));
    }
  }
  return z;
}

Eigen::MatrixXd h_factors(const DecoupledModel& model, const SamplePlan& plan) {
  model.validate();
  if (plan.num_inputs() != model.num_inputs()) throw DimensionError("h_factors: plan and model dimensions differ");
  const Eigen::MatrixXd t = plan.points.transpose() * model.V;  // N x r projections
  Eigen::MatrixXd h(t.rows(), t.cols());
  for (Eigen::Index j = 0; j < t.rows(); ++j) {
    for (int k = 0; k < model.rank(); ++k) h(j, k) = branch_derivative(model, k, t(j, k));
  }
  return h;
}

DenseTensor build_ts(const PolyMap& f, int s) {
  if (s < 1 || s > f.degree()) {
    throw DimensionError("build_ts: degree " + std::to_string(s) + " outside [1, " + std::to_string(f.degree()) +
                         "]");
  }
  const int m = f.num_inputs();
  std::vector<std::size_t> dims(static_cast<std::size_t>(s) + 1, static_cast<std::size_t>(m));
  dims[0] = static_cast<std::size_t>(f.num_outputs());
  DenseTensor ts(dims);
  std::vector<std::size_t> idx(dims.size(), 0);
  do {
    const Exponent alpha = exponent_of_index(std::span(idx).subspan(1), m);
    ts.at(idx) = f.coeff(static_cast<int>(idx[0]), alpha) / multinomial(alpha);
  } while (next_index(idx, dims));
  return ts;
}

DenseTensor reshape_ts_12(const DenseTensor& ts) {
  if (ts.order() < 2) throw DimensionError("reshape_ts_12: tensor must have order at least 2");
  const auto& dims = ts.dims();
  return ts.reshaped({dims[0], dims[1], product(std::span(dims).subspan(2))});
}

DenseTensor stack_q_from_ts(const std::vector<DenseTensor>& reshaped) {
  if (reshaped.empty()) throw DimensionError("stack_q_from_ts: no degree blocks given");
  const std::size_t n = reshaped.front().dim(0);
  const std::size_t m = reshaped.front().dim(1);
  std::vector<double> data;
  std::size_t depth = 0;
  for (std::size_t s = 1; s <= reshaped.size(); ++s) {
    const DenseTensor& t = reshaped[s - 1];
    if (t.order() != 3 || t.dim(0) != n || t.dim(1) != m) {
      throw DimensionError("stack_q_from_ts: block " + std::to_string(s) + " has inconsistent dims");
    }
    if (t.dim(2) != pow_size(m, static_cast<int>(s) - 1)) {
      throw DimensionError("stack_q_from_ts: block " + std::to_string(s) + " does not have degree " +
                           std::to_string(s) + " (missing or misordered degree)");
    }
    data.insert(data.end(), t.data().begin(), t.data().end());
    depth += t.dim(2);
  }
  return DenseTensor({n, m, depth}, std::move(data));
}

double structure_violation(const Eigen::VectorXd& tube, int m, int d) {
  if (tube.size() != tube_length(m, d)) throw DimensionError("structure_violation: tube has wrong length");
  const auto mm = static_cast<std::size_t>(m);
  double worst = 0.0;
  Eigen::Index offset = 0;
  for (int s = 1; s <= d; ++s) {
    const std::size_t width = pow_size(mm, s - 1);
    for (std::size_t q = 0; q < width; ++q) {
      std::vector<std::size_t> idx = unravel(q, mm, s - 1);
      std::sort(idx.begin(), idx.end());
      std::size_t rep = 0;
      for (auto it = idx.rbegin(); it != idx.rend(); ++it) rep = rep * mm + *it;
      worst = std::max(worst, std::abs(tube[offset + static_cast<Eigen::Index>(q)] -
                                       tube[offset + static_cast<Eigen::Index>(rep)]));
    }
    offset += static_cast<Eigen::Index>(width);
  }
  return worst;
}

double structure_violation(const DenseTensor& q, int m, int d) {
  if (q.order() != 3 || q.dim(1) != static_cast<std::size_t>(m)) {
    throw DimensionError("structure_violation: expected an n x m x delta tensor");
  }
  double worst = 0.0;
  Eigen::VectorXd tube(static_cast<Eigen::Index>(q.dim(2)));
  for (std::size_t i = 0; i < q.dim(0); ++i) {
    for (std::size_t j = 0; j < q.dim(1); ++j) {
      for (std::size_t p = 0; p < q.dim(2); ++p) tube[static_cast<Eigen::Index>(p)] = q(i, j, p);
      worst = std::max(worst, structure_violation(tube, m, d));
    }
  }
  return worst;
}

int numerical_rank(const Eigen::MatrixXd& a) {
  if (a.size() == 0) return 0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv[0] == 0.0) return 0;
  const double cutoff = sv[0] * static_cast<double>(std::max(a.rows(), a.cols())) *
                        std::numeric_limits<double>::epsilon() * 64.0;
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) rank += sv[i] > cutoff ? 1 : 0;
  return rank;
}

}  // namespace polydec

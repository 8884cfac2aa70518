#include "polydec/polymap.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "polydec/errors.hpp"

namespace polydec {

namespace {

double monomial_value(const Exponent& alpha, const Eigen::VectorXd& u) {
  double v = 1.0;
  for (std::size_t j = 0; j < alpha.size(); ++j) {
    for (int e = 0; e < alpha[j]; ++e) v *= u[static_cast<Eigen::Index>(j)];
  }
  return v;
}

void check_point(const Eigen::VectorXd& u, int m, const char* who) {
  if (u.size() != m) {
    throw DimensionError(std::string(who) + ": point has length " + std::to_string(u.size()) +
                         ", expected " + std::to_string(m));
  }
}

}  // namespace

int total_degree(const Exponent& alpha) { return std::accumulate(alpha.begin(), alpha.end(), 0); }

double multinomial(const Exponent& alpha) {
  // Built incrementally as a product of binomials, exact for desk-scale degrees.
  double result = 1.0;
  int running = 0;
  for (int a : alpha) {
    running += a;
    result *= static_cast<double>(binomial(running, a));
  }
  return result;
}

std::int64_t binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  std::int64_t r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

std::vector<Exponent> exponents_of_degree(int m, int s) {
  std::vector<Exponent> out;
  Exponent cur(static_cast<std::size_t>(m), 0);
  // Recursive fill from the first variable; largest power first gives
  // lexicographically descending order, reversed at the end.
  auto fill = [&](auto&& self, int var, int remaining) -> void {
    if (var == m - 1) {
      cur[static_cast<std::size_t>(var)] = remaining;
      out.push_back(cur);
      return;
    }
    for (int e = remaining; e >= 0; --e) {
      cur[static_cast<std::size_t>(var)] = e;
      self(self, var + 1, remaining - e);
    }
  };
  if (m > 0) fill(fill, 0, s);
  std::reverse(out.begin(), out.end());
  return out;
}

Exponent exponent_of_index(std::span<const std::size_t> index, int m) {
  Exponent alpha(static_cast<std::size_t>(m), 0);
  for (std::size_t j : index) ++alpha.at(j);
  return alpha;
}

PolyMap::PolyMap(int m, int n, int d) : m_(m), n_(n), d_(d), terms_(static_cast<std::size_t>(std::max(n, 0))) {
  if (m < 1 || n < 1 || d < 1) {
    throw DimensionError("PolyMap: m, n, d must be positive (got " + std::to_string(m) + ", " +
                         std::to_string(n) + ", " + std::to_string(d) + ")");
  }
}

PolyMap PolyMap::from_terms(int m, int n, int d, std::span<const Term> terms) {
  PolyMap f(m, n, d);
  for (const Term& t : terms) {
    if (t.output < 0 || t.output >= n) {
      throw DimensionError("PolyMap: output index " + std::to_string(t.output + 1) + " outside [1, " +
                           std::to_string(n) + "]");
    }
    if (static_cast<int>(t.alpha.size()) != m) {
      throw DimensionError("PolyMap: exponent of length " + std::to_string(t.alpha.size()) +
                           ", expected " + std::to_string(m));
    }
    if (std::any_of(t.alpha.begin(), t.alpha.end(), [](int a) { return a < 0; })) {
      throw std::invalid_argument("PolyMap: negative exponent");
    }
    const int deg = total_degree(t.alpha);
    if (deg == 0) {
      throw std::invalid_argument("PolyMap: constant term in output " + std::to_string(t.output + 1) +
                                  " (constant terms are not part of the model)");
    }
    if (deg > d) {
      throw DimensionError("PolyMap: term of degree " + std::to_string(deg) + " exceeds d = " +
                           std::to_string(d));
    }
    if (!std::isfinite(t.coeff)) throw std::invalid_argument("PolyMap: nonfinite coefficient");
    f.add(t.output, t.alpha, t.coeff);
  }
  return f;
}

double PolyMap::coeff(int output, const Exponent& alpha) const {
  const auto& m = terms_.at(static_cast<std::size_t>(output));
  auto it = m.find(alpha);
  return it == m.end() ? 0.0 : it->second;
}

std::size_t PolyMap::term_count() const {
  std::size_t c = 0;
  for (const auto& m : terms_) c += m.size();
  return c;
}

void PolyMap::add(int output, const Exponent& alpha, double c) {
  auto& m = terms_.at(static_cast<std::size_t>(output));
  const double v = (m.count(alpha) ? m[alpha] : 0.0) + c;
  if (v == 0.0) {
    m.erase(alpha);
  } else {
    m[alpha] = v;
  }
}

void DecoupledModel::validate() const {
  if (W.cols() < 1) throw DimensionError("DecoupledModel: rank must be at least 1");
  if (V.cols() != W.cols() || C.rows() != W.cols()) {
    throw DimensionError("DecoupledModel: W, V columns and C rows must agree (got " +
                         std::to_string(W.cols()) + ", " + std::to_string(V.cols()) + ", " +
                         std::to_string(C.rows()) + ")");
  }
  if (W.rows() < 1 || V.rows() < 1 || C.cols() < 1) throw DimensionError("DecoupledModel: empty factor");
}

double branch_value(const DecoupledModel& model, int k, double t) {
  double acc = 0.0;
  for (int s = model.degree(); s >= 1; --s) acc = (acc + model.C(k, s - 1)) * t;
  return acc;
}

double branch_derivative(const DecoupledModel& model, int k, double t) {
  double acc = 0.0;
  for (int s = model.degree(); s >= 1; --s) acc = acc * t + s * model.C(k, s - 1);
  return acc;
}

GradedSymmetric to_graded(const PolyMap& f) {
  const int m = f.num_inputs();
  GradedSymmetric g{m, f.num_outputs(), f.degree(), {}};
  g.blocks.resize(static_cast<std::size_t>(g.n));
  for (int i = 0; i < g.n; ++i) {
    for (int s = 1; s <= g.d; ++s) {
      DenseTensor block(std::vector<std::size_t>(static_cast<std::size_t>(s), static_cast<std::size_t>(m)));
      std::vector<std::size_t> idx(static_cast<std::size_t>(s), 0);
      const auto dims = block.dims();
      do {
        const Exponent alpha = exponent_of_index(idx, m);
        block.at(idx) = f.coeff(i, alpha) / multinomial(alpha);
      } while (next_index(idx, dims));
      g.blocks[static_cast<std::size_t>(i)].push_back(std::move(block));
    }
  }
  return g;
}

PolyMap from_graded(const GradedSymmetric& g) {
  PolyMap f(g.m, g.n, g.d);
  if (static_cast<int>(g.blocks.size()) != g.n) throw DimensionError("from_graded: wrong output count");
  for (int i = 0; i < g.n; ++i) {
    if (static_cast<int>(g.blocks[static_cast<std::size_t>(i)].size()) != g.d) {
      throw DimensionError("from_graded: wrong number of degree blocks");
    }
    for (int s = 1; s <= g.d; ++s) {
      const DenseTensor& block = g.block(i, s);
      if (block.dims() != std::vector<std::size_t>(static_cast<std::size_t>(s), static_cast<std::size_t>(g.m))) {
        throw DimensionError("from_graded: block of degree " + std::to_string(s) + " has wrong shape");
      }
      std::vector<std::size_t> idx(static_cast<std::size_t>(s), 0);
      const auto dims = block.dims();
      do {
        std::vector<std::size_t> sorted = idx;
        std::sort(sorted.begin(), sorted.end());
        if (block.at(idx) != block.at(sorted)) {
          throw std::invalid_argument("from_graded: block of degree " + std::to_string(s) + " for output " +
                                      std::to_string(i + 1) + " is not symmetric");
        }
        if (idx == sorted && block.at(idx) != 0.0) {
          const Exponent alpha = exponent_of_index(idx, g.m);
          f.add(i, alpha, block.at(idx) * multinomial(alpha));
        }
      } while (next_index(idx, dims));
    }
  }
  return f;
}

Eigen::VectorXd eval_polymap(const PolyMap& f, const Eigen::VectorXd& u) {
  check_point(u, f.num_inputs(), "eval_polymap");
  Eigen::VectorXd y = Eigen::VectorXd::Zero(f.num_outputs());
  for (int i = 0; i < f.num_outputs(); ++i) {
    for (const auto& [alpha, c] : f.terms(i)) y[i] += c * monomial_value(alpha, u);
  }
  return y;
}

Eigen::VectorXd eval_decoupled(const DecoupledModel& model, const Eigen::VectorXd& u) {
  model.validate();
  check_point(u, model.num_inputs(), "eval_decoupled");
  const Eigen::VectorXd x = model.V.transpose() * u;
  Eigen::VectorXd g(model.rank());
  for (int k = 0; k < model.rank(); ++k) g[k] = branch_value(model, k, x[k]);
  return model.W * g;
}

PolyMap expand_decoupled(const DecoupledModel& model) {
  model.validate();
  const int m = model.num_inputs();
  PolyMap f(m, model.num_outputs(), model.degree());
  for (int s = 1; s <= model.degree(); ++s) {
    for (const Exponent& alpha : exponents_of_degree(m, s)) {
      const double mult = multinomial(alpha);
      for (int i = 0; i < model.num_outputs(); ++i) {
        double c = 0.0;
        for (int k = 0; k < model.rank(); ++k) {
          c += model.W(i, k) * model.C(k, s - 1) * mult * monomial_value(alpha, model.V.col(k));
        }
        if (c != 0.0) f.add(i, alpha, c);
      }
    }
  }
  return f;
}

Eigen::MatrixXd jacobian(const PolyMap& f, const Eigen::VectorXd& u) {
  check_point(u, f.num_inputs(), "jacobian");
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(f.num_outputs(), f.num_inputs());
  for (int i = 0; i < f.num_outputs(); ++i) {
    for (const auto& [alpha, c] : f.terms(i)) {
      for (int j = 0; j < f.num_inputs(); ++j) {
        const int a = alpha[static_cast<std::size_t>(j)];
        if (a == 0) continue;
        Exponent lowered = alpha;
        --lowered[static_cast<std::size_t>(j)];
        jac(i, j) += c * a * monomial_value(lowered, u);
      }
    }
  }
  return jac;
}

Eigen::MatrixXd jacobian_decoupled(const DecoupledModel& model, const Eigen::VectorXd& u) {
  model.validate();
  check_point(u, model.num_inputs(), "jacobian_decoupled");
  const Eigen::VectorXd x = model.V.transpose() * u;
  Eigen::VectorXd dg(model.rank());
  for (int k = 0; k < model.rank(); ++k) dg[k] = branch_derivative(model, k, x[k]);
  return model.W * dg.asDiagonal() * model.V.transpose();
}

ParameterCounts report_compression(int m, int n, int d, int r) {
  if (m < 1 || n < 1 || d < 1 || r < 1) throw DimensionError("report_compression: arguments must be positive");
  return {n * (binomial(m + d, d) - 1), static_cast<std::int64_t>(r) * (m + n + d)};
}

double coefficient_residual(const PolyMap& a, const PolyMap& b) {
  if (a.num_inputs() != b.num_inputs() || a.num_outputs() != b.num_outputs()) {
    throw DimensionError("coefficient_residual: maps have different shapes");
  }
  double diff = 0.0;
  double ref = 0.0;
  for (int i = 0; i < a.num_outputs(); ++i) {
    for (const auto& [alpha, c] : b.terms(i)) {
      const double e = a.coeff(i, alpha) - c;
      diff += e * e;
      ref += c * c;
    }
    for (const auto& [alpha, c] : a.terms(i)) {
      if (!b.terms(i).count(alpha)) diff += c * c;
    }
  }
  return ref > 0.0 ? std::sqrt(diff / ref) : std::sqrt(diff);
}

}  // namespace polydec

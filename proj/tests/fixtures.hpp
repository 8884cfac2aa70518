#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "polydec/dense_tensor.hpp"
#include "polydec/polymap.hpp"
#include "polydec/tensorize.hpp"

namespace fixtures {

using polydec::DecoupledModel;
using polydec::PolyMap;
using polydec::Term;

// Two-output cubic in two variables with a known three-branch decoupling.
inline PolyMap example_map() {
  const std::vector<Term> terms = {
      {0, {3, 0}, -3},  {0, {2, 1}, -9},  {0, {1, 2}, -27}, {0, {0, 3}, -15}, {0, {2, 0}, -8},
      {0, {1, 1}, -8},  {0, {0, 2}, -20}, {0, {1, 0}, 3},   {0, {0, 1}, 9},   {1, {3, 0}, -7},
      {1, {2, 1}, -6},  {1, {1, 2}, 6},   {1, {0, 3}, 7},   {1, {2, 0}, 10},  {1, {1, 1}, 16},
      {1, {0, 2}, 10},  {1, {0, 1}, -3},
  };
  return PolyMap::from_terms(2, 2, 3, terms);
}

inline DecoupledModel example_model() {
  DecoupledModel model{Eigen::MatrixXd(2, 3), Eigen::MatrixXd(2, 3), Eigen::MatrixXd(3, 3)};
  model.W << 0, 1, -2, -1, 0, 1;
  model.V << 2, -1, 1, 1, 1, 2;
  // g1 = t^3 - 2t^2 - t, g2 = t^3 - 4t^2 + t, g3 = t^3 + 2t^2 - 2t
  model.C << -1, -2, 1, 1, -4, 1, -2, 2, 1;
  return model;
}

// Points (0,0), (1,0), (0,1) as columns.
inline Eigen::MatrixXd example_points() {
  Eigen::MatrixXd p(2, 3);
  p << 0, 1, 0, 0, 0, 1;
  return p;
}

inline Eigen::MatrixXd psi_f1() {
  Eigen::MatrixXd p(2, 7);
  p << 3, -8, -4, -3, -3, -3, -9, 9, -4, -20, -3, -9, -9, -15;
  return p;
}

inline Eigen::MatrixXd psi_f2() {
  Eigen::MatrixXd p(2, 7);
  p << 0, 10, 8, -7, -2, -2, 2, -3, 8, 10, -2, 2, 2, 7;
  return p;
}

inline Eigen::MatrixXd example_z() {
  Eigen::MatrixXd zt(3, 7);
  zt << -1, -4, -2, 4, 2, 2, 1, 1, 4, -4, 1, -1, -1, 1, -2, 2, 4, 1, 2, 2, 4;
  return zt.transpose();
}

inline Eigen::MatrixXd example_h() {
  Eigen::MatrixXd h(3, 3);
  h << -1, 1, -2, 3, 12, 5, -2, -4, 18;
  return h;
}

// Jacobian slices at the three example points.
inline std::vector<Eigen::MatrixXd> example_j_slices() {
  Eigen::MatrixXd j1(2, 2), j2(2, 2), j3(2, 2);
  j1 << 3, 9, 0, -3;
  j2 << -22, -8, -1, 7;
  j3 << -32, -76, 22, 38;
  return {j1, j2, j3};
}

inline Eigen::MatrixXd example_a_transposed() {
  Eigen::MatrixXd at(3, 7);
  at << 1, 0, 0, 0, 0, 0, 0, 1, 2, 0, 3, 0, 0, 0, 1, 0, 2, 0, 0, 0, 3;
  return at;
}

// Factors returned by a structured solver in the literature for the example.
inline Eigen::MatrixXd reported_w() {
  Eigen::MatrixXd w(2, 3);
  w << 1.2767, 1.7112, 0, 0, -0.8556, -1.9980;
  return w;
}

inline Eigen::MatrixXd reported_v() {
  Eigen::MatrixXd v(2, 3);
  v << -0.9218, -1.0534, 1.5879, 0.9218, -2.1067, 0.7940;
  return v;
}

inline Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& gen) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(gen);
  }
  return m;
}

// Integers in [-lo, hi] divided by 4: arithmetic on these stays exact.
inline Eigen::MatrixXd dyadic_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& gen, int range = 8) {
  std::uniform_int_distribution<int> pick(-range, range);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = pick(gen) / 4.0;
  }
  return m;
}

// Largest |cos| between two distinct columns.
inline double max_coherence(const Eigen::MatrixXd& m) {
  double worst = 0.0;
  for (Eigen::Index a = 0; a < m.cols(); ++a) {
    for (Eigen::Index b = a + 1; b < m.cols(); ++b) {
      worst = std::max(worst, std::abs(m.col(a).dot(m.col(b))) / (m.col(a).norm() * m.col(b).norm()));
    }
  }
  return worst;
}

// Redraws until no factor has two nearly collinear columns; such instances
// make ALS swamp and are not what the recovery tests are about.
inline Eigen::MatrixXd conditioned_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& gen,
                                          double max_cos = 0.95) {
  Eigen::MatrixXd m = normal_matrix(rows, cols, gen);
  while (rows > 1 && max_coherence(m) > max_cos) m = normal_matrix(rows, cols, gen);
  return m;
}

inline DecoupledModel random_model(int m, int n, int d, int r, std::mt19937_64& gen) {
  return {normal_matrix(n, r, gen), normal_matrix(m, r, gen), normal_matrix(r, d, gen)};
}

// Dense random map with every monomial of degree 1..d present.
inline PolyMap random_map(int m, int n, int d, std::mt19937_64& gen, bool dyadic = false) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> pick(-16, 16);
  std::vector<Term> terms;
  for (int i = 0; i < n; ++i) {
    for (int s = 1; s <= d; ++s) {
      for (const auto& alpha : polydec::exponents_of_degree(m, s)) {
        terms.push_back({i, alpha, dyadic ? pick(gen) / 8.0 : normal(gen)});
      }
    }
  }
  return PolyMap::from_terms(m, n, d, terms);
}

}  // namespace fixtures

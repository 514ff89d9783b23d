#pragma once

#include <cmath>
#include <numeric>
#include <vector>

#include <Eigen/Eigenvalues>

#include "reggraph/error.hpp"

namespace reggraph {

/// Gauss rule for E[g(Z)], Z ~ N(0,1). Weights sum to one.
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
  int order() const { return static_cast<int>(nodes.size()); }
};

inline constexpr int kDefaultQuadOrder = 61;

/// Gauss-Hermite rule for the standard normal measure (probabilists'
/// Hermite polynomials) via the Golub-Welsch eigenproblem.
inline QuadratureRule gauss_hermite(int order = kDefaultQuadOrder) {
  require(order >= 1, "quadrature order must be positive");
  QuadratureRule q;
  if (order == 1) {
    q.nodes = {0.0};
    q.weights = {1.0};
    return q;
  }
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(order);
  Eigen::VectorXd sub(order - 1);
  for (int k = 1; k < order; ++k) sub(k - 1) = std::sqrt(static_cast<double>(k));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
  require(es.info() == Eigen::Success, "Golub-Welsch eigen solve failed");

  const auto& vals = es.eigenvalues();
  const auto& vecs = es.eigenvectors();
  q.nodes.resize(order);
  q.weights.resize(order);
  for (int i = 0; i < order; ++i) {
    q.nodes[i] = vals(i);
    q.weights[i] = vecs(0, i) * vecs(0, i);
  }
  // Symmetrize: the exact rule is symmetric about zero.
  for (int i = 0; i < order / 2; ++i) {
    const int j = order - 1 - i;
    const double x = 0.5 * (q.nodes[j] - q.nodes[i]);
    const double w = 0.5 * (q.weights[i] + q.weights[j]);
    q.nodes[i] = -x;
    q.nodes[j] = x;
    q.weights[i] = q.weights[j] = w;
  }
  if (order % 2 == 1) q.nodes[order / 2] = 0.0;
  const double total = std::accumulate(q.weights.begin(), q.weights.end(), 0.0);
  for (double& w : q.weights) w /= total;
  return q;
}

}  // namespace reggraph

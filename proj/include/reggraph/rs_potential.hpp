#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "reggraph/error.hpp"
#include "reggraph/prior.hpp"
#include "reggraph/quadrature.hpp"
#include "reggraph/scalar_channel.hpp"
#include "reggraph/state_evolution.hpp"

namespace reggraph {

/// Replica-symmetric potential
///   lambda rho^2/4 + mu^2/(4 lambda) + (kappa/2)[log(1+xi) - xi/(1+xi)] - mu rho/2 + I(mu, xi).
/// At lambda = 0 only mu = 0 is admissible and the graph terms vanish.
inline double rs_value(double mu, double xi, const PriorSpec& prior, double lambda, double kappa,
                       double Delta, const QuadratureRule& quad) {
  require(lambda >= 0.0 && kappa > 0.0 && Delta > 0.0, "invalid potential parameters");
  require(mu >= 0.0 && xi >= 0.0, "mu and xi must be nonnegative");
  const double rho = prior.rho();
  double graph = 0.0;
  if (lambda > 0.0) {
    graph = lambda * rho * rho / 4.0 + mu * mu / (4.0 * lambda) - mu * rho / 2.0;
  } else {
    require(mu == 0.0, "mu must be 0 when lambda = 0");
  }
  const double reg = 0.5 * kappa * (std::log1p(xi) - xi / (1.0 + xi));
  return graph + reg + scalar_mi(mu, xi, prior, Delta, kappa, quad);
}

/// Partial derivatives of the potential (mutual information enters through
/// the I-MMSE relation).
struct RsGradient {
  double d_mu = 0.0;
  double d_xi = 0.0;
};

inline RsGradient rs_gradient(double mu, double xi, const PriorSpec& prior, double lambda,
                              double kappa, double Delta, const QuadratureRule& quad) {
  RsGradient g;
  if (lambda > 0.0)
    g.d_mu = (mu - lambda * (prior.rho() - mmse1(mu, xi, prior, Delta, kappa, quad))) / (2.0 * lambda);
  g.d_xi = kappa / (2.0 * (1.0 + xi) * (1.0 + xi)) *
           (xi - mmse2(mu, xi, prior, Delta, kappa, quad) / Delta);
  return g;
}

struct RsCandidate {
  double mu = 0.0;
  double xi = 0.0;
  double value = 0.0;
};

struct RsEvaluation {
  double mu_bar = 0.0;
  double xi_bar = 0.0;
  double value = 0.0;  ///< limiting per-vertex mutual information
  double stationarity_residual = 0.0;
  std::vector<RsCandidate> candidates;
};

struct RsGridSpec {
  int mu_points = 40;
  int xi_points = 40;
  double tol = 1e-8;  ///< coordinate-descent stopping tolerance in (mu, xi)
  int max_sweeps = 500;
};

namespace detail {

/// Root of a function that is <= 0 at lo and >= 0 at hi, by bisection.
template <typename G>
double bisect_root(G&& g, double lo, double hi, double tol) {
  for (int i = 0; i < 200 && hi - lo > tol; ++i) {
    const double mid = 0.5 * (lo + hi);
    (g(mid) > 0.0 ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

/// Local minimizer on [lo, hi] of a 1-D function with derivative sign g,
/// moving downhill from x0. g(lo) <= 0 <= g(hi) is assumed at the box ends.
template <typename G>
double descend_1d(G&& g, double x0, double lo, double hi, double step, double tol) {
  const double g0 = g(x0);
  if (g0 == 0.0) return x0;
  if (g0 > 0.0) {
    double right = x0, left = x0;
    while (true) {
      left = std::max(lo, right - step);
      if (left == lo || g(left) <= 0.0) break;
      right = left;
      step *= 2.0;
    }
    if (left == lo && g(lo) > 0.0) return lo;
    return bisect_root(g, left, right, tol);
  }
  double left = x0, right = x0;
  while (true) {
    right = std::min(hi, left + step);
    if (right == hi || g(right) >= 0.0) break;
    left = right;
    step *= 2.0;
  }
  if (right == hi && g(hi) < 0.0) return hi;
  return bisect_root(g, left, right, tol);
}

}  // namespace detail

/// Coordinate descent from (mu0, xi0) inside [0, mu_max] x [0, xi_max].
inline RsCandidate rs_refine(double mu0, double xi0, const PriorSpec& prior, double lambda,
                             double kappa, double Delta, const QuadratureRule& quad, double mu_max,
                             double xi_max, const RsGridSpec& spec) {
  const double rho = prior.rho();
  double mu = lambda > 0.0 ? std::clamp(mu0, 0.0, mu_max) : 0.0;
  double xi = std::clamp(xi0, 0.0, xi_max);
  const double mu_step = std::max(mu_max, 1e-12) / std::max(1, spec.mu_points);
  const double xi_step = std::max(xi_max, 1e-12) / std::max(1, spec.xi_points);
  for (int sweep = 0; sweep < spec.max_sweeps; ++sweep) {
    const double mu_old = mu, xi_old = xi;
    if (lambda > 0.0 && mu_max > 0.0) {
      auto g = [&](double m) { return m - lambda * (rho - mmse1(m, xi, prior, Delta, kappa, quad)); };
      mu = detail::descend_1d(g, mu, 0.0, mu_max, mu_step, 0.01 * spec.tol);
    }
    if (xi_max > 0.0) {
      auto h = [&](double x) { return x - mmse2(mu, x, prior, Delta, kappa, quad) / Delta; };
      xi = detail::descend_1d(h, xi, 0.0, xi_max, xi_step, 0.01 * spec.tol);
    }
    if (std::abs(mu - mu_old) <= spec.tol && std::abs(xi - xi_old) <= spec.tol) break;
  }
  return {mu, xi, rs_value(mu, xi, prior, lambda, kappa, Delta, quad)};
}

/// Global minimization: grid scan, refinement from every grid local minimum
/// and from both state-evolution fixed points; the best candidate wins.
inline RsEvaluation minimize(const PriorSpec& prior, double lambda, double kappa, double Delta,
                             const QuadratureRule& quad, const RsGridSpec& spec = {}) {
  require(lambda >= 0.0 && kappa > 0.0 && Delta > 0.0, "invalid potential parameters");
  require(spec.mu_points >= 2 && spec.xi_points >= 2, "grid needs at least 2 points per axis");
  const double mu_max = lambda * prior.rho();
  const double xi_max = prior.second_moment_b() / Delta;
  const int nm = lambda > 0.0 ? spec.mu_points : 1;
  const int nx = xi_max > 0.0 ? spec.xi_points : 1;

  auto mu_at = [&](int i) { return nm == 1 ? 0.0 : mu_max * i / (nm - 1); };
  auto xi_at = [&](int j) { return nx == 1 ? 0.0 : xi_max * j / (nx - 1); };
  std::vector<double> grid(static_cast<std::size_t>(nm) * nx);
  for (int i = 0; i < nm; ++i)
    for (int j = 0; j < nx; ++j)
      grid[i * nx + j] = rs_value(mu_at(i), xi_at(j), prior, lambda, kappa, Delta, quad);

  std::vector<std::pair<double, double>> seeds;
  for (int i = 0; i < nm; ++i)
    for (int j = 0; j < nx; ++j) {
      const double v = grid[i * nx + j];
      bool local_min = true;
      for (int di = -1; di <= 1 && local_min; ++di)
        for (int dj = -1; dj <= 1; ++dj) {
          const int a = i + di, b = j + dj;
          if ((di || dj) && a >= 0 && a < nm && b >= 0 && b < nx && grid[a * nx + b] < v) {
            local_min = false;
            break;
          }
        }
      if (local_min) seeds.emplace_back(mu_at(i), xi_at(j));
    }
  for (const auto& fp : fixed_points(prior, lambda, kappa, Delta, quad))
    seeds.emplace_back(fp.mu_star, fp.xi_star);

  RsEvaluation ev;
  for (const auto& [m, x] : seeds)
    ev.candidates.push_back(rs_refine(m, x, prior, lambda, kappa, Delta, quad, mu_max, xi_max, spec));
  const auto best = std::min_element(ev.candidates.begin(), ev.candidates.end(),
                                     [](const auto& a, const auto& b) { return a.value < b.value; });
  ev.mu_bar = best->mu;
  ev.xi_bar = best->xi;
  ev.value = best->value;
  ev.stationarity_residual =
      fixed_point_residual(ev.mu_bar, ev.xi_bar, prior, lambda, kappa, Delta, quad);
  return ev;
}

struct OptimalityReport {
  SeFixedPoint amp_fixed_point;
  RsEvaluation rs;
  bool coincide = false;
  double mmse_pred = 0.0;    ///< rho^2 - mu_bar^2 / lambda^2
  double y_mmse_pred = 0.0;  ///< Delta xi_bar / (1 + xi_bar)
};

/// Compares the state-evolution fixed point reached from the uninformative
/// start with the global minimizer of the potential.
inline OptimalityReport optimality_check(const PriorSpec& prior, double lambda, double kappa,
                                         double Delta, const QuadratureRule& quad,
                                         double tol_match = 1e-4, const RsGridSpec& spec = {}) {
  OptimalityReport r;
  r.amp_fixed_point = fixed_point(prior, lambda, kappa, Delta, quad);
  r.rs = minimize(prior, lambda, kappa, Delta, quad, spec);
  r.coincide = std::max(std::abs(r.amp_fixed_point.mu_star - r.rs.mu_bar),
                        std::abs(r.amp_fixed_point.xi_star - r.rs.xi_bar)) <= tol_match;
  const auto e = predicted_errors(r.rs.mu_bar, r.rs.xi_bar, prior, lambda, Delta);
  r.mmse_pred = e.mse_sigma;
  r.y_mmse_pred = e.mse_beta;
  return r;
}

}  // namespace reggraph

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "reggraph/denoiser.hpp"
#include "reggraph/error.hpp"
#include "reggraph/prior.hpp"
#include "reggraph/quadrature.hpp"
#include "reggraph/scalar_channel.hpp"

namespace reggraph {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Gain and noise of the initial sigma iterate. The default (0, 0) means the
/// initial sigma iterate carries no information about sigma0.
struct SeInit {
  double eta0 = 0.0;
  double nu0 = 0.0;
};

/// State-evolution trajectory. Index t holds (eta_t, nu_t, tau_t). The
/// regression channel feeding the first sigma denoiser is uninformative
/// (tau_{-1} = inf): AMP starts from beta^{-1} = z^{-1} = 0.
struct SeTrace {
  double lambda = 0.0;
  double kappa = 1.0;
  double Delta = 1.0;
  std::vector<double> eta, nu, tau;

  int steps() const { return static_cast<int>(eta.size()) - 1; }

  double tau_at(int t) const { return t < 0 ? kInf : tau.at(t); }

  double mu(int t) const {
    const double n = nu.at(t);
    return n > 0.0 ? eta.at(t) * eta.at(t) / (n * n) : 0.0;
  }
  /// xi_t = (kappa tau_t^2 - Delta)/Delta; +inf at t = -1.
  double xi(int t) const {
    if (t < 0) return kInf;
    return (kappa * tau.at(t) * tau.at(t) - Delta) / Delta;
  }

  /// Channel of f_t: sigma-obs ~ sigma^t, B-obs ~ S^T z^{t-1} + beta^{t-1}.
  ScalarChannelParams sigma_denoiser_channel(int t) const {
    return {eta.at(t), nu.at(t), tau_at(t - 1)};
  }
  /// Channel of the beta denoiser producing beta^{t+1}:
  /// B-obs ~ S^T z^t + beta^t, sigma-obs ~ sigma^{t+1}.
  ScalarChannelParams beta_denoiser_channel(int t) const {
    return {eta.at(t + 1), nu.at(t + 1), tau.at(t)};
  }
};

/// Runs the (eta, nu, tau) recursion for T steps.
inline SeTrace se_run(const PriorSpec& prior, double lambda, double kappa, double Delta, int T,
                      const QuadratureRule& quad, SeInit init = {}) {
  require(T >= 1, "T must be >= 1");
  require(lambda >= 0.0 && kappa > 0.0 && Delta > 0.0, "invalid state-evolution parameters");
  const PosteriorEngine engine(prior);
  SeTrace tr;
  tr.lambda = lambda;
  tr.kappa = kappa;
  tr.Delta = Delta;
  tr.eta.reserve(T + 1);
  tr.nu.reserve(T + 1);
  tr.tau.reserve(T + 1);
  tr.eta.push_back(init.eta0);
  tr.nu.push_back(init.nu0);
  tr.tau.push_back(std::sqrt((Delta + prior.second_moment_b()) / kappa));

  for (int t = 0; t < T; ++t) {
    const auto chf = tr.sigma_denoiser_channel(t);
    const double nu2 = integrate_channel(engine, chf, quad, [&](const JointAtom&, double xs, double xb) {
      const double f = engine.moments(xs, xb, chf).mean_sigma;
      return f * f;
    });
    tr.nu.push_back(std::sqrt(std::max(0.0, nu2)));
    tr.eta.push_back(std::sqrt(lambda) * nu2);

    const auto chz = tr.beta_denoiser_channel(t);
    const double mse = integrate_channel(engine, chz, quad, [&](const JointAtom& a, double xs, double xb) {
      const double e = engine.moments(xs, xb, chz).mean_b - a.b;
      return e * e;
    });
    tr.tau.push_back(std::sqrt((Delta + std::max(0.0, mse)) / kappa));
  }
  return tr;
}

enum class SeStart {
  kUninformative,  ///< mu_0 = 0, xi_{-1} = inf, xi_0 = E[B^2]/Delta
  kInformative,    ///< mu_0 = lambda rho, xi_{-1} = xi_0 = 0
};

struct SeFixedPoint {
  double mu_star = 0.0;
  double xi_star = 0.0;
  int iterations = 0;
  double residual = kInf;
  bool converged = false;
  SeStart start = SeStart::kUninformative;
};

/// max(|mu - lambda(rho - mmse1)|, |xi - mmse2/Delta|).
inline double fixed_point_residual(double mu, double xi, const PriorSpec& prior, double lambda,
                                   double kappa, double Delta, const QuadratureRule& quad) {
  const double r1 = mu - lambda * (prior.rho() - mmse1(mu, xi, prior, Delta, kappa, quad));
  const double r2 = xi - mmse2(mu, xi, prior, Delta, kappa, quad) / Delta;
  return std::max(std::abs(r1), std::abs(r2));
}

struct FixedPointOptions {
  double tol = 1e-10;
  int max_iter = 10000;
  SeStart start = SeStart::kUninformative;
};

/// Iterates
///   mu_{t+1} = lambda (rho - mmse1(mu_t, xi_{t-1})),
///   xi_{t+1} = mmse2(mu_{t+1}, xi_t) / Delta
/// until the fixed-point residual drops below tol. Non-convergence is
/// reported through `converged`, not thrown.
inline SeFixedPoint fixed_point(const PriorSpec& prior, double lambda, double kappa, double Delta,
                                const QuadratureRule& quad, FixedPointOptions opt = {}) {
  require(lambda >= 0.0 && kappa > 0.0 && Delta > 0.0, "invalid fixed-point parameters");
  double mu, xi_prev, xi;
  if (opt.start == SeStart::kUninformative) {
    mu = 0.0;
    xi_prev = kInf;
    xi = prior.second_moment_b() / Delta;
  } else {
    mu = lambda * prior.rho();
    xi_prev = 0.0;
    xi = 0.0;
  }
  SeFixedPoint fp;
  fp.start = opt.start;
  for (int it = 1; it <= opt.max_iter; ++it) {
    const double mu_next = lambda * (prior.rho() - mmse1(mu, xi_prev, prior, Delta, kappa, quad));
    const double xi_next = mmse2(mu_next, xi, prior, Delta, kappa, quad) / Delta;
    xi_prev = xi;
    mu = mu_next;
    xi = xi_next;
    fp.iterations = it;
    fp.residual = fixed_point_residual(mu, xi, prior, lambda, kappa, Delta, quad);
    if (fp.residual <= opt.tol) {
      fp.converged = true;
      break;
    }
  }
  fp.mu_star = mu;
  fp.xi_star = xi;
  return fp;
}

/// Both the uninformative and the informative limits.
inline std::vector<SeFixedPoint> fixed_points(const PriorSpec& prior, double lambda, double kappa,
                                              double Delta, const QuadratureRule& quad,
                                              FixedPointOptions opt = {}) {
  std::vector<SeFixedPoint> out;
  for (SeStart s : {SeStart::kUninformative, SeStart::kInformative}) {
    opt.start = s;
    out.push_back(fixed_point(prior, lambda, kappa, Delta, quad, opt));
  }
  return out;
}

struct PredictedErrors {
  double mse_sigma = 0.0;  ///< rho^2 - mu*^2 / lambda^2
  double mse_beta = 0.0;   ///< Delta xi* / (1 + xi*)
};

inline PredictedErrors predicted_errors(double mu_star, double xi_star, const PriorSpec& prior,
                                        double lambda, double Delta) {
  const double rho = prior.rho();
  PredictedErrors e;
  e.mse_sigma = lambda > 0.0 ? rho * rho - (mu_star * mu_star) / (lambda * lambda) : rho * rho;
  e.mse_sigma = std::clamp(e.mse_sigma, 0.0, rho * rho);
  e.mse_beta = Delta * xi_star / (1.0 + xi_star);
  return e;
}

inline PredictedErrors predicted_errors(const SeFixedPoint& fp, const PriorSpec& prior,
                                        double lambda, double Delta) {
  return predicted_errors(fp.mu_star, fp.xi_star, prior, lambda, Delta);
}

}  // namespace reggraph

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "reggraph/denoiser.hpp"
#include "reggraph/prior.hpp"
#include "reggraph/quadrature.hpp"

namespace reggraph {

inline constexpr int kMinFunctionalQuadOrder = 21;

/// B-channel noise sd sqrt(Delta (1 + xi) / kappa); infinite when xi is.
inline double beta_noise_sd(double xi, double Delta, double kappa) {
  if (std::isinf(xi)) return std::numeric_limits<double>::infinity();
  return std::sqrt(Delta * (1.0 + xi) / kappa);
}

/// Channel with sigma-obs = sqrt(mu) Sigma + Z and B-obs = B + tau Z'.
inline ScalarChannelParams unit_noise_channel(double mu, double xi, double Delta, double kappa) {
  return {std::sqrt(mu), 1.0, beta_noise_sd(xi, Delta, kappa)};
}

/// Sum over joint atoms and a tensor Gauss-Hermite rule of
/// fn(atom, sigma_obs, b_obs), weighted by prior * quadrature weights.
/// Dimensions whose channel is uninformative or exact collapse to a single
/// node (the observation does not vary or is ignored).
template <typename Fn>
double integrate_channel(const PosteriorEngine& engine, const ScalarChannelParams& ch,
                         const QuadratureRule& quad, Fn&& fn) {
  static const QuadratureRule kPoint{{0.0}, {1.0}};
  const bool vary_s = sigma_channel_kind(ch) == ChannelKind::kGaussian;
  const bool vary_b = beta_channel_kind(ch) == ChannelKind::kGaussian;
  const QuadratureRule& qs = vary_s ? quad : kPoint;
  const QuadratureRule& qb = vary_b ? quad : kPoint;
  const double nu = vary_s ? ch.nu : 0.0;
  const double tau = vary_b ? ch.tau : 0.0;
  const bool drop_b = beta_channel_kind(ch) == ChannelKind::kUninformative;

  double total = 0.0;
  for (const auto& a : engine.atoms()) {
    double acc = 0.0;
    for (int i = 0; i < qs.order(); ++i) {
      const double xs = ch.eta * a.sigma + nu * qs.nodes[i];
      double inner = 0.0;
      for (int j = 0; j < qb.order(); ++j) {
        const double xb = drop_b ? 0.0 : a.b + tau * qb.nodes[j];
        inner += qb.weights[j] * fn(a, xs, xb);
      }
      acc += qs.weights[i] * inner;
    }
    total += a.weight * acc;
  }
  return total;
}

/// E[(Sigma - E[Sigma | sqrt(mu) Sigma + Z, B + sqrt(Delta(1+xi)/kappa) Z'])^2].
inline double mmse1(double mu, double xi, const PriorSpec& prior, double Delta, double kappa,
                    const QuadratureRule& quad) {
  require(quad.order() >= kMinFunctionalQuadOrder, "quadrature order must be >= 21");
  require(mu >= 0.0 && xi >= 0.0 && Delta > 0.0 && kappa > 0.0, "invalid mmse1 arguments");
  const PosteriorEngine engine(prior);
  const auto ch = unit_noise_channel(mu, xi, Delta, kappa);
  const double v = integrate_channel(engine, ch, quad, [&](const JointAtom& a, double xs, double xb) {
    const double e = a.sigma - engine.moments(xs, xb, ch).mean_sigma;
    return e * e;
  });
  return std::clamp(v, 0.0, prior.rho() * (1.0 - prior.rho()));
}

/// E[(B - E[B | B + sqrt(Delta(1+xi)/kappa) Z, sqrt(mu) Sigma + Z'])^2].
inline double mmse2(double mu, double xi, const PriorSpec& prior, double Delta, double kappa,
                    const QuadratureRule& quad) {
  require(quad.order() >= kMinFunctionalQuadOrder, "quadrature order must be >= 21");
  require(mu >= 0.0 && xi >= 0.0 && Delta > 0.0 && kappa > 0.0, "invalid mmse2 arguments");
  const PosteriorEngine engine(prior);
  const auto ch = unit_noise_channel(mu, xi, Delta, kappa);
  const double v = integrate_channel(engine, ch, quad, [&](const JointAtom& a, double xs, double xb) {
    const double e = a.b - engine.moments(xs, xb, ch).mean_b;
    return e * e;
  });
  return std::clamp(v, 0.0, prior.var_b());
}

/// Mutual information between (Sigma, B) and the pair
/// (a, y) = (sqrt(mu) Sigma + Z, B + sqrt(Delta(1+xi)/kappa) eps).
inline double scalar_mi(double mu, double xi, const PriorSpec& prior, double Delta, double kappa,
                        const QuadratureRule& quad) {
  require(quad.order() >= kMinFunctionalQuadOrder, "quadrature order must be >= 21");
  require(mu >= 0.0 && xi >= 0.0 && Delta > 0.0 && kappa > 0.0, "invalid scalar_mi arguments");
  const auto atoms = prior.joint_atoms();
  const double sqmu = std::sqrt(mu);
  const double tau = beta_noise_sd(xi, Delta, kappa);
  const bool use_b = std::isfinite(tau);
  const double inv_tau = use_b ? 1.0 / tau : 0.0;

  // log P(a,y|k)/P(a,y) = -log sum_l w_l exp(-(d_s(k,l) + d_b(k,l))) with
  // d_s = ((z + sqrt(mu)(s_k - s_l))^2 - z^2)/2, d_b likewise in units of tau.
  std::vector<double> expo(atoms.size());
  double total = 0.0;
  for (const auto& ak : atoms) {
    double acc = 0.0;
    for (int i = 0; i < quad.order(); ++i) {
      const double z = quad.nodes[i];
      for (int j = 0; j < quad.order(); ++j) {
        const double e = quad.nodes[j];
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t l = 0; l < atoms.size(); ++l) {
          const double us = sqmu * (ak.sigma - atoms[l].sigma);
          double v = std::log(atoms[l].weight) - us * (z + 0.5 * us);
          if (use_b) {
            const double ub = (ak.b - atoms[l].b) * inv_tau;
            v -= ub * (e + 0.5 * ub);
          }
          expo[l] = v;
          mx = std::max(mx, v);
        }
        double s = 0.0;
        for (double v : expo) s += std::exp(v - mx);
        acc += quad.weights[i] * quad.weights[j] * -(mx + std::log(s));
      }
    }
    total += ak.weight * acc;
  }
  return std::max(0.0, total);
}

}  // namespace reggraph

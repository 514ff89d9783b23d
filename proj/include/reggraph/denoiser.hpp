#pragma once

// Posterior-mean denoisers for the two-channel scalar problem
//
//   sigma-obs = eta * Sigma + nu * Z2,     B-obs = B + tau * Z1,
//
// with (Sigma, B) drawn from a discrete PriorSpec. A channel is
//   - Gaussian     when its noise sd is positive and finite,
//   - Exact        when its noise sd is zero and its gain is nonzero
//                  (posterior restricted to atoms matching within 1e-9),
//   - Uninformative when its noise sd is infinite, or both sd and gain are
//                  zero; the channel contributes no likelihood factor.
// The B channel always has unit gain.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "reggraph/error.hpp"
#include "reggraph/prior.hpp"

namespace reggraph {

struct ScalarChannelParams {
  double eta = 0.0;  ///< sigma-channel gain
  double nu = 0.0;   ///< sigma-channel noise sd
  double tau = 0.0;  ///< B-channel noise sd

  void validate() const {
    require(eta >= 0.0 && nu >= 0.0 && tau >= 0.0 && !std::isnan(eta) && !std::isnan(nu) &&
                !std::isnan(tau),
            "channel parameters must be nonnegative");
  }
};

enum class ChannelKind { kGaussian, kExact, kUninformative };

inline constexpr double kExactMatchTol = 1e-9;

inline ChannelKind sigma_channel_kind(const ScalarChannelParams& ch) {
  if (std::isinf(ch.nu)) return ChannelKind::kUninformative;
  if (ch.nu == 0.0) return ch.eta == 0.0 ? ChannelKind::kUninformative : ChannelKind::kExact;
  return ChannelKind::kGaussian;
}

inline ChannelKind beta_channel_kind(const ScalarChannelParams& ch) {
  if (std::isinf(ch.tau)) return ChannelKind::kUninformative;
  if (ch.tau == 0.0) return ChannelKind::kExact;
  return ChannelKind::kGaussian;
}

struct PosteriorMoments {
  double mean_sigma = 0.0;
  double mean_b = 0.0;
  double var_sigma = 0.0;
  double var_b = 0.0;
  double cov_sigma_b = 0.0;
};

/// Precomputed view of a prior for repeated posterior evaluation.
class PosteriorEngine {
 public:
  explicit PosteriorEngine(const PriorSpec& prior) : atoms_(prior.joint_atoms()) {
    log_w_.reserve(atoms_.size());
    for (const auto& a : atoms_) log_w_.push_back(std::log(a.weight));
  }

  const std::vector<JointAtom>& atoms() const { return atoms_; }

  /// Posterior moments of (Sigma, B) given sigma-obs = x and B-obs = y.
  PosteriorMoments moments(double x, double y, const ScalarChannelParams& ch) const {
    const ChannelKind ks = sigma_channel_kind(ch);
    const ChannelKind kb = beta_channel_kind(ch);
    const double inv_nu2 = ks == ChannelKind::kGaussian ? 1.0 / (ch.nu * ch.nu) : 0.0;
    const double inv_tau2 = kb == ChannelKind::kGaussian ? 1.0 / (ch.tau * ch.tau) : 0.0;
    constexpr double kNegInf = -std::numeric_limits<double>::infinity();

    auto log_lik = [&](std::size_t k) {
      const auto& a = atoms_[k];
      double l = log_w_[k];
      const double rs = x - ch.eta * a.sigma;
      if (ks == ChannelKind::kGaussian)
        l -= 0.5 * rs * rs * inv_nu2;
      else if (ks == ChannelKind::kExact && std::abs(rs) > kExactMatchTol)
        return kNegInf;
      const double rb = y - a.b;
      if (kb == ChannelKind::kGaussian)
        l -= 0.5 * rb * rb * inv_tau2;
      else if (kb == ChannelKind::kExact && std::abs(rb) > kExactMatchTol)
        return kNegInf;
      return l;
    };

    double max_l = kNegInf;
    for (std::size_t k = 0; k < atoms_.size(); ++k) max_l = std::max(max_l, log_lik(k));
    if (max_l == kNegInf) fail("inconsistent observation");

    double z = 0.0, s1 = 0.0, b1 = 0.0, b2 = 0.0, sb = 0.0;
    for (std::size_t k = 0; k < atoms_.size(); ++k) {
      const double w = std::exp(log_lik(k) - max_l);
      const double s = atoms_[k].sigma;
      const double b = atoms_[k].b;
      z += w;
      s1 += w * s;
      b1 += w * b;
      b2 += w * b * b;
      sb += w * s * b;
    }
    PosteriorMoments m;
    m.mean_sigma = s1 / z;
    m.mean_b = b1 / z;
    m.var_sigma = std::max(0.0, m.mean_sigma - m.mean_sigma * m.mean_sigma);
    m.var_b = std::max(0.0, b2 / z - m.mean_b * m.mean_b);
    m.cov_sigma_b = sb / z - m.mean_sigma * m.mean_b;
    return m;
  }

 private:
  std::vector<JointAtom> atoms_;
  std::vector<double> log_w_;
};

/// E[Sigma | sigma-obs = x, B-obs = y].
inline double denoise_sigma(double x, double y, const ScalarChannelParams& ch,
                            const PriorSpec& prior) {
  ch.validate();
  return std::clamp(PosteriorEngine(prior).moments(x, y, ch).mean_sigma, 0.0, 1.0);
}

/// E[B | B-obs = x, sigma-obs = y]. Argument order follows the B channel first.
inline double denoise_beta(double x, double y, const ScalarChannelParams& ch,
                           const PriorSpec& prior) {
  ch.validate();
  const double s = prior.s_max();
  return std::clamp(PosteriorEngine(prior).moments(y, x, ch).mean_b, -s, s);
}

/// Partial derivatives of both denoisers, keyed by channel role.
struct DenoiserPartials {
  double df_dsigma_obs = 0.0;
  double df_dbeta_obs = 0.0;
  double dzeta_dbeta_obs = 0.0;
  double dzeta_dsigma_obs = 0.0;
};

/// Analytic partials from posterior (co)variances. A Gaussian channel
/// contributes gain/noise-variance times the posterior covariance with its
/// signal; an uninformative channel contributes zero.
inline DenoiserPartials partials_from_moments(const PosteriorMoments& m,
                                              const ScalarChannelParams& ch) {
  const ChannelKind ks = sigma_channel_kind(ch);
  const ChannelKind kb = beta_channel_kind(ch);
  if (ks == ChannelKind::kExact || kb == ChannelKind::kExact)
    fail("derivative undefined at exact conditioning");
  const double gs = ks == ChannelKind::kGaussian ? ch.eta / (ch.nu * ch.nu) : 0.0;
  const double gb = kb == ChannelKind::kGaussian ? 1.0 / (ch.tau * ch.tau) : 0.0;
  DenoiserPartials d;
  d.df_dsigma_obs = gs * m.var_sigma;
  d.df_dbeta_obs = gb * m.cov_sigma_b;
  d.dzeta_dbeta_obs = gb * m.var_b;
  d.dzeta_dsigma_obs = gs * m.cov_sigma_b;
  return d;
}

/// Partials at (sigma-obs = x, B-obs = y).
inline DenoiserPartials denoiser_partials(double x, double y, const ScalarChannelParams& ch,
                                          const PriorSpec& prior) {
  ch.validate();
  if (sigma_channel_kind(ch) == ChannelKind::kExact ||
      beta_channel_kind(ch) == ChannelKind::kExact)
    fail("derivative undefined at exact conditioning");
  return partials_from_moments(PosteriorEngine(prior).moments(x, y, ch), ch);
}

}  // namespace reggraph

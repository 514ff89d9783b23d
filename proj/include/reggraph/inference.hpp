#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "reggraph/error.hpp"
#include "reggraph/synth.hpp"

namespace reggraph {

/// Standard normal cdf via erfc (no cancellation in either tail).
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Upper tail 1 - Phi(x).
inline double normal_sf(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

/// Inverse normal cdf: Acklam's rational approximation (rel. error ~1e-9)
/// followed by one Halley step against erfc.
inline double normal_quantile(double q) {
  require(q > 0.0 && q < 1.0, "normal quantile requires q in (0,1)");
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double lo = 0.02425, hi = 1.0 - lo;
  double x;
  if (q < lo) {
    const double r = std::sqrt(-2.0 * std::log(q));
    x = (((((c[0] * r + c[1]) * r + c[2]) * r + c[3]) * r + c[4]) * r + c[5]) /
        ((((d[0] * r + d[1]) * r + d[2]) * r + d[3]) * r + 1.0);
  } else if (q <= hi) {
    const double s = q - 0.5, r = s * s;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * s /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double r = std::sqrt(-2.0 * std::log1p(-q));
    x = -(((((c[0] * r + c[1]) * r + c[2]) * r + c[3]) * r + c[4]) * r + c[5]) /
        ((((d[0] * r + d[1]) * r + d[2]) * r + d[3]) * r + 1.0);
  }
  // Halley refinement; the residual is taken on the smaller tail.
  const double e = q < 0.5 ? normal_cdf(x) - q : (1.0 - q) - normal_sf(x);
  const double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

/// (1/p^2) ||u u^T - v v^T||_F^2 through inner products only.
inline double mse_sigma(const Vec& sigma_hat, const Vec& sigma0) {
  require(sigma_hat.size() == sigma0.size() && sigma0.size() > 0, "length mismatch");
  const double p = static_cast<double>(sigma0.size());
  const double uu = sigma_hat.squaredNorm(), uv = sigma_hat.dot(sigma0), vv = sigma0.squaredNorm();
  return (uu * uu - 2.0 * uv * uv + vv * vv) / (p * p);
}

/// (1/n) ||Phi (beta_hat - beta0)||^2.
inline double mse_beta(const Mat& Phi, const Vec& beta_hat, const Vec& beta0) {
  require(Phi.cols() == beta_hat.size() && beta_hat.size() == beta0.size(), "dimension mismatch");
  return (Phi * (beta_hat - beta0)).squaredNorm() / static_cast<double>(Phi.rows());
}

/// Two-sided p-values 2(1 - Phi(|x| / nu)).
inline Vec pvalues(const Vec& sigma_iter, double nu) {
  require(nu > 0.0 && std::isfinite(nu), "p-values need a positive finite noise level");
  Vec out(sigma_iter.size());
  for (Eigen::Index i = 0; i < sigma_iter.size(); ++i)
    out[i] = std::min(1.0, 2.0 * normal_sf(std::abs(sigma_iter[i]) / nu));
  return out;
}

enum class ThresholdRule {
  kInfCrossing,  ///< s* = inf{s : FDP_hat(s) >= alpha}, reject p < s*
  kStepUp,       ///< textbook: largest k with p_(k) <= alpha k / C, reject p <= p_(k)
};

struct DiscoveryResult {
  Vec pvalues;
  double s_star = 0.0;
  std::vector<int> rejected;  ///< sorted indices
  std::optional<double> empirical_fdp;
  std::optional<double> empirical_tdp;
};

/// FDP_hat(s) = C s / max(1, #{p_i <= s}) with C = p (1 - rho).
inline double fdp_hat(const Vec& pv, double rho, double s) {
  const double C = static_cast<double>(pv.size()) * (1.0 - rho);
  const auto k = (pv.array() <= s).count();
  return C * s / std::max<double>(1.0, static_cast<double>(k));
}

/// Exact s*: FDP_hat is linear in s between consecutive sorted p-values, so
/// the first crossing is either an interval's left end or alpha max(1,k)/C.
/// Returns +inf when FDP_hat stays below alpha on [0,1].
inline double inf_crossing_threshold(const Vec& pv, double rho, double alpha) {
  std::vector<double> q(pv.data(), pv.data() + pv.size());
  std::sort(q.begin(), q.end());
  const double C = static_cast<double>(q.size()) * (1.0 - rho);
  double left = 0.0;
  std::size_t k = 0;
  while (k < q.size() && q[k] <= 0.0) ++k;
  while (true) {
    const double right = k < q.size() ? q[k] : 1.0;
    const double cand = std::max(left, alpha * std::max<double>(1.0, static_cast<double>(k)) / C);
    if (k < q.size() ? cand < right : cand <= right) return cand;
    if (k == q.size()) return std::numeric_limits<double>::infinity();
    left = q[k];
    while (k < q.size() && q[k] == left) ++k;
  }
}

inline double step_up_threshold(const Vec& pv, double rho, double alpha) {
  std::vector<double> q(pv.data(), pv.data() + pv.size());
  std::sort(q.begin(), q.end());
  const double C = static_cast<double>(q.size()) * (1.0 - rho);
  double s = -1.0;
  for (std::size_t k = 1; k <= q.size(); ++k)
    if (q[k - 1] <= alpha * static_cast<double>(k) / C) s = q[k - 1];
  return s;
}

/// Optional truth: sigma0 (nonzero = non-null) for FDP / TDP.
inline DiscoveryResult discover(const Vec& pv, double rho, double alpha,
                                const Vec* sigma0 = nullptr,
                                ThresholdRule rule = ThresholdRule::kInfCrossing) {
  require(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0,1)");
  require(rho >= 0.0 && rho < 1.0, "rho must lie in [0,1)");
  require(pv.size() > 0, "no p-values");
  DiscoveryResult r;
  r.pvalues = pv;
  if (rule == ThresholdRule::kInfCrossing) {
    r.s_star = inf_crossing_threshold(pv, rho, alpha);
    for (Eigen::Index i = 0; i < pv.size(); ++i)
      if (pv[i] < r.s_star) r.rejected.push_back(static_cast<int>(i));
  } else {
    r.s_star = step_up_threshold(pv, rho, alpha);
    for (Eigen::Index i = 0; i < pv.size(); ++i)
      if (pv[i] <= r.s_star) r.rejected.push_back(static_cast<int>(i));
  }
  if (sigma0) {
    require(sigma0->size() == pv.size(), "truth length mismatch");
    std::size_t false_pos = 0;
    for (int i : r.rejected)
      if ((*sigma0)[i] == 0.0) ++false_pos;
    const double denom = std::max<double>(1.0, static_cast<double>(r.rejected.size()));
    r.empirical_fdp = static_cast<double>(false_pos) / denom;
    r.empirical_tdp = static_cast<double>(r.rejected.size() - false_pos) / denom;
  }
  return r;
}

struct CredibleIntervals {
  Vec lower, upper;
  double alpha = 0.0;
  std::optional<double> empirical_coverage;
};

/// [x/eta - (nu/eta) z, x/eta + (nu/eta) z] with z = Phi^{-1}(1 - alpha/2).
inline CredibleIntervals credible_intervals(const Vec& sigma_iter, double eta, double nu,
                                            double alpha, const Vec* sigma0 = nullptr) {
  if (!(eta > 0.0)) fail("uninformative iteration; intervals undefined");
  require(nu >= 0.0 && std::isfinite(nu), "invalid noise level");
  require(alpha > 0.0 && alpha <= 1.0, "alpha must lie in (0,1]");
  const double z = alpha == 1.0 ? 0.0 : normal_quantile(1.0 - alpha / 2.0);
  const double half = nu / eta * z;
  CredibleIntervals ci;
  ci.alpha = alpha;
  ci.lower = sigma_iter.array() / eta - half;
  ci.upper = sigma_iter.array() / eta + half;
  if (sigma0) {
    require(sigma0->size() == sigma_iter.size(), "truth length mismatch");
    const auto hit = ((sigma0->array() >= ci.lower.array()) && (sigma0->array() <= ci.upper.array())).count();
    ci.empirical_coverage = static_cast<double>(hit) / static_cast<double>(sigma_iter.size());
  }
  return ci;
}

}  // namespace reggraph

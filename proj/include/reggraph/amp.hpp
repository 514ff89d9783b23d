#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "reggraph/denoiser.hpp"
#include "reggraph/error.hpp"
#include "reggraph/quadrature.hpp"
#include "reggraph/state_evolution.hpp"
#include "reggraph/synth.hpp"

namespace reggraph {

enum class AmpInit { kPriorMean, kOracle };
enum class MatrixMode { kSbm, kGaussianSurrogate };

inline std::string to_string(MatrixMode m) {
  return m == MatrixMode::kSbm ? "sbm" : "gaussian-surrogate";
}
inline MatrixMode parse_matrix_mode(const std::string& s) {
  if (s == "sbm") return MatrixMode::kSbm;
  if (s == "gaussian-surrogate" || s == "gaussian") return MatrixMode::kGaussianSurrogate;
  fail("unknown matrix mode '" + s + "' (expected sbm|gaussian-surrogate)");
}

struct AmpConfig {
  int T = 25;
  AmpInit init = AmpInit::kPriorMean;
  double oracle_eps = 0.5;  ///< overlap of the oracle initialization
  MatrixMode matrix_mode = MatrixMode::kSbm;
  bool record_history = false;
  double damping = 1.0;  ///< gamma in (0,1]; 1 disables damping
  int quad_order = kDefaultQuadOrder;

  void validate() const {
    require(T >= 1, "T must be >= 1");
    require(damping > 0.0 && damping <= 1.0, "damping must lie in (0,1]");
    if (init == AmpInit::kOracle)
      require(oracle_eps > 0.0 && oracle_eps <= 1.0, "oracle overlap must lie in (0,1]");
  }
};

/// Diagnostics of sigma_hat^t and beta^t together with their SE predictions.
struct AmpIterate {
  int t = 0;
  double overlap = 0.0;          ///< (1/p) <sigma_hat^t, sigma0>
  double mse_sigma = 0.0;        ///< (1/p^2) ||sigma_hat sigma_hat^T - sigma0 sigma0^T||_F^2
  double mse_beta = 0.0;         ///< (1/p) ||beta^t - beta0||^2
  double pred_error = 0.0;       ///< (1/n) ||Phi (beta^t - beta0)||^2
  double se_overlap_pred = 0.0;  ///< rho - mmse1(mu_t, xi_{t-1})
  double se_mse_beta = 0.0;      ///< Delta xi_t
  double se_pred_error = 0.0;    ///< Delta xi_t / (1 + xi_t)
  double onsager_sigma = 0.0;    ///< (A f_t)
  double onsager_beta = 0.0;     ///< (A zeta_{t-1})
};

struct AmpResult {
  Vec sigma_iter;  ///< sigma^T
  Vec sigma_hat;   ///< f_T(sigma^T, S^T z^{T-1} + beta^{T-1})
  Vec beta_hat;    ///< beta^T
  Vec z;           ///< z^{T-1}
  std::vector<AmpIterate> diagnostics;  ///< t = 0..T
  SeTrace se_trace;
  double damping = 1.0;
  std::vector<Vec> sigma_iter_history;  ///< sigma^t, t = 0..T (record_history)
  std::vector<Vec> sigma_hat_history;   ///< sigma_hat^t, t = 0..T (record_history)
};

enum class OnsagerKind { kSigmaDenoiser, kBetaDenoiser };

/// Mean over coordinates of the partial derivative of a denoiser with
/// respect to its first positional argument: the sigma observation for the
/// sigma denoiser, the B observation for the beta denoiser.
inline double onsager_average(OnsagerKind kind, const Vec& first, const Vec& second,
                              const ScalarChannelParams& ch, const PosteriorEngine& engine) {
  require(first.size() == second.size() && first.size() > 0, "argument length mismatch");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < first.size(); ++i) {
    const bool sig = kind == OnsagerKind::kSigmaDenoiser;
    const double xs = sig ? first[i] : second[i];
    const double xb = sig ? second[i] : first[i];
    const auto d = partials_from_moments(engine.moments(xs, xb, ch), ch);
    acc += sig ? d.df_dsigma_obs : d.dzeta_dbeta_obs;
  }
  return acc / static_cast<double>(first.size());
}

inline double onsager_average(OnsagerKind kind, const Vec& first, const Vec& second,
                              const ScalarChannelParams& ch, const PriorSpec& prior) {
  return onsager_average(kind, first, second, ch, PosteriorEngine(prior));
}

/// (1/p^2) ||u u^T - v v^T||_F^2 = ((u.u)^2 - 2 (u.v)^2 + (v.v)^2) / p^2.
inline double rank_one_mse(const Vec& u, const Vec& v) {
  require(u.size() == v.size(), "length mismatch");
  const double p = static_cast<double>(u.size());
  const double uu = u.squaredNorm(), uv = u.dot(v), vv = v.squaredNorm();
  return (uu * uu - 2.0 * uv * uv + vv * vv) / (p * p);
}

/// Graph + regression AMP with Bayes posterior-mean denoisers whose noise
/// levels come from the state-evolution trace.
inline AmpResult amp_run(const Dataset& ds, const PriorSpec& prior, const ModelParams& params,
                         const AmpConfig& cfg) {
  cfg.validate();
  const int n = params.n, p = params.p;
  require(ds.Phi.rows() == n && ds.Phi.cols() == p && ds.y.size() == n &&
              ds.sigma0.size() == p && ds.beta0.size() == p && ds.graph.p == p,
          "dimension mismatch between dataset and parameters");
  require(params.b_p == ds.params.b_p, "b_p mismatch between dataset and parameters");

  const double kappa = params.kappa();
  const double sqk = std::sqrt(kappa);
  const double sqp = std::sqrt(static_cast<double>(p));
  const QuadratureRule quad = gauss_hermite(cfg.quad_order);
  const PosteriorEngine engine(prior);
  const double gamma = cfg.damping;

  SeInit init;
  Vec sigma(p);
  if (cfg.init == AmpInit::kPriorMean) {
    sigma.setConstant(prior.rho());
  } else {
    init.eta0 = cfg.oracle_eps;
    init.nu0 = std::sqrt(1.0 - cfg.oracle_eps * cfg.oracle_eps);
    Rng rng = make_rng(ds.seed, Stream::kInit);
    std::normal_distribution<double> zd(0.0, 1.0);
    for (int i = 0; i < p; ++i) sigma[i] = init.eta0 * ds.sigma0[i] + init.nu0 * zd(rng);
  }

  AmpResult res;
  res.damping = gamma;
  res.se_trace = se_run(prior, params.lambda, kappa, params.Delta, cfg.T + 1, quad, init);
  const SeTrace& tr = res.se_trace;

  std::function<Vec(const Vec&)> graph_op;
  Mat surrogate;
  if (cfg.matrix_mode == MatrixMode::kSbm) {
    CenteredAdjacency abar(ds.graph, params.b_p);
    graph_op = [abar, sqp](const Vec& v) { return Vec(abar.apply(v) / sqp); };
  } else {
    surrogate = gaussian_surrogate(ds.sigma0, params.lambda, ds.seed);
    graph_op = [&surrogate, sqp](const Vec& v) { return Vec(surrogate * v / sqp); };
  }

  const Vec y0 = ds.y / sqk;
  const Vec phi_beta0 = ds.Phi * ds.beta0;

  Vec beta = Vec::Zero(p);       // beta^t
  Vec beta_prev = Vec::Zero(p);  // beta^{t-1}
  Vec z_prev = Vec::Zero(n);     // z^{t-1}
  Vec f_prev = Vec::Zero(p);     // f_{t-1}(...)
  Vec u = Vec::Zero(p);          // S^T z^{t-1} + beta^{t-1}
  Vec fvec(p), dfdx(p), z(n), v(p), beta_next(p), sigma_next(p);

  auto check_finite = [](const Vec& x, int t, const char* name) {
    if (!x.allFinite())
      fail(std::string("non-finite ") + name + " iterate at iteration " + std::to_string(t));
  };

  auto evaluate_f = [&](int t) {
    const auto ch = tr.sigma_denoiser_channel(t);
    const bool exact = sigma_channel_kind(ch) == ChannelKind::kExact ||
                       beta_channel_kind(ch) == ChannelKind::kExact;
    for (int i = 0; i < p; ++i) {
      const auto m = engine.moments(sigma[i], u[i], ch);
      fvec[i] = std::clamp(m.mean_sigma, 0.0, 1.0);
      dfdx[i] = exact ? 0.0 : partials_from_moments(m, ch).df_dsigma_obs;
    }
  };

  auto record = [&](int t, double ons_sigma, double ons_beta) {
    AmpIterate it;
    it.t = t;
    it.overlap = fvec.dot(ds.sigma0) / p;
    it.mse_sigma = rank_one_mse(fvec, ds.sigma0);
    it.mse_beta = (beta - ds.beta0).squaredNorm() / p;
    it.pred_error = (ds.Phi * beta - phi_beta0).squaredNorm() / n;
    it.se_overlap_pred = tr.nu.at(t + 1) * tr.nu.at(t + 1);
    const double xi = tr.xi(t);
    it.se_mse_beta = params.Delta * xi;
    it.se_pred_error = params.Delta * xi / (1.0 + xi);
    it.onsager_sigma = ons_sigma;
    it.onsager_beta = ons_beta;
    res.diagnostics.push_back(it);
    if (cfg.record_history) {
      res.sigma_iter_history.push_back(sigma);
      res.sigma_hat_history.push_back(fvec);
    }
  };

  for (int t = 0; t < cfg.T; ++t) {
    // sigma_hat^t = f_t(sigma^t, S^T z^{t-1} + beta^{t-1})
    evaluate_f(t);
    const double b_t = dfdx.mean();
    sigma_next = graph_op(fvec) - b_t * f_prev;
    if (gamma < 1.0) sigma_next = gamma * sigma_next + (1.0 - gamma) * sigma;
    check_finite(sigma_next, t, "sigma");

    // z^t = y0 - S beta^t + (1/kappa) z^{t-1} (A zeta_{t-1})(u, sigma^t)
    double c_t = 0.0;
    if (t >= 1)
      c_t = onsager_average(OnsagerKind::kBetaDenoiser, u, sigma, tr.beta_denoiser_channel(t - 1),
                            engine);
    record(t, b_t, c_t);
    z = y0 - ds.Phi * beta / sqk + (c_t / kappa) * z_prev;
    if (gamma < 1.0) z = gamma * z + (1.0 - gamma) * z_prev;
    check_finite(z, t, "z");

    // beta^{t+1} = zeta_t(S^T z^t + beta^t, sigma^{t+1})
    v = ds.Phi.transpose() * z / sqk + beta;
    const auto chz = tr.beta_denoiser_channel(t);
    const double s_max = prior.s_max();
    for (int i = 0; i < p; ++i)
      beta_next[i] = std::clamp(engine.moments(sigma_next[i], v[i], chz).mean_b, -s_max, s_max);
    if (gamma < 1.0) beta_next = gamma * beta_next + (1.0 - gamma) * beta;
    check_finite(beta_next, t, "beta");

    f_prev = fvec;
    sigma = sigma_next;
    beta_prev = beta;
    beta = beta_next;
    z_prev = z;
    u = v;
  }
  evaluate_f(cfg.T);
  double c_T = onsager_average(OnsagerKind::kBetaDenoiser, u, sigma,
                               tr.beta_denoiser_channel(cfg.T - 1), engine);
  record(cfg.T, dfdx.mean(), c_T);

  res.sigma_iter = sigma;
  res.sigma_hat = fvec;
  res.beta_hat = beta;
  res.z = z_prev;
  return res;
}

}  // namespace reggraph

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "reggraph/error.hpp"
#include "reggraph/parallel.hpp"
#include "reggraph/rng.hpp"
#include "reggraph/synth.hpp"

namespace reggraph {

struct LapConfig {
  double lambda1 = 0.0;  ///< l1 weight
  double lambda2 = 0.0;  ///< Laplacian quadratic weight
  int max_iter = 5000;
  double tol = 1e-7;  ///< max-abs change between successive iterates
  bool normalize_laplacian = false;

  void validate(int n, int p) const {
    require(lambda1 >= 0.0 && lambda2 >= 0.0, "penalty weights must be nonnegative");
    require(tol > 0.0, "tol must be positive");
    require(max_iter >= 1, "max_iter must be >= 1");
    if (n < p && lambda1 == 0.0) fail("singular pure-ridge system: need lambda1 > 0 when n < p");
  }
};

/// Graph Laplacian L = D - A, or D~^{-1/2} (D - A) D~^{-1/2} with
/// D~ = max(D, 1) when normalized. Isolated vertices get zero rows.
class GraphLaplacian {
 public:
  GraphLaplacian(const Graph& g, bool normalize) : g_(&g), scale_(g.p, 1.0) {
    if (normalize)
      for (int i = 0; i < g.p; ++i) scale_[i] = 1.0 / std::sqrt(std::max(1.0, double(g.degree(i))));
  }

  Vec apply(const Vec& v) const {
    const Graph& g = *g_;
    Vec out(g.p);
    for (int i = 0; i < g.p; ++i) {
      double acc = 0.0;
      for (int k = g.offsets[i]; k < g.offsets[i + 1]; ++k) acc += scale_[g.neighbors[k]] * v[g.neighbors[k]];
      out[i] = scale_[i] * (g.degree(i) * scale_[i] * v[i] - acc);
    }
    return out;
  }

  double quadratic(const Vec& v) const { return v.dot(apply(v)); }

 private:
  const Graph* g_;
  std::vector<double> scale_;
};

struct LapFit {
  Vec beta;
  int iterations = 0;
  bool converged = false;
  double objective = 0.0;
  std::vector<double> objective_trace;
};

inline double soft_threshold(double x, double t) {
  return x > t ? x - t : (x < -t ? x + t : 0.0);
}

/// Minimizes (1/2)||y - Phi b||^2 + l1 ||b||_1 + (l2/2) b^T L b by monotone
/// FISTA with backtracking. `init` warm-starts the iteration.
inline LapFit lap_fit(const Mat& Phi, const Vec& y, const Graph& graph, const LapConfig& cfg,
                      const Vec* init = nullptr) {
  const int n = static_cast<int>(Phi.rows()), p = static_cast<int>(Phi.cols());
  require(y.size() == n && graph.p == p, "dimension mismatch");
  cfg.validate(n, p);
  const GraphLaplacian lap(graph, cfg.normalize_laplacian);

  auto smooth = [&](const Vec& b, Vec* grad) {
    const Vec r = Phi * b - y;
    const Vec lb = lap.apply(b);
    if (grad) *grad = Phi.transpose() * r + cfg.lambda2 * lb;
    return 0.5 * r.squaredNorm() + 0.5 * cfg.lambda2 * b.dot(lb);
  };
  auto objective = [&](const Vec& b) { return smooth(b, nullptr) + cfg.lambda1 * b.lpNorm<1>(); };

  // Lipschitz estimate from a short power iteration; backtracking covers the rest.
  double lip = 1.0;
  {
    Vec v = Vec::Ones(p) / std::sqrt(double(p));
    for (int k = 0; k < 30; ++k) {
      Vec w = Phi.transpose() * (Phi * v) + cfg.lambda2 * lap.apply(v);
      const double nw = w.norm();
      if (nw == 0.0) break;
      lip = nw;
      v = w / nw;
    }
    lip = std::max(lip, 1e-12);
  }

  LapFit fit;
  if (init) require(init->size() == p, "warm start has wrong length");
  Vec x = init ? *init : Vec::Zero(p);
  Vec x_prev = x, yk = x, grad(p), z(p);
  double fx = objective(x);
  fit.objective_trace.push_back(fx);
  double tk = 1.0;
  for (int it = 1; it <= cfg.max_iter; ++it) {
    const double fy = smooth(yk, &grad);
    while (true) {
      for (int i = 0; i < p; ++i) z[i] = soft_threshold(yk[i] - grad[i] / lip, cfg.lambda1 / lip);
      const Vec d = z - yk;
      if (smooth(z, nullptr) <= fy + grad.dot(d) + 0.5 * lip * d.squaredNorm() + 1e-12 * std::abs(fy))
        break;
      lip *= 2.0;
    }
    const double fz = objective(z);
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
    x_prev = x;
    // monotone step: keep the better of z and the previous iterate
    if (fz <= fx) {
      x = z;
      fx = fz;
    }
    yk = x + (tk / t_next) * (z - x) + ((tk - 1.0) / t_next) * (x - x_prev);
    tk = t_next;
    fit.objective_trace.push_back(fx);
    fit.iterations = it;
    if ((x - x_prev).lpNorm<Eigen::Infinity>() <= cfg.tol && (z - x).lpNorm<Eigen::Infinity>() <= cfg.tol) {
      fit.converged = true;
      break;
    }
  }
  fit.beta = x;
  fit.objective = fx;
  return fit;
}

inline LapFit lap_fit(const Dataset& ds, const LapConfig& cfg) {
  return lap_fit(ds.Phi, ds.y, ds.graph, cfg);
}

/// Value of the penalized objective at b.
inline double lap_objective(const Mat& Phi, const Vec& y, const Graph& graph, const LapConfig& cfg,
                            const Vec& b) {
  const GraphLaplacian lap(graph, cfg.normalize_laplacian);
  return 0.5 * (y - Phi * b).squaredNorm() + cfg.lambda1 * b.lpNorm<1>() +
         0.5 * cfg.lambda2 * lap.quadratic(b);
}

struct LapGrid {
  std::vector<double> lambda1;
  std::vector<double> lambda2;
  bool relative_lambda1 = false;  ///< lambda1 values are fractions of ||Phi^T y||_inf
};

/// Default grid: l1 as a fraction of the smallest weight that zeroes the fit.
inline LapGrid default_lap_grid() {
  return {{0.03, 0.1, 0.3, 0.6}, {0.0, 1.0, 5.0}, true};
}

struct LapTuneResult {
  LapConfig best;
  std::vector<LapConfig> configs;    ///< grid order: lambda1 outer, lambda2 inner
  std::vector<double> holdout_error;  ///< mean squared holdout residual
};

/// Seeded 80/20 row split; returns (train, holdout) row indices.
inline std::pair<std::vector<int>, std::vector<int>> holdout_split(int n, std::uint64_t seed) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng = make_rng(seed, Stream::kSplit);
  std::shuffle(idx.begin(), idx.end(), rng);
  const int n_hold = std::max(1, n / 5);
  std::vector<int> hold(idx.begin(), idx.begin() + n_hold), train(idx.begin() + n_hold, idx.end());
  std::sort(hold.begin(), hold.end());
  std::sort(train.begin(), train.end());
  return {train, hold};
}

/// Picks the grid point with the smallest holdout error; ties go to the
/// earliest point in grid order.
inline LapTuneResult lap_tune(const Dataset& ds, const LapGrid& grid, const LapConfig& base = {},
                              int threads = 1) {
  require(!grid.lambda1.empty() && !grid.lambda2.empty(), "tuning grid must be nonempty");
  const auto [train, hold] = holdout_split(static_cast<int>(ds.y.size()), ds.seed);
  const Mat phi_tr = ds.Phi(train, Eigen::all);
  const Vec y_tr = ds.y(train);
  const Mat phi_ho = ds.Phi(hold, Eigen::all);
  const Vec y_ho = ds.y(hold);
  const double l1_scale = grid.relative_lambda1 ? (phi_tr.transpose() * y_tr).lpNorm<Eigen::Infinity>() : 1.0;

  LapTuneResult res;
  for (double a : grid.lambda1)
    for (double b : grid.lambda2) {
      LapConfig c = base;
      c.lambda1 = a * l1_scale;
      c.lambda2 = b;
      res.configs.push_back(c);
    }
  res.holdout_error.assign(res.configs.size(), 0.0);
  // One warm-started path over lambda1 (largest first) per lambda2 value.
  const std::size_t n1 = grid.lambda1.size(), n2 = grid.lambda2.size();
  std::vector<std::size_t> order1(n1);
  std::iota(order1.begin(), order1.end(), 0);
  std::stable_sort(order1.begin(), order1.end(),
                   [&](std::size_t a, std::size_t b) { return grid.lambda1[a] > grid.lambda1[b]; });
  parallel_for(n2, threads, [&](std::size_t j) {
    Vec warm = Vec::Zero(ds.Phi.cols());
    for (std::size_t i : order1) {
      const std::size_t k = i * n2 + j;
      warm = lap_fit(phi_tr, y_tr, ds.graph, res.configs[k], &warm).beta;
      res.holdout_error[k] = (y_ho - phi_ho * warm).squaredNorm() / static_cast<double>(hold.size());
    }
  });
  std::size_t best = 0;
  for (std::size_t k = 1; k < res.configs.size(); ++k)
    if (res.holdout_error[k] < res.holdout_error[best]) best = k;
  res.best = res.configs[best];
  return res;
}

}  // namespace reggraph

#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "reggraph/amp.hpp"
#include "reggraph/inference.hpp"

using namespace reggraph;

namespace {

// First grid point s = k * step with FDP_hat(s) >= alpha, by direct counting.
double brute_threshold(const Vec& pv, double rho, double alpha, double step) {
  std::vector<double> q(pv.data(), pv.data() + pv.size());
  std::sort(q.begin(), q.end());
  const double C = pv.size() * (1 - rho);
  std::size_t cnt = 0;
  const long steps = std::lround(1.0 / step);
  for (long k = 0; k <= steps; ++k) {
    const double s = k * step;
    while (cnt < q.size() && q[cnt] <= s) ++cnt;
    if (C * s / std::max<double>(1.0, cnt) >= alpha) return s;
  }
  return INFINITY;
}

Vec mixed_pvalues(int m, double frac_signal, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vec pv(m);
  for (int i = 0; i < m; ++i) pv[i] = u(rng) < frac_signal ? 1e-4 * u(rng) : u(rng);
  return pv;
}

}  // namespace

TEST(Normal, CdfValues) {
  EXPECT_EQ(normal_cdf(0.0), 0.5);
  EXPECT_NEAR(normal_cdf(1.959963984540054), 0.975, 1e-12);
  EXPECT_NEAR(normal_cdf(-3.0), 0.0013498980316300946, 1e-15);
  EXPECT_NEAR(normal_sf(8.0), 6.22096057427178e-16, 1e-27);
}

TEST(Normal, QuantileValues) {
  EXPECT_NEAR(normal_quantile(0.975), 1.959964, 1e-6);
  EXPECT_NEAR(normal_quantile(0.5), 0.0, 1e-15);
  EXPECT_NEAR(normal_quantile(0.0013498980316300946), -3.0, 1e-9);
  EXPECT_THROW(normal_quantile(0.0), Error);
  EXPECT_THROW(normal_quantile(1.0), Error);
  EXPECT_THROW(normal_quantile(std::nan("")), Error);
}

TEST(Normal, QuantileRoundTrip) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 1000; ++k) {
    const double q = u(rng);
    if (q == 0.0) continue;
    EXPECT_NEAR(normal_cdf(normal_quantile(q)), q, 1e-9 * q);
  }
  for (double q : {1e-300, 1e-100, 1e-20, 1e-8, 0.02425, 0.97575, 1 - 1e-10}) {
    const double x = normal_quantile(q);
    const double back = q < 0.5 ? normal_cdf(x) : 1.0 - normal_sf(x);
    EXPECT_NEAR(back / q, 1.0, 1e-9) << q;
  }
}

TEST(Metrics, MseSigma) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int p = 100;
  Vec s0(p), sh(p);
  for (int i = 0; i < p; ++i) {
    s0[i] = u(rng) < 0.6;
    sh[i] = u(rng);
  }
  EXPECT_NEAR(mse_sigma(s0, s0), 0.0, 1e-15);
  EXPECT_NEAR(mse_sigma(Vec::Zero(p), s0), std::pow(s0.squaredNorm() / p, 2), 1e-15);
  const double dense = (sh * sh.transpose() - s0 * s0.transpose()).squaredNorm() / (p * p);
  EXPECT_NEAR(mse_sigma(sh, s0), dense, 1e-10);
  EXPECT_THROW(mse_sigma(Vec(3), Vec(4)), Error);
}

TEST(Metrics, MseBeta) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  const int n = 60, p = 40;
  Mat phi(n, p);
  Vec b0(p), bh(p);
  for (int j = 0; j < p; ++j) {
    b0[j] = g(rng);
    bh[j] = g(rng);
    for (int i = 0; i < n; ++i) phi(i, j) = g(rng) / std::sqrt(double(p));
  }
  EXPECT_EQ(mse_beta(phi, b0, b0), 0.0);
  Vec e1 = b0;
  e1[0] += 1.0;
  EXPECT_NEAR(mse_beta(phi, e1, b0), phi.col(0).squaredNorm() / n, 1e-14);
  double naive = 0;
  for (int i = 0; i < n; ++i) {
    double r = 0;
    for (int j = 0; j < p; ++j) r += phi(i, j) * (bh[j] - b0[j]);
    naive += r * r;
  }
  EXPECT_NEAR(mse_beta(phi, bh, b0), naive / n, 1e-12);
}

TEST(PValues, Values) {
  Vec x(4);
  x << 0.0, 1.959963984540054 * 0.3, -1.959963984540054 * 0.3, 100.0;
  const Vec pv = pvalues(x, 0.3);
  EXPECT_EQ(pv[0], 1.0);
  EXPECT_NEAR(pv[1], 0.05, 1e-6);
  EXPECT_NEAR(pv[2], 0.05, 1e-6);
  EXPECT_GE(pv[3], 0.0);
  EXPECT_THROW(pvalues(x, 0.0), Error);
  EXPECT_THROW(pvalues(x, -1.0), Error);
  EXPECT_THROW(pvalues(x, INFINITY), Error);
}

TEST(PValues, NullUniformityUnderAmp) {
  // p-value of one null coordinate per replicate, weak graph signal, 20
  // replicates; two-sided KS at level 0.01 (exact critical value for n = 20)
  const PriorSpec prior = PriorSpec::spike_slab(0.07, {-1.0, 1.0});
  ModelParams mp;
  mp.n = mp.p = 1000;
  mp.lambda = 0.5;
  mp.Delta = 1.0;
  mp.b_p = 50.0;
  mp.prior = prior;
  std::vector<double> pv0;
  for (int r = 0; r < 20; ++r) {
    const Dataset ds = generate(mp, replicate_seed(3, r));
    int i0 = 0;
    while (ds.sigma0[i0] != 0.0) ++i0;
    const AmpResult res = amp_run(ds, prior, mp, AmpConfig{});
    pv0.push_back(pvalues(res.sigma_iter, res.se_trace.nu.back())[i0]);
  }
  std::sort(pv0.begin(), pv0.end());
  const double m = pv0.size();
  double ks = 0;
  for (std::size_t i = 0; i < pv0.size(); ++i) ks = std::max({ks, (i + 1) / m - pv0[i], pv0[i] - i / m});
  EXPECT_LT(ks, 0.35241) << "KS " << ks;
}

TEST(Discover, AllOnes) {
  const Vec pv = Vec::Ones(10);
  const auto d = discover(pv, 0.5, 0.1);
  EXPECT_TRUE(d.rejected.empty());
  EXPECT_NEAR(d.s_star, 0.1 / 5.0, 1e-15);
}

TEST(Discover, FourPointToy) {
  Vec pv(4);
  pv << 0.001, 0.002, 0.5, 0.9;
  const auto d = discover(pv, 0.5, 0.2);
  const double brute = brute_threshold(pv, 0.5, 0.2, 1e-6);
  EXPECT_NEAR(d.s_star, brute, 1e-6);
  EXPECT_LE(d.s_star, brute);
  EXPECT_EQ(d.rejected, (std::vector<int>{0, 1}));
}

TEST(Discover, MatchesBruteScan) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 40; ++k) {
    const Vec pv = mixed_pvalues(25, 0.3, rng);
    const double rho = 0.1 + 0.5 * u(rng), alpha = 0.02 + 0.3 * u(rng);
    const auto d = discover(pv, rho, alpha);
    const double brute = brute_threshold(pv, rho, alpha, 1e-6);
    if (std::isinf(brute)) {
      EXPECT_TRUE(std::isinf(d.s_star));
      continue;
    }
    EXPECT_LE(d.s_star, brute + 1e-15);
    EXPECT_GE(d.s_star, brute - 1e-6);
    EXPECT_GE(fdp_hat(pv, rho, d.s_star), alpha * (1 - 1e-12));
    for (int i = 0; i < pv.size(); ++i)
      EXPECT_EQ(std::count(d.rejected.begin(), d.rejected.end(), i) == 1, pv[i] < d.s_star);
  }
}

TEST(Discover, NestedInAlpha) {
  std::mt19937_64 rng(9);
  for (auto rule : {ThresholdRule::kInfCrossing, ThresholdRule::kStepUp}) {
    for (int k = 0; k < 20; ++k) {
      const Vec pv = mixed_pvalues(200, 0.1, rng);
      std::vector<int> prev;
      for (double a : {0.01, 0.05, 0.1, 0.2, 0.4, 0.8}) {
        const auto d = discover(pv, 0.1, a, nullptr, rule);
        EXPECT_TRUE(std::includes(d.rejected.begin(), d.rejected.end(), prev.begin(), prev.end()));
        prev = d.rejected;
      }
    }
  }
}

TEST(Discover, StepUpIsBenjaminiHochberg) {
  Vec pv(6);
  pv << 0.01, 0.04, 0.03, 0.2, 0.5, 0.9;
  // C = 6 * 0.5 = 3: largest k with p_(k) <= 0.1 k / 3 is k = 3 (0.04 <= 0.1)
  const auto d = discover(pv, 0.5, 0.1, nullptr, ThresholdRule::kStepUp);
  EXPECT_EQ(d.rejected, (std::vector<int>{0, 1, 2}));
  EXPECT_EQ(d.s_star, 0.04);
  const auto tight = discover(pv, 0.5, 0.03, nullptr, ThresholdRule::kStepUp);
  EXPECT_EQ(tight.rejected, std::vector<int>{0});
  const auto none = discover(Vec::Constant(3, 0.9), 0.5, 0.1, nullptr, ThresholdRule::kStepUp);
  EXPECT_TRUE(none.rejected.empty());
}

TEST(Discover, TruthMetrics) {
  Vec pv(5), truth(5);
  pv << 1e-6, 2e-6, 3e-6, 0.6, 0.9;
  truth << 1, 0, 1, 1, 0;
  const auto d = discover(pv, 0.4, 0.3, &truth);
  ASSERT_EQ(d.rejected.size(), 3u);
  EXPECT_NEAR(*d.empirical_fdp, 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(*d.empirical_tdp, 2.0 / 3.0, 1e-15);
  const auto none = discover(Vec::Ones(5), 0.4, 0.1, &truth);
  EXPECT_EQ(*none.empirical_fdp, 0.0);
  EXPECT_EQ(*none.empirical_tdp, 0.0);
  EXPECT_THROW(discover(pv, 0.4, 0.0), Error);
  EXPECT_THROW(discover(pv, 0.4, 1.0), Error);
}

TEST(Credible, WidthsAndCoverage) {
  Vec x(4), truth(4);
  x << 0.0, 0.5, 1.0, 2.0;
  truth << 0, 1, 1, 0;
  const auto zero = credible_intervals(x, 0.5, 0.3, 1.0);
  EXPECT_TRUE(zero.lower == zero.upper);
  EXPECT_NEAR(zero.lower[2], 2.0, 1e-15);
  const auto ci = credible_intervals(x, 0.5, 0.3, 0.05, &truth);
  for (int i = 0; i < 4; ++i) {
    EXPECT_NEAR(0.5 * (ci.upper[i] - ci.lower[i]), 1.959964 * 0.3 / 0.5, 1e-6);
    EXPECT_LE(ci.lower[i], ci.upper[i]);
  }
  // half width 1.176: intervals [-1.18,1.18], [-0.18,2.18], [0.82,3.18], [2.82,5.18]
  EXPECT_NEAR(*ci.empirical_coverage, 0.75, 1e-15);
  EXPECT_THROW(credible_intervals(x, 0.0, 0.3, 0.1), Error);
  EXPECT_THROW(credible_intervals(x, 0.5, 0.3, 0.0), Error);
}

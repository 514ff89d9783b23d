// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance [--expect-fail N]... [--threads K]
//
// Exit status is 0 when the set of failing criteria equals the expected-fail
// set exactly, 1 otherwise.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "reggraph/reggraph.hpp"

using namespace reggraph;

namespace {

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;
  void check(bool ok, const std::string& what) {
    if (!ok) pass = false;
    notes.push_back(std::string(ok ? "ok   " : "MISS ") + what);
  }
  void info(const std::string& what) { notes.push_back("info " + what); }
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

const PriorSpec kPm1 = PriorSpec::spike_slab(0.7, {-1.0, 1.0});
const PriorSpec kFive = PriorSpec::spike_slab(0.4, {-2.0, -1.0, 0.0, 1.0, 2.0});
const PriorSpec kSparse = PriorSpec::spike_slab(0.07, {-1.0, 1.0});

ModelParams model(int n, int p, double Delta, double lambda, double b_p, const PriorSpec& prior) {
  ModelParams mp;
  mp.n = n;
  mp.p = p;
  mp.Delta = Delta;
  mp.lambda = lambda;
  mp.b_p = b_p;
  mp.prior = prior;
  return mp;
}

struct MeanRun {
  double overlap = 0, pred = 0, se_overlap = 0, se_pred = 0;
};

MeanRun mean_amp(const ModelParams& mp, int seeds, int threads) {
  std::vector<AmpIterate> last(seeds);
  parallel_for(seeds, threads, [&](std::size_t r) {
    const Dataset ds = generate(mp, replicate_seed(1, r));
    last[r] = amp_run(ds, mp.prior, mp, AmpConfig{}).diagnostics.back();
  });
  MeanRun m;
  for (const auto& it : last) {
    m.overlap += it.overlap / seeds;
    m.pred += it.pred_error / seeds;
  }
  m.se_overlap = last[0].se_overlap_pred;
  m.se_pred = last[0].se_pred_error;
  return m;
}

// 1. empirical AMP against state evolution
Outcome state_evolution_agreement(int threads) {
  Outcome o;
  const QuadratureRule quad = gauss_hermite(kDefaultQuadOrder);
  for (double Delta : {0.5, 1.0, 2.0}) {
    const auto fp = fixed_point(kPm1, 3.0, 1.0, Delta, quad);
    const double pred = predicted_errors(fp, kPm1, 3.0, Delta).mse_beta;
    const MeanRun m = mean_amp(model(2000, 2000, Delta, 3.0, kDenseBaseRate, kPm1), 20, threads);
    o.check(std::abs(m.pred - pred) <= 0.1 * pred,
            fmt("Delta=%.1f b_p=%g  pred error %.5f vs %.5f (rel %.3f, tol 0.10)", Delta, kDenseBaseRate,
                m.pred, pred, std::abs(m.pred - pred) / pred));
    o.check(std::abs(m.overlap - m.se_overlap) <= 0.02,
            fmt("Delta=%.1f b_p=%g  overlap %.5f vs %.5f (tol 0.02)", Delta, kDenseBaseRate, m.overlap,
                m.se_overlap));
    const MeanRun sparse = mean_amp(model(2000, 2000, Delta, 3.0, 0.7, kPm1), 20, threads);
    o.info(fmt("Delta=%.1f b_p=0.7  pred error %.5f vs %.5f, overlap %.5f vs %.5f", Delta, sparse.pred,
               pred, sparse.overlap, sparse.se_overlap));
  }
  return o;
}

// 2. AMP fixed point against the potential minimizer
Outcome fixed_point_coincidence() {
  Outcome o;
  const QuadratureRule quad = gauss_hermite(kDefaultQuadOrder);
  for (double Delta : {0.5, 1.0, 2.0}) {
    const auto r = optimality_check(kPm1, 3.0, 1.0, Delta, quad);
    const double dm = std::abs(r.amp_fixed_point.mu_star - r.rs.mu_bar);
    const double dx = std::abs(r.amp_fixed_point.xi_star - r.rs.xi_bar);
    o.check(dm <= 1e-3 && dx <= 1e-3, fmt("Delta=%.1f  |dmu| %.2e  |dxi| %.2e (tol 1e-3)", Delta, dm, dx));
    const auto e = predicted_errors(r.amp_fixed_point, kPm1, 3.0, Delta);
    const double de = std::max(std::abs(r.mmse_pred - e.mse_sigma), std::abs(r.y_mmse_pred - e.mse_beta));
    o.check(de <= 1e-6, fmt("Delta=%.1f  predicted MSE mismatch %.2e (tol 1e-6)", Delta, de));
  }
  return o;
}

// 3. mutual information ordering
Outcome mi_monotonicity() {
  Outcome o;
  const QuadratureRule quad = gauss_hermite(kDefaultQuadOrder);
  const std::vector<double> lambdas = {0, 1, 2, 3}, deltas = {0.5, 1, 2, 4};
  std::map<std::pair<double, double>, double> mi;
  for (double l : lambdas)
    for (double d : deltas) mi[{l, d}] = minimize(kFive, l, 1.5, d, quad).value;
  for (double l : lambdas) {
    bool dec = true;
    std::string row;
    for (std::size_t k = 0; k < deltas.size(); ++k) {
      row += fmt(" %.5f", mi[{l, deltas[k]}]);
      if (k && !(mi[{l, deltas[k]}] < mi[{l, deltas[k - 1]}])) dec = false;
    }
    o.check(dec, fmt("lambda=%g  decreasing in Delta:%s", l, row.c_str()));
  }
  for (double d : deltas) {
    bool inc = true;
    for (std::size_t k = 1; k < lambdas.size(); ++k)
      if (!(mi[{lambdas[k], d}] > mi[{lambdas[k - 1], d}])) inc = false;
    o.check(inc, fmt("Delta=%g  increasing in lambda", d));
  }
  return o;
}

struct InferenceRuns {
  double fdr = 0, coverage = 0, tdr = 0;
};

InferenceRuns inference_runs(const ModelParams& mp, int reps, int threads) {
  std::vector<InferenceRuns> per(reps);
  parallel_for(reps, threads, [&](std::size_t r) {
    const Dataset ds = generate(mp, replicate_seed(7, r));
    AmpConfig cfg;
    const AmpResult res = amp_run(ds, mp.prior, mp, cfg);
    const double nu = res.se_trace.nu.at(cfg.T), eta = res.se_trace.eta.at(cfg.T);
    const auto d = discover(pvalues(res.sigma_iter, nu), mp.prior.rho(), 0.1, &ds.sigma0);
    const auto ci = credible_intervals(res.sigma_iter, eta, nu, 0.1, &ds.sigma0);
    per[r] = {*d.empirical_fdp, *ci.empirical_coverage, *d.empirical_tdp};
  });
  InferenceRuns m;
  for (const auto& x : per) {
    m.fdr += x.fdr / reps;
    m.coverage += x.coverage / reps;
    m.tdr += x.tdr / reps;
  }
  return m;
}

// 6. TDR spot check in the sparse-graph setting
Outcome tdr_spot_check(int threads) {
  Outcome o;
  const double lo5 = 0.705, hi5 = 0.905, c10 = 0.856;
  const auto r5 = inference_runs(model(3000, 3000, 0.5, 5.0, 0.7, kSparse), 20, threads);
  o.check(r5.tdr >= lo5 && r5.tdr <= hi5, fmt("lambda=5  TDR %.4f, target [%.3f, %.3f]", r5.tdr, lo5, hi5));
  const auto r10 = inference_runs(model(3000, 3000, 0.5, 10.0, 0.7, kSparse), 20, threads);
  o.check(std::abs(r10.tdr - c10) <= 0.1, fmt("lambda=10  TDR %.4f, target %.3f +- 0.10", r10.tdr, c10));
  o.info(fmt("FDR at these settings: %.4f (lambda=5), %.4f (lambda=10)", r5.fdr, r10.fdr));
  return o;
}

// 7. AMP against the tuned Laplacian baseline
Outcome baseline_ordering(int threads) {
  Outcome o;
  for (const char* name : {"figure2a", "figure2b", "figure3"}) {
    ExperimentSpec s = builtin_spec(name);
    s.pipelines = {Pipeline::kBaseline};
    s.n = s.p = 500;
    s.replicates = 3;
    const auto res = run_pipelines(s, threads);
    const Table& t = res.tables.at(Pipeline::kBaseline);
    for (double lambda : s.lambdas) {
      int worse = 0, points = 0;
      double max_ratio = 0;
      for (const auto* row : t.select("mean")) {
        if (t.number(*row, "lambda") != lambda) continue;
        const double amp = t.number(*row, "amp_pred_error"), lap = t.number(*row, "lap_pred_error");
        ++points;
        if (!(amp <= lap)) ++worse;
        max_ratio = std::max(max_ratio, amp / lap);
      }
      o.check(worse == 0 && points == 20 && res.failures.empty(),
              fmt("%s design=%s lambda=%g  AMP worse at %d of %d points, max AMP/Laplacian %.3f", name,
                  to_string(s.design).c_str(), lambda, worse, points, max_ratio));
    }
  }
  return o;
}

// 8. always-on property checks
Outcome property_suite(int threads) {
  Outcome o;
  const QuadratureRule quad = gauss_hermite(kDefaultQuadOrder);
  {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0;
    for (int k = 0; k < 200; ++k) {
      const ScalarChannelParams ch{0.2 + 1.8 * u(rng), 0.7 + 1.3 * u(rng), 0.7 + 1.3 * u(rng)};
      const double x = -2.0 + 5.0 * u(rng), y = -3.0 + 6.0 * u(rng), h = 1e-5;
      const auto d = denoiser_partials(x, y, ch, kPm1);
      const PosteriorEngine e(kPm1);
      auto fs = [&](double a, double b) { return e.moments(a, b, ch).mean_sigma; };
      auto fb = [&](double a, double b) { return e.moments(a, b, ch).mean_b; };
      auto rel = [](double fd, double a) { return std::abs(fd - a) / std::max(std::abs(a), 1e-3); };
      const double fx = (fs(x + h, y) - fs(x - h, y)) / (2 * h);
      const double fy = (fs(x, y + h) - fs(x, y - h)) / (2 * h);
      const double zy = (fb(x, y + h) - fb(x, y - h)) / (2 * h);
      const double zx = (fb(x + h, y) - fb(x - h, y)) / (2 * h);
      worst = std::max({worst, rel(fx, d.df_dsigma_obs), rel(fy, d.df_dbeta_obs), rel(zy, d.dzeta_dbeta_obs),
                        rel(zx, d.dzeta_dsigma_obs)});
    }
    o.check(worst <= 1e-6, fmt("denoiser partials vs finite differences: worst rel %.2e (tol 1e-6)", worst));
  }
  {
    bool mono = true;
    for (int i = 0; i < 12; ++i)
      for (int j = 0; j < 12; ++j) {
        const double mu = 0.4 * i, xi = 0.4 * j;
        const double a = mmse1(mu, xi, kFive, 1.0, 1.5, quad), b = mmse2(mu, xi, kFive, 1.0, 1.5, quad);
        if (mmse1(mu + 0.4, xi, kFive, 1.0, 1.5, quad) > a + 1e-12) mono = false;
        if (mmse1(mu, xi + 0.4, kFive, 1.0, 1.5, quad) < a - 1e-12) mono = false;
        if (mmse2(mu + 0.4, xi, kFive, 1.0, 1.5, quad) > b + 1e-12) mono = false;
        if (mmse2(mu, xi + 0.4, kFive, 1.0, 1.5, quad) < b - 1e-12) mono = false;
      }
    o.check(mono, "mmse monotone on a 12x12 grid");
  }
  {
    bool mono = true;
    for (const PriorSpec* p : {&kPm1, &kFive})
      for (double Delta : {0.2, 0.5, 1.0, 2.0, 4.0}) {
        const auto tr = se_run(*p, 3.0, 1.0, Delta, 40, quad);
        for (int t = 0; t < 40; ++t)
          if (tr.mu(t + 1) < tr.mu(t) - 1e-12 || tr.xi(t + 1) > tr.xi(t) + 1e-12) mono = false;
      }
    o.check(mono, "state evolution trajectories monotone");
  }
  {
    std::mt19937_64 rng(19);
    std::normal_distribution<double> g;
    double worst = 0;
    for (int k = 0; k < 10; ++k) {
      Vec u(300), v(300);
      for (int i = 0; i < 300; ++i) {
        u[i] = g(rng);
        v[i] = g(rng);
      }
      const double dense = (u * u.transpose() - v * v.transpose()).squaredNorm() / (300.0 * 300.0);
      worst = std::max(worst, std::abs(rank_one_mse(u, v) - dense));
    }
    o.check(worst <= 1e-10, fmt("rank-one MSE identity vs dense: %.2e (tol 1e-10)", worst));
  }
  {
    const QuadratureRule q2 = gauss_hermite(2 * kDefaultQuadOrder);
    double worst = 0;
    for (double Delta : {0.5, 1.0, 2.0}) {
      const auto a = fixed_point(kPm1, 3.0, 1.0, Delta, quad), b = fixed_point(kPm1, 3.0, 1.0, Delta, q2);
      worst = std::max({worst, std::abs(a.mu_star - b.mu_star), std::abs(a.xi_star - b.xi_star)});
    }
    for (double Delta : {0.5, 2.0}) {
      const auto a = fixed_point(kFive, 2.0, 1.5, Delta, quad), b = fixed_point(kFive, 2.0, 1.5, Delta, q2);
      worst = std::max({worst, std::abs(a.mu_star - b.mu_star), std::abs(a.xi_star - b.xi_star)});
    }
    o.check(worst <= 1e-7, fmt("quadrature doubling: fixed points move %.2e (tol 1e-7)", worst));
  }
  {
    ExperimentSpec s = builtin_spec("universality-check");
    s.replicates = 5;
    const auto res = run_pipelines(s, threads);
    const Table& t = res.tables.at(Pipeline::kUniversality);
    const auto* mean = t.select("mean").at(0);
    const double gap = t.number(*mean, "abs_gap");
    o.check(gap <= 0.03, fmt("SBM vs Gaussian surrogate overlap gap at p=2000: %.4f (tol 0.03; %.4f vs %.4f)", gap,
                             t.number(*mean, "overlap_sbm"), t.number(*mean, "overlap_surrogate")));
  }
  {
    ExperimentSpec s;
    s.name = "repro";
    s.pipelines = {Pipeline::kAmp, Pipeline::kSe, Pipeline::kRs, Pipeline::kFdr,
                   Pipeline::kCoverage, Pipeline::kBaseline, Pipeline::kUniversality};
    s.n = s.p = 300;
    s.replicates = 2;
    s.deltas = {0.5, 2.0};
    auto dump = [&](int th) {
      std::ostringstream os;
      for (const auto& [p, t] : run_pipelines(s, th).tables) t.write_csv(os);
      return os.str();
    };
    const std::string a = dump(1), b = dump(1), c = dump(std::max(2, threads));
    o.check(a == b && a == c, "seeded runs bit-identical across repeats and thread counts");
  }
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> expect_fail;
  int threads = 1;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--expect-fail" && i + 1 < argc) expect_fail.insert(std::atoi(argv[++i]));
    else if (a == "--threads" && i + 1 < argc) threads = std::max(1, std::atoi(argv[++i]));
    else {
      std::fprintf(stderr, "usage: acceptance [--expect-fail N]... [--threads K]\n");
      return 2;
    }
  }

  std::map<int, InferenceRuns> calib;
  auto calibration = [&]() -> const InferenceRuns& {
    if (!calib.count(0))
      calib[0] = inference_runs(model(3000, 3000, 1.0, 5.0, kCalibrationBaseRate, kSparse), 20, threads);
    return calib[0];
  };

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"state evolution agreement", [&] { return state_evolution_agreement(threads); }},
      {"fixed point / potential minimizer coincidence", fixed_point_coincidence},
      {"mutual information monotonicity", mi_monotonicity},
      {"FDR calibration",
       [&] {
         Outcome o;
         const double f = calibration().fdr;
         o.check(std::abs(f - 0.1) <= 0.05,
                 fmt("mean FDP %.4f, target 0.1 +- 0.05 (b_p=%g)", f, kCalibrationBaseRate));
         const auto sparse = inference_runs(model(3000, 3000, 1.0, 5.0, kDenseBaseRate, kSparse), 20, threads);
         o.info(fmt("b_p=%g  mean FDP %.4f, coverage %.4f", kDenseBaseRate, sparse.fdr, sparse.coverage));
         return o;
       }},
      {"coverage calibration",
       [&] {
         Outcome o;
         const double c = calibration().coverage;
         o.check(std::abs(c - 0.9) <= 0.03,
                 fmt("mean coverage %.4f, target 0.9 +- 0.03 (b_p=%g)", c, kCalibrationBaseRate));
         return o;
       }},
      {"TDR spot check", [&] { return tdr_spot_check(threads); }},
      {"baseline ordering", [&] { return baseline_ordering(threads); }},
      {"property suite", [&] { return property_suite(threads); }},
  };

  std::set<int> failed;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o.check(false, std::string("error: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass) failed.insert(id);
    std::printf("%s criterion %d: %s (%.0f s)%s\n", o.pass ? "PASS" : "FAIL", id, criteria[k].first.c_str(), secs,
                !o.pass && expect_fail.count(id) ? " [expected failure]" : "");
    for (const auto& n : o.notes) std::printf("    %s\n", n.c_str());
    std::fflush(stdout);
  }
  std::printf("summary: %zu of %zu criteria passed\n", criteria.size() - failed.size(), criteria.size());
  for (int id : expect_fail)
    if (!failed.count(id)) std::printf("note: criterion %d was expected to fail but passed\n", id);
  return failed == expect_fail ? 0 : 1;
}

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "reggraph/amp.hpp"
#include "reggraph/error.hpp"
#include "reggraph/inference.hpp"
#include "reggraph/laplacian.hpp"
#include "reggraph/parallel.hpp"
#include "reggraph/rng.hpp"
#include "reggraph/rs_potential.hpp"
#include "reggraph/state_evolution.hpp"
#include "reggraph/synth.hpp"
#include "reggraph/table.hpp"

#ifndef REGGRAPH_VERSION
#define REGGRAPH_VERSION "0.1.0"
#endif

namespace reggraph {

inline constexpr const char* kVersion = REGGRAPH_VERSION;

enum class Pipeline { kAmp, kSe, kRs, kFdr, kCoverage, kBaseline, kUniversality };

inline const std::vector<std::pair<Pipeline, std::string>>& pipeline_names() {
  static const std::vector<std::pair<Pipeline, std::string>> names = {
      {Pipeline::kAmp, "amp"},          {Pipeline::kSe, "se"},
      {Pipeline::kRs, "rs"},            {Pipeline::kFdr, "fdr"},
      {Pipeline::kCoverage, "coverage"}, {Pipeline::kBaseline, "baseline"},
      {Pipeline::kUniversality, "universality"}};
  return names;
}

inline std::string to_string(Pipeline p) {
  for (const auto& [k, v] : pipeline_names())
    if (k == p) return v;
  return "?";
}

inline std::optional<Pipeline> parse_pipeline(const std::string& s) {
  for (const auto& [k, v] : pipeline_names())
    if (v == s) return k;
  return std::nullopt;
}

/// Experiment definition. Grid points are the cartesian product
/// deltas x lambdas; replicate r of every grid point uses the dataset seed
/// replicate_seed(seed, r).
struct ExperimentSpec {
  std::string name = "custom";
  std::set<Pipeline> pipelines;
  int n = 2000;
  int p = 2000;
  double b_p = 0.7;
  DesignKind design = DesignKind::kGaussian;
  double rho = 0.7;
  std::vector<Atom> atoms0 = {{0.0, 1.0}};
  std::vector<Atom> atoms1 = {{-1.0, 0.5}, {1.0, 0.5}};
  std::vector<double> deltas = {1.0};
  std::vector<double> lambdas = {3.0};
  std::vector<double> alphas = {0.1};
  int replicates = 20;
  std::uint64_t seed = 1;
  AmpConfig amp;
  LapGrid lap_grid = default_lap_grid();

  PriorSpec prior() const { return PriorSpec(rho, atoms0, atoms1); }
  double kappa() const { return static_cast<double>(n) / static_cast<double>(p); }

  ModelParams model(double Delta, double lambda) const {
    ModelParams m;
    m.n = n;
    m.p = p;
    m.Delta = Delta;
    m.b_p = b_p;
    m.lambda = lambda;
    m.prior = prior();
    m.design = design;
    return m;
  }

  /// Every problem with this experiment spec, not just the first.
  std::vector<std::string> problems() const {
    std::vector<std::string> out;
    if (name.empty()) out.push_back("name: must be nonempty");
    if (pipelines.empty()) out.push_back("pipelines: at least one pipeline required");
    if (n < 1) out.push_back("n: must be >= 1");
    if (p < 2) out.push_back("p: must be >= 2");
    if (!(b_p > 0.0) || (p >= 2 && b_p >= p)) out.push_back("b_p: must lie in (0, p)");
    if (replicates < 1) out.push_back("replicates: must be >= 1");
    if (deltas.empty()) out.push_back("delta: sweep grid is empty");
    for (double d : deltas)
      if (!(d > 0.0)) out.push_back("delta: values must be positive");
    if (lambdas.empty()) out.push_back("lambda: sweep grid is empty");
    for (double l : lambdas)
      if (!(l >= 0.0)) out.push_back("lambda: values must be nonnegative");
    if (alphas.empty()) out.push_back("alpha: grid is empty");
    for (double a : alphas)
      if (!(a > 0.0 && a < 1.0)) out.push_back("alpha: values must lie in (0,1)");
    try {
      (void)prior();
    } catch (const Error& e) {
      out.push_back(std::string("prior: ") + e.what());
    }
    try {
      amp.validate();
    } catch (const Error& e) {
      out.push_back(std::string("amp: ") + e.what());
    }
    if (amp.quad_order < kMinFunctionalQuadOrder) out.push_back("quad_order: must be >= 21");
    if (lap_grid.lambda1.empty() || lap_grid.lambda2.empty())
      out.push_back("baseline: lambda grids must be nonempty");
    if (p >= 2 && b_p > 0.0 && b_p < p)
      for (double l : lambdas)
        if (l >= 0.0 && snr_to_ap_unchecked(l, b_p, p) > p)
          out.push_back("lambda: " + format_double(l) + " needs a_p > p for this b_p");
    const bool needs_spike_slab = pipelines.count(Pipeline::kFdr) > 0;
    if (needs_spike_slab) {
      bool ok = false;
      try {
        ok = prior().slab_separation() > 0.0;
      } catch (const Error&) {
      }
      if (!ok) out.push_back("fdr: needs a spike-slab prior whose slab excludes 0");
    }
    return out;
  }

  void validate() const {
    const auto errs = problems();
    if (errs.empty()) return;
    std::string msg = "invalid experiment spec:";
    for (const auto& e : errs) msg += "\n  - " + e;
    fail(msg);
  }

 private:
  static double snr_to_ap_unchecked(double lambda, double b, double pp) {
    return b + std::sqrt(lambda * b * (1.0 - b / pp));
  }
};

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_number(const std::string& key, const std::string& s,
                           std::vector<std::string>& errs) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(trim(s), &pos);
    if (pos != trim(s).size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    errs.push_back(key + ": '" + s + "' is not a number");
    return std::nan("");
  }
}

/// "a, b, c" or "start:stop:count" (inclusive, equispaced).
inline std::vector<double> parse_grid(const std::string& key, const std::string& s,
                                      std::vector<std::string>& errs) {
  std::vector<double> out;
  const std::string t = trim(s);
  if (t.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(t);
    std::string item;
    while (std::getline(ss, item, ':')) parts.push_back(item);
    if (parts.size() != 3) {
      errs.push_back(key + ": range must be start:stop:count");
      return out;
    }
    const double a = parse_number(key, parts[0], errs), b = parse_number(key, parts[1], errs);
    const double c = parse_number(key, parts[2], errs);
    if (!(c >= 1.0) || c != std::floor(c)) {
      errs.push_back(key + ": range count must be a positive integer");
      return out;
    }
    const int cnt = static_cast<int>(c);
    for (int i = 0; i < cnt; ++i) out.push_back(cnt == 1 ? a : a + (b - a) * i / (cnt - 1));
    return out;
  }
  std::stringstream ss(t);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (trim(item).empty()) continue;
    out.push_back(parse_number(key, item, errs));
  }
  return out;
}

inline std::string grid_text(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + format_double(v[i]);
  return s;
}

}  // namespace detail

/// Canonical INI text of a spec; parse_spec_text(to_ini(s)) reproduces s.
inline std::string to_ini(const ExperimentSpec& s) {
  std::ostringstream os;
  std::string pipes;
  for (Pipeline p : s.pipelines) pipes += (pipes.empty() ? "" : ", ") + to_string(p);
  os << "[experiment]\n"
     << "name = " << s.name << "\n"
     << "pipelines = " << pipes << "\n"
     << "replicates = " << s.replicates << "\n"
     << "seed = " << s.seed << "\n"
     << "[model]\n"
     << "n = " << s.n << "\n"
     << "p = " << s.p << "\n"
     << "b_p = " << format_double(s.b_p) << "\n"
     << "design = " << to_string(s.design) << "\n"
     << "rho = " << format_double(s.rho) << "\n"
     << "atoms0 = " << PriorSpec::atoms_to_text(s.atoms0) << "\n"
     << "atoms1 = " << PriorSpec::atoms_to_text(s.atoms1) << "\n"
     << "[sweep]\n"
     << "delta = " << detail::grid_text(s.deltas) << "\n"
     << "lambda = " << detail::grid_text(s.lambdas) << "\n"
     << "alpha = " << detail::grid_text(s.alphas) << "\n"
     << "[amp]\n"
     << "T = " << s.amp.T << "\n"
     << "init = " << (s.amp.init == AmpInit::kPriorMean ? "prior-mean" : "oracle") << "\n"
     << "oracle_eps = " << format_double(s.amp.oracle_eps) << "\n"
     << "matrix_mode = " << to_string(s.amp.matrix_mode) << "\n"
     << "damping = " << format_double(s.amp.damping) << "\n"
     << "quad_order = " << s.amp.quad_order << "\n"
     << "[baseline]\n"
     << "lambda1 = " << detail::grid_text(s.lap_grid.lambda1) << "\n"
     << "lambda2 = " << detail::grid_text(s.lap_grid.lambda2) << "\n"
     << "relative_lambda1 = " << (s.lap_grid.relative_lambda1 ? "true" : "false") << "\n";
  return os.str();
}

/// Parses flat INI text. Unknown sections/keys and every malformed value
/// are collected and reported together.
inline ExperimentSpec parse_spec_text(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    fail(std::string("malformed experiment spec: ") + e.message() + " (line " +
         std::to_string(e.line()) + ")");
  }
  ExperimentSpec s;
  std::vector<std::string> errs;
  static const std::map<std::string, std::set<std::string>> known = {
      {"experiment", {"name", "pipelines", "replicates", "seed"}},
      {"model", {"n", "p", "b_p", "design", "rho", "atoms0", "atoms1"}},
      {"sweep", {"delta", "lambda", "alpha"}},
      {"amp", {"T", "init", "oracle_eps", "matrix_mode", "damping", "quad_order"}},
      {"baseline", {"lambda1", "lambda2", "relative_lambda1"}}};
  for (const auto& [sec, body] : tree) {
    auto it = known.find(sec);
    if (it == known.end()) {
      errs.push_back("unknown section [" + sec + "]");
      continue;
    }
    for (const auto& [key, val] : body)
      if (!it->second.count(key)) errs.push_back("unknown key " + sec + "." + key);
  }
  auto get = [&](const std::string& path) -> std::optional<std::string> {
    if (auto v = tree.get_optional<std::string>(path)) return detail::trim(*v);
    return std::nullopt;
  };
  auto get_int = [&](const std::string& path, int& dst) {
    if (auto v = get(path)) {
      const double d = detail::parse_number(path, *v, errs);
      if (std::isfinite(d) && d == std::floor(d)) dst = static_cast<int>(d);
      else if (std::isfinite(d)) errs.push_back(path + ": must be an integer");
    }
  };
  auto get_double = [&](const std::string& path, double& dst) {
    if (auto v = get(path)) dst = detail::parse_number(path, *v, errs);
  };

  if (auto v = get("experiment.name")) s.name = *v;
  if (auto v = get("experiment.pipelines")) {
    std::stringstream ss(*v);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = detail::trim(item);
      if (item.empty()) continue;
      if (auto p = parse_pipeline(item)) s.pipelines.insert(*p);
      else errs.push_back("experiment.pipelines: unknown pipeline '" + item + "'");
    }
  }
  get_int("experiment.replicates", s.replicates);
  if (auto v = get("experiment.seed")) {
    try {
      std::size_t pos = 0;
      s.seed = std::stoull(*v, &pos);
      if (pos != v->size()) throw std::invalid_argument(*v);
    } catch (const std::exception&) {
      errs.push_back("experiment.seed: '" + *v + "' is not an unsigned integer");
    }
  }
  get_int("model.n", s.n);
  get_int("model.p", s.p);
  get_double("model.b_p", s.b_p);
  if (auto v = get("model.design")) {
    try {
      s.design = parse_design(*v);
    } catch (const Error& e) {
      errs.push_back(std::string("model.design: ") + e.what());
    }
  }
  get_double("model.rho", s.rho);
  for (auto [key, dst] : {std::pair{"model.atoms0", &s.atoms0}, std::pair{"model.atoms1", &s.atoms1}}) {
    if (auto v = get(key)) {
      try {
        *dst = PriorSpec::parse_atoms(*v);
      } catch (const Error& e) {
        errs.push_back(std::string(key) + ": " + e.what());
      }
    }
  }
  if (auto v = get("sweep.delta")) s.deltas = detail::parse_grid("sweep.delta", *v, errs);
  if (auto v = get("sweep.lambda")) s.lambdas = detail::parse_grid("sweep.lambda", *v, errs);
  if (auto v = get("sweep.alpha")) s.alphas = detail::parse_grid("sweep.alpha", *v, errs);
  get_int("amp.T", s.amp.T);
  if (auto v = get("amp.init")) {
    if (*v == "prior-mean") s.amp.init = AmpInit::kPriorMean;
    else if (*v == "oracle") s.amp.init = AmpInit::kOracle;
    else errs.push_back("amp.init: expected prior-mean|oracle");
  }
  get_double("amp.oracle_eps", s.amp.oracle_eps);
  if (auto v = get("amp.matrix_mode")) {
    try {
      s.amp.matrix_mode = parse_matrix_mode(*v);
    } catch (const Error& e) {
      errs.push_back(std::string("amp.matrix_mode: ") + e.what());
    }
  }
  get_double("amp.damping", s.amp.damping);
  get_int("amp.quad_order", s.amp.quad_order);
  if (auto v = get("baseline.lambda1")) s.lap_grid.lambda1 = detail::parse_grid("baseline.lambda1", *v, errs);
  if (auto v = get("baseline.lambda2")) s.lap_grid.lambda2 = detail::parse_grid("baseline.lambda2", *v, errs);
  if (auto v = get("baseline.relative_lambda1")) {
    if (*v == "true") s.lap_grid.relative_lambda1 = true;
    else if (*v == "false") s.lap_grid.relative_lambda1 = false;
    else errs.push_back("baseline.relative_lambda1: expected true|false");
  }

  if (errs.empty()) {
    const auto more = s.problems();
    errs.insert(errs.end(), more.begin(), more.end());
  }
  if (!errs.empty()) {
    std::string msg = "invalid experiment spec:";
    for (const auto& e : errs) msg += "\n  - " + e;
    fail(msg);
  }
  return s;
}

inline ExperimentSpec parse_spec_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) fail("cannot open experiment spec " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_spec_text(ss.str());
}

/// Graph rate used by the built-ins that compare against large-system
/// predictions: mean degree well above log p, where state evolution holds.
inline constexpr double kDenseBaseRate = 50.0;

/// Graph rate for the FDR and coverage built-ins. A null vertex sees about
/// rho * b_p signal neighbours; p-value tails far out need that count large.
inline constexpr double kCalibrationBaseRate = 1000.0;

inline std::vector<std::string> builtin_names() {
  return {"figure1a", "figure1b", "figure2a", "figure2b", "figure3", "table1-amp",
          "fdr-calibration", "coverage-calibration", "universality-check"};
}

inline ExperimentSpec builtin_spec(const std::string& name) {
  ExperimentSpec s;
  s.name = name;
  auto linspace = [](double a, double b, int k) {
    std::vector<double> v;
    for (int i = 0; i < k; ++i) v.push_back(a + (b - a) * i / (k - 1));
    return v;
  };
  if (name == "figure1a" || name == "figure1b") {
    s.pipelines = {Pipeline::kRs};
    s.n = 3000;
    s.p = 2000;
    s.rho = 0.4;
    s.atoms1 = {{-2.0, 0.2}, {-1.0, 0.2}, {0.0, 0.2}, {1.0, 0.2}, {2.0, 0.2}};
    s.replicates = 1;
    if (name == "figure1a") {
      s.deltas = linspace(0.2, 4.0, 20);
      s.lambdas = {0.0, 1.0, 2.0, 3.0};
    } else {
      s.deltas = {0.5, 1.0, 2.0, 4.0};
      s.lambdas = linspace(0.0, 3.0, 13);
    }
  } else if (name == "figure2a" || name == "figure2b" || name == "figure3") {
    s.pipelines = {Pipeline::kAmp, Pipeline::kBaseline, Pipeline::kSe};
    s.deltas = linspace(0.2, 4.0, 20);
    s.lambdas = name == "figure2a" ? std::vector<double>{3.0}
                : name == "figure2b" ? std::vector<double>{5.0}
                                     : std::vector<double>{3.0, 5.0};
    if (name == "figure3") s.design = DesignKind::kBernoulli;
  } else if (name == "table1-amp") {
    s.pipelines = {Pipeline::kFdr};
    s.n = s.p = 3000;
    s.rho = 0.07;
    s.deltas = {0.5, 1.05, 1.79, 2.52, 3.26, 4.0};
    s.lambdas = {5.0, 10.0};
  } else if (name == "fdr-calibration" || name == "coverage-calibration") {
    s.pipelines = {name == "fdr-calibration" ? Pipeline::kFdr : Pipeline::kCoverage};
    s.n = s.p = 3000;
    s.b_p = kCalibrationBaseRate;
    s.rho = 0.07;
    s.deltas = {1.0};
    s.lambdas = {5.0};
    s.alphas = {0.05, 0.1, 0.2};
  } else if (name == "universality-check") {
    s.pipelines = {Pipeline::kUniversality};
    s.b_p = kDenseBaseRate;
    s.deltas = {1.0};
    s.lambdas = {3.0};
  } else {
    fail("unknown built-in experiment '" + name + "'");
  }
  s.validate();
  return s;
}

struct TaskFailure {
  double Delta = 0.0;
  double lambda = 0.0;
  int replicate = 0;
  std::string message;
};

struct ExperimentResult {
  ExperimentSpec spec;
  std::map<Pipeline, Table> tables;
  std::vector<TaskFailure> failures;
  std::size_t tasks = 0;

  /// Nonzero when more than 10% of replicate tasks failed.
  int exit_code() const {
    return tasks > 0 && failures.size() * 10 > tasks ? 1 : 0;
  }
};

namespace detail {

struct ReplicateMetrics {
  bool ok = false;
  std::string error;
  std::uint64_t seed = 0;
  std::vector<double> amp, baseline, universality;
  std::vector<std::vector<double>> fdr, coverage;  // per alpha
};

inline const std::vector<std::string>& amp_metric_names() {
  static const std::vector<std::string> v = {
      "overlap",  "se_overlap", "mse_sigma",  "se_mse_sigma",
      "pred_error", "se_pred_error", "mse_beta", "se_mse_beta"};
  return v;
}
inline const std::vector<std::string>& baseline_metric_names() {
  static const std::vector<std::string> v = {"amp_pred_error", "lap_pred_error", "se_pred_error",
                                             "lap_lambda1", "lap_lambda2"};
  return v;
}
inline const std::vector<std::string>& fdr_metric_names() {
  static const std::vector<std::string> v = {"fdp", "tdp", "rejections", "s_star",
                                             "fdp_step_up", "tdp_step_up", "rejections_step_up"};
  return v;
}
inline const std::vector<std::string>& coverage_metric_names() {
  static const std::vector<std::string> v = {"coverage", "half_width"};
  return v;
}
inline const std::vector<std::string>& universality_metric_names() {
  static const std::vector<std::string> v = {"overlap_sbm", "overlap_surrogate", "abs_gap"};
  return v;
}

inline ReplicateMetrics run_replicate(const ExperimentSpec& spec, double Delta, double lambda,
                                      int r) {
  ReplicateMetrics m;
  m.seed = replicate_seed(spec.seed, static_cast<std::uint64_t>(r));
  const auto& P = spec.pipelines;
  const ModelParams mp = spec.model(Delta, lambda);
  const PriorSpec prior = mp.prior;
  const Dataset ds = generate(mp, m.seed);
  const AmpResult res = amp_run(ds, prior, mp, spec.amp);
  const AmpIterate& last = res.diagnostics.back();
  const int T = spec.amp.T;
  const double rho = prior.rho();

  if (P.count(Pipeline::kAmp)) {
    const double ov_pred = last.se_overlap_pred;
    m.amp = {last.overlap,   ov_pred,
             last.mse_sigma, std::max(0.0, rho * rho - ov_pred * ov_pred),
             last.pred_error, last.se_pred_error,
             last.mse_beta,  last.se_mse_beta};
  }
  if (P.count(Pipeline::kBaseline)) {
    const auto tuned = lap_tune(ds, spec.lap_grid);
    const Vec beta_lap = lap_fit(ds, tuned.best).beta;
    m.baseline = {last.pred_error, mse_beta(ds.Phi, beta_lap, ds.beta0), last.se_pred_error,
                  tuned.best.lambda1, tuned.best.lambda2};
  }
  const double eta_T = res.se_trace.eta.at(T), nu_T = res.se_trace.nu.at(T);
  if (P.count(Pipeline::kFdr)) {
    const Vec pv = pvalues(res.sigma_iter, nu_T);
    for (double a : spec.alphas) {
      const auto d = discover(pv, rho, a, &ds.sigma0, ThresholdRule::kInfCrossing);
      const auto b = discover(pv, rho, a, &ds.sigma0, ThresholdRule::kStepUp);
      m.fdr.push_back({*d.empirical_fdp, *d.empirical_tdp, double(d.rejected.size()), d.s_star,
                       *b.empirical_fdp, *b.empirical_tdp, double(b.rejected.size())});
    }
  }
  if (P.count(Pipeline::kCoverage)) {
    for (double a : spec.alphas) {
      const auto ci = credible_intervals(res.sigma_iter, eta_T, nu_T, a, &ds.sigma0);
      m.coverage.push_back({*ci.empirical_coverage, 0.5 * (ci.upper[0] - ci.lower[0])});
    }
  }
  if (P.count(Pipeline::kUniversality)) {
    AmpConfig sbm_cfg = spec.amp, sur_cfg = spec.amp;
    sbm_cfg.matrix_mode = MatrixMode::kSbm;
    sur_cfg.matrix_mode = MatrixMode::kGaussianSurrogate;
    const double ov_sbm = spec.amp.matrix_mode == MatrixMode::kSbm
                              ? last.overlap
                              : amp_run(ds, prior, mp, sbm_cfg).diagnostics.back().overlap;
    const double ov_sur = spec.amp.matrix_mode == MatrixMode::kGaussianSurrogate
                              ? last.overlap
                              : amp_run(ds, prior, mp, sur_cfg).diagnostics.back().overlap;
    m.universality = {ov_sbm, ov_sur, std::abs(ov_sbm - ov_sur)};
  }
  m.ok = true;
  return m;
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// Standard error of the mean; NaN with fewer than two values.
inline double stderr_of(const std::vector<double>& v) {
  if (v.size() < 2) return std::nan("");
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

/// Appends mean and stderr rows computed from the `rep` rows sharing the
/// key columns.
inline void append_aggregates(Table& t, const std::vector<std::string>& keys,
                              const std::vector<std::string>& metrics) {
  std::vector<std::vector<Cell>> agg;
  std::vector<std::vector<double>> seen_keys;
  const auto reps = t.select("rep");
  for (const auto* row : reps) {
    std::vector<double> key;
    for (const auto& k : keys) key.push_back(t.number(*row, k));
    if (std::find(seen_keys.begin(), seen_keys.end(), key) != seen_keys.end()) continue;
    seen_keys.push_back(key);
    std::vector<std::vector<double>> vals(metrics.size());
    for (const auto* other : reps) {
      bool same = true;
      for (std::size_t i = 0; i < keys.size() && same; ++i) same = t.number(*other, keys[i]) == key[i];
      if (!same) continue;
      for (std::size_t j = 0; j < metrics.size(); ++j) vals[j].push_back(t.number(*other, metrics[j]));
    }
    for (const char* type : {"mean", "stderr"}) {
      std::vector<Cell> out(t.columns.size(), Cell(std::string()));
      out[0] = std::string(type);
      for (std::size_t i = 0; i < keys.size(); ++i) out[t.col(keys[i])] = key[i];
      out[t.col("replicate")] = static_cast<double>(vals[0].size());
      for (std::size_t j = 0; j < metrics.size(); ++j)
        out[t.col(metrics[j])] = std::string(type) == "mean" ? mean_of(vals[j]) : stderr_of(vals[j]);
      agg.push_back(std::move(out));
    }
  }
  for (auto& r : agg) t.rows.push_back(std::move(r));
}

inline Table replicate_table(const std::vector<std::string>& keys,
                             const std::vector<std::string>& metrics) {
  Table t;
  t.columns = {"row_type"};
  t.columns.insert(t.columns.end(), keys.begin(), keys.end());
  t.columns.push_back("replicate");
  t.columns.push_back("seed");
  t.columns.insert(t.columns.end(), metrics.begin(), metrics.end());
  return t;
}

}  // namespace detail

/// Runs every selected pipeline. Replicate tasks (one dataset each, shared
/// by all dataset pipelines) go to a worker pool; tables are assembled in
/// task order so output does not depend on scheduling.
inline ExperimentResult run_pipelines(const ExperimentSpec& spec, int threads = 1) {
  spec.validate();
  ExperimentResult out;
  out.spec = spec;
  const auto& P = spec.pipelines;
  const QuadratureRule quad = gauss_hermite(spec.amp.quad_order);
  const PriorSpec prior = spec.prior();

  struct GridPoint {
    double Delta, lambda;
  };
  std::vector<GridPoint> grid;
  for (double d : spec.deltas)
    for (double l : spec.lambdas) grid.push_back({d, l});

  if (P.count(Pipeline::kSe)) {
    Table t;
    t.columns = {"row_type", "delta", "lambda", "start", "mu_star", "xi_star", "residual",
                 "iterations", "converged", "mse_sigma_pred", "mse_beta_pred"};
    std::vector<std::vector<std::vector<Cell>>> rows(grid.size());
    parallel_for(grid.size(), threads, [&](std::size_t g) {
      for (const auto& fp : fixed_points(prior, grid[g].lambda, spec.kappa(), grid[g].Delta, quad)) {
        const auto e = predicted_errors(fp, prior, grid[g].lambda, grid[g].Delta);
        rows[g].push_back({std::string("point"), grid[g].Delta, grid[g].lambda,
                           std::string(fp.start == SeStart::kUninformative ? "uninformative" : "informative"),
                           fp.mu_star, fp.xi_star, fp.residual, double(fp.iterations),
                           double(fp.converged ? 1 : 0), e.mse_sigma, e.mse_beta});
      }
    });
    for (auto& g : rows)
      for (auto& r : g) t.rows.push_back(std::move(r));
    out.tables[Pipeline::kSe] = std::move(t);
  }

  if (P.count(Pipeline::kRs)) {
    Table t;
    t.columns = {"row_type", "delta", "lambda", "mu_bar", "xi_bar", "mi", "residual",
                 "mu_star", "xi_star", "coincide", "mmse_pred", "y_mmse_pred"};
    t.rows.resize(grid.size());
    parallel_for(grid.size(), threads, [&](std::size_t g) {
      const auto rep = optimality_check(prior, grid[g].lambda, spec.kappa(), grid[g].Delta, quad);
      t.rows[g] = {std::string("point"), grid[g].Delta, grid[g].lambda, rep.rs.mu_bar, rep.rs.xi_bar,
                   rep.rs.value, rep.rs.stationarity_residual, rep.amp_fixed_point.mu_star,
                   rep.amp_fixed_point.xi_star, double(rep.coincide ? 1 : 0), rep.mmse_pred,
                   rep.y_mmse_pred};
    });
    out.tables[Pipeline::kRs] = std::move(t);
  }

  const bool any_dataset = P.count(Pipeline::kAmp) || P.count(Pipeline::kBaseline) ||
                           P.count(Pipeline::kFdr) || P.count(Pipeline::kCoverage) ||
                           P.count(Pipeline::kUniversality);
  if (!any_dataset) return out;

  const std::size_t R = static_cast<std::size_t>(spec.replicates);
  out.tasks = grid.size() * R;
  std::vector<detail::ReplicateMetrics> slots(out.tasks);
  parallel_for(out.tasks, threads, [&](std::size_t k) {
    const auto& g = grid[k / R];
    const int r = static_cast<int>(k % R);
    try {
      slots[k] = detail::run_replicate(spec, g.Delta, g.lambda, r);
    } catch (const std::exception& e) {
      slots[k].ok = false;
      slots[k].seed = replicate_seed(spec.seed, static_cast<std::uint64_t>(r));
      slots[k].error = e.what();
    }
  });

  const std::vector<std::string> keys = {"delta", "lambda"};
  const std::vector<std::string> akeys = {"delta", "lambda", "alpha"};
  auto make = [&](Pipeline pl, const std::vector<std::string>& metrics, bool per_alpha) {
    Table t = detail::replicate_table(per_alpha ? akeys : keys, metrics);
    for (std::size_t k = 0; k < out.tasks; ++k) {
      const auto& s = slots[k];
      if (!s.ok) continue;
      const auto& g = grid[k / R];
      const double r = static_cast<double>(k % R);
      auto emit = [&](const std::vector<double>& vals, std::optional<double> alpha) {
        std::vector<Cell> row = {std::string("rep"), g.Delta, g.lambda};
        if (alpha) row.push_back(*alpha);
        row.push_back(r);
        row.push_back(s.seed);
        for (double v : vals) row.push_back(v);
        t.rows.push_back(std::move(row));
      };
      if (pl == Pipeline::kAmp) emit(s.amp, std::nullopt);
      if (pl == Pipeline::kBaseline) emit(s.baseline, std::nullopt);
      if (pl == Pipeline::kUniversality) emit(s.universality, std::nullopt);
      if (pl == Pipeline::kFdr)
        for (std::size_t a = 0; a < spec.alphas.size(); ++a) emit(s.fdr[a], spec.alphas[a]);
      if (pl == Pipeline::kCoverage)
        for (std::size_t a = 0; a < spec.alphas.size(); ++a) emit(s.coverage[a], spec.alphas[a]);
    }
    detail::append_aggregates(t, per_alpha ? akeys : keys, metrics);
    out.tables[pl] = std::move(t);
  };
  if (P.count(Pipeline::kAmp)) make(Pipeline::kAmp, detail::amp_metric_names(), false);
  if (P.count(Pipeline::kBaseline)) make(Pipeline::kBaseline, detail::baseline_metric_names(), false);
  if (P.count(Pipeline::kFdr)) make(Pipeline::kFdr, detail::fdr_metric_names(), true);
  if (P.count(Pipeline::kCoverage)) make(Pipeline::kCoverage, detail::coverage_metric_names(), true);
  if (P.count(Pipeline::kUniversality))
    make(Pipeline::kUniversality, detail::universality_metric_names(), false);

  for (std::size_t k = 0; k < out.tasks; ++k)
    if (!slots[k].ok)
      out.failures.push_back({grid[k / R].Delta, grid[k / R].lambda, static_cast<int>(k % R), slots[k].error});
  return out;
}

struct WriteOptions {
  std::filesystem::path out_dir = ".";
  bool force = false;
  std::string timestamp;  ///< empty: current UTC time
};

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

inline std::filesystem::path pipeline_csv_path(const ExperimentSpec& spec, Pipeline p,
                                               const std::filesystem::path& dir) {
  return dir / (spec.name + "_" + to_string(p) + ".csv");
}

/// Writes `# key: value` metadata lines. The `generated` line is the only
/// one that changes between identical runs.
inline void write_csv_header(std::ostream& os, const std::string& pipeline,
                             const std::string& timestamp, const std::string& spec_text,
                             const std::vector<std::string>& extra = {}) {
  os << "# schema: " << kCsvSchema << "\n";
  os << "# version: " << kVersion << "\n";
  os << "# generated: " << timestamp << "\n";
  os << "# pipeline: " << pipeline << "\n";
  std::istringstream in(spec_text);
  std::string line;
  while (std::getline(in, line)) os << "# spec: " << line << "\n";
  for (const auto& e : extra) os << "# " << e << "\n";
}

inline std::vector<std::filesystem::path> write_experiment(const ExperimentResult& res,
                                                           const WriteOptions& opt) {
  namespace fs = std::filesystem;
  std::vector<fs::path> files;
  for (const auto& [p, t] : res.tables) files.push_back(pipeline_csv_path(res.spec, p, opt.out_dir));
  if (!opt.force)
    for (const auto& f : files)
      if (fs::exists(f)) fail("refusing to overwrite " + f.string() + " (use --force)");
  fs::create_directories(opt.out_dir);
  const std::string ts = opt.timestamp.empty() ? utc_timestamp() : opt.timestamp;
  const std::string spec_text = to_ini(res.spec);
  std::vector<std::string> extra = {"seed: " + std::to_string(res.spec.seed),
                                    "tasks: " + std::to_string(res.tasks),
                                    "failed: " + std::to_string(res.failures.size())};
  for (const auto& f : res.failures)
    extra.push_back("failure: delta=" + format_double(f.Delta) + " lambda=" + format_double(f.lambda) +
                    " replicate=" + std::to_string(f.replicate) + " " + f.message);
  std::size_t i = 0;
  for (const auto& [p, t] : res.tables) {
    std::ofstream os(files[i++], std::ios::binary);
    if (!os) fail("cannot write " + files[i - 1].string());
    write_csv_header(os, to_string(p), ts, spec_text, extra);
    t.write_csv(os);
  }
  return files;
}

/// Runs, writes, and returns the exit status.
inline int run_experiment(const ExperimentSpec& spec, const WriteOptions& opt, int threads = 1,
                          std::vector<std::filesystem::path>* written = nullptr) {
  namespace fs = std::filesystem;
  if (!opt.force)
    for (const auto& [p, name] : pipeline_names())
      if (spec.pipelines.count(p) && fs::exists(pipeline_csv_path(spec, p, opt.out_dir)))
        fail("refusing to overwrite " + pipeline_csv_path(spec, p, opt.out_dir).string() +
             " (use --force)");
  const auto res = run_pipelines(spec, threads);
  auto files = write_experiment(res, opt);
  if (written) *written = std::move(files);
  return res.exit_code();
}

}  // namespace reggraph

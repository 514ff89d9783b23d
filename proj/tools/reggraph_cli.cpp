// Command-line front end: dataset generation, single runs, simulations and
// named experiments. CSV goes to --out (a file) or stdout.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "reggraph/reggraph.hpp"

namespace fs = std::filesystem;
using namespace reggraph;

namespace {

struct Globals {
  std::uint64_t seed = 1;
  std::string out;
  int threads = 1;
  int quad_order = kDefaultQuadOrder;
  bool force = false;
};

struct ModelArgs {
  int n = 2000;
  int p = 2000;
  double delta = 1.0;
  double lambda = 3.0;
  double b_p = 0.7;
  double rho = 0.7;
  std::string atoms0 = "0:1";
  std::string atoms1 = "-1:0.5, 1:0.5";
  std::string design = "gaussian";

  void add_to(CLI::App* cmd, bool with_sizes = true) {
    if (with_sizes) {
      cmd->add_option("--n", n, "sample count")->capture_default_str();
      cmd->add_option("--p", p, "feature count")->capture_default_str();
      cmd->add_option("--b-p", b_p, "baseline edge rate numerator")->capture_default_str();
      cmd->add_option("--design", design, "gaussian|bernoulli")->capture_default_str();
    }
    cmd->add_option("--delta", delta, "noise variance")->capture_default_str();
    cmd->add_option("--lambda", lambda, "graph SNR")->capture_default_str();
    cmd->add_option("--rho", rho, "P(sigma = 1)")->capture_default_str();
    cmd->add_option("--atoms0", atoms0, "B | sigma=0 atoms, value:prob list")->capture_default_str();
    cmd->add_option("--atoms1", atoms1, "B | sigma=1 atoms, value:prob list")->capture_default_str();
  }

  PriorSpec prior() const {
    return PriorSpec(rho, PriorSpec::parse_atoms(atoms0), PriorSpec::parse_atoms(atoms1));
  }

  ModelParams params() const {
    ModelParams m;
    m.n = n;
    m.p = p;
    m.Delta = delta;
    m.b_p = b_p;
    m.lambda = lambda;
    m.prior = prior();
    m.design = parse_design(design);
    m.validate();
    return m;
  }

  void fill(ExperimentSpec& s) const {
    s.n = n;
    s.p = p;
    s.b_p = b_p;
    s.design = parse_design(design);
    s.rho = rho;
    s.atoms0 = PriorSpec::parse_atoms(atoms0);
    s.atoms1 = PriorSpec::parse_atoms(atoms1);
    s.deltas = {delta};
    s.lambdas = {lambda};
  }
};

struct AmpArgs {
  int T = 25;
  std::string init = "prior-mean";
  double oracle_eps = 0.5;
  std::string matrix_mode = "sbm";
  double damping = 1.0;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--T", T, "AMP iterations")->capture_default_str();
    cmd->add_option("--init", init, "prior-mean|oracle")->capture_default_str();
    cmd->add_option("--oracle-eps", oracle_eps, "overlap of the oracle initialization")->capture_default_str();
    cmd->add_option("--matrix-mode", matrix_mode, "sbm|gaussian-surrogate")->capture_default_str();
    cmd->add_option("--damping", damping, "damping factor in (0,1]")->capture_default_str();
  }

  AmpConfig config(int quad_order) const {
    AmpConfig c;
    c.T = T;
    if (init == "prior-mean") c.init = AmpInit::kPriorMean;
    else if (init == "oracle") c.init = AmpInit::kOracle;
    else fail("--init must be prior-mean or oracle");
    c.oracle_eps = oracle_eps;
    c.matrix_mode = parse_matrix_mode(matrix_mode);
    c.damping = damping;
    c.quad_order = quad_order;
    c.validate();
    return c;
  }
};

/// Opens --out (refusing to clobber unless --force) or falls back to stdout.
class Output {
 public:
  explicit Output(const Globals& g) {
    if (g.out.empty()) return;
    if (fs::exists(g.out) && !g.force) fail("refusing to overwrite " + g.out + " (use --force)");
    if (fs::path(g.out).has_parent_path()) fs::create_directories(fs::path(g.out).parent_path());
    file_ = std::make_unique<std::ofstream>(g.out, std::ios::binary);
    if (!*file_) fail("cannot write " + g.out);
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

std::string echo_args(int argc, char** argv) {
  std::string s = "command =";
  for (int i = 1; i < argc; ++i) s += std::string(" ") + argv[i];
  return s;
}

std::string cell(double v) { return format_double(v); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Regression with graph side information: AMP, state evolution, inference"};
  app.fallthrough();
  app.require_subcommand(1);
  Globals g;
  auto* seed_opt = app.add_option("--seed", g.seed, "base seed")->capture_default_str();
  app.add_option("--out", g.out, "output file (directory for generate/experiment)");
  app.add_option("--threads", g.threads, "worker threads")->capture_default_str();
  auto* quad_opt = app.add_option("--quad-order", g.quad_order, "Gauss-Hermite order")->capture_default_str();
  app.add_flag("--force", g.force, "overwrite existing outputs");

  // generate
  ModelArgs gen_model;
  auto* gen = app.add_subcommand("generate", "draw a dataset and write it to --out");
  gen_model.add_to(gen);

  // amp-run
  std::string amp_data;
  AmpArgs amp_args;
  auto* amp = app.add_subcommand("amp-run", "run AMP on a stored dataset");
  amp->add_option("--data", amp_data, "dataset directory")->required();
  amp_args.add_to(amp);

  // se-solve
  ModelArgs se_model;
  double se_kappa = 1.0;
  int se_T = 200;
  auto* se = app.add_subcommand("se-solve", "state-evolution trajectory and fixed point");
  se_model.add_to(se, false);
  se->add_option("--kappa", se_kappa, "n/p")->capture_default_str();
  se->add_option("--T", se_T, "trajectory length")->capture_default_str();

  // mi-curve
  ModelArgs mi_model;
  double mi_kappa = 1.0;
  std::string mi_sweep = "delta", mi_values = "0.2:4:20";
  auto* mi = app.add_subcommand("mi-curve", "limiting mutual information over a sweep");
  mi_model.add_to(mi, false);
  mi->add_option("--kappa", mi_kappa, "n/p")->capture_default_str();
  mi->add_option("--sweep", mi_sweep, "delta|lambda")->capture_default_str();
  mi->add_option("--values", mi_values, "list a,b,c or range start:stop:count")->capture_default_str();

  // fdr-sim / coverage-sim
  ModelArgs sim_model;
  AmpArgs sim_amp;
  int sim_reps = 20;
  std::string sim_alpha = "0.1";
  auto* fdr = app.add_subcommand("fdr-sim", "Monte-Carlo FDP/TDP of AMP variable discovery");
  auto* cov = app.add_subcommand("coverage-sim", "Monte-Carlo coverage of AMP credible intervals");
  for (auto* cmd : {fdr, cov}) {
    sim_model.add_to(cmd);
    sim_amp.add_to(cmd);
    cmd->add_option("--replicates", sim_reps, "replicates")->capture_default_str();
    cmd->add_option("--alpha", sim_alpha, "levels, list or range")->capture_default_str();
  }

  // baseline-lap
  std::string lap_data;
  double lap_l1 = 0.1, lap_l2 = 1.0;
  bool lap_tune_flag = false, lap_norm = false;
  auto* lap = app.add_subcommand("baseline-lap", "Laplacian-penalized regression on a stored dataset");
  lap->add_option("--data", lap_data, "dataset directory")->required();
  lap->add_option("--lambda1", lap_l1, "l1 weight")->capture_default_str();
  lap->add_option("--lambda2", lap_l2, "Laplacian weight")->capture_default_str();
  lap->add_flag("--tune", lap_tune_flag, "select weights on a 20% holdout");
  lap->add_flag("--normalize", lap_norm, "degree-normalized Laplacian");

  // experiment
  std::string exp_name;
  int exp_reps = 0;
  auto* exp = app.add_subcommand("experiment", "run a built-in or file-defined experiment");
  exp->add_option("name", exp_name, "built-in name or path to an INI spec")->required();
  exp->add_option("--replicates", exp_reps, "override the replicate count");
  exp->footer([] {
    std::string s = "Built-ins:";
    for (const auto& n : builtin_names()) s += " " + n;
    return s;
  }());

  CLI11_PARSE(app, argc, argv);

  try {
    const std::string echo = echo_args(argc, argv);
    const std::string ts = utc_timestamp();

    if (*gen) {
      if (g.out.empty()) fail("generate needs --out DIR");
      if (fs::exists(g.out) && !g.force) fail("refusing to overwrite " + g.out + " (use --force)");
      write_dataset(generate(gen_model.params(), g.seed), g.out);
      return 0;
    }

    if (*amp) {
      const Dataset ds = read_dataset(amp_data);
      const AmpResult res = amp_run(ds, ds.params.prior, ds.params, amp_args.config(g.quad_order));
      Output out(g);
      write_csv_header(out.stream(), "amp-run", ts, echo, {"damping: " + cell(res.damping)});
      out.stream() << "t,overlap,mse_beta,pred_error,se_overlap_pred,se_pred_error\n";
      for (const auto& d : res.diagnostics)
        out.stream() << d.t << ',' << cell(d.overlap) << ',' << cell(d.mse_beta) << ','
                     << cell(d.pred_error) << ',' << cell(d.se_overlap_pred) << ','
                     << cell(d.se_pred_error) << '\n';
      return 0;
    }

    if (*se) {
      const PriorSpec prior = se_model.prior();
      const auto quad = gauss_hermite(g.quad_order);
      const SeTrace tr = se_run(prior, se_model.lambda, se_kappa, se_model.delta, se_T, quad);
      const SeFixedPoint fp = fixed_point(prior, se_model.lambda, se_kappa, se_model.delta, quad);
      Output out(g);
      write_csv_header(out.stream(), "se-solve", ts, echo,
                       {std::string("fixed_point_converged: ") + (fp.converged ? "true" : "false")});
      // the last row carries (mu_star, xi_star) in the mu/xi columns
      out.stream() << "t,eta,nu,tau,mu,xi,residual\n";
      for (int t = 0; t <= tr.steps(); ++t)
        out.stream() << t << ',' << cell(tr.eta[t]) << ',' << cell(tr.nu[t]) << ',' << cell(tr.tau[t])
                     << ',' << cell(tr.mu(t)) << ',' << cell(tr.xi(t)) << ",\n";
      out.stream() << "fixed_point,,,," << cell(fp.mu_star) << ',' << cell(fp.xi_star) << ','
                   << cell(fp.residual) << '\n';
      return 0;
    }

    if (*mi) {
      const PriorSpec prior = mi_model.prior();
      const auto quad = gauss_hermite(g.quad_order);
      std::vector<std::string> errs;
      const auto values = detail::parse_grid("--values", mi_values, errs);
      if (!errs.empty()) fail(errs.front());
      if (mi_sweep != "delta" && mi_sweep != "lambda") fail("--sweep must be delta or lambda");
      Table t;
      t.columns = {"sweep_value", "mu_bar", "xi_bar", "mi", "mu_star", "xi_star", "coincide"};
      t.rows.resize(values.size());
      parallel_for(values.size(), g.threads, [&](std::size_t i) {
        const double d = mi_sweep == "delta" ? values[i] : mi_model.delta;
        const double l = mi_sweep == "lambda" ? values[i] : mi_model.lambda;
        const auto r = optimality_check(prior, l, mi_kappa, d, quad);
        t.rows[i] = {values[i], r.rs.mu_bar, r.rs.xi_bar, r.rs.value, r.amp_fixed_point.mu_star,
                     r.amp_fixed_point.xi_star, double(r.coincide ? 1 : 0)};
      });
      Output out(g);
      write_csv_header(out.stream(), "mi-curve", ts, echo);
      t.write_csv(out.stream());
      return 0;
    }

    if (*fdr || *cov) {
      ExperimentSpec s;
      s.name = *fdr ? "fdr-sim" : "coverage-sim";
      s.pipelines = {*fdr ? Pipeline::kFdr : Pipeline::kCoverage};
      sim_model.fill(s);
      s.amp = sim_amp.config(g.quad_order);
      s.replicates = sim_reps;
      s.seed = g.seed;
      std::vector<std::string> errs;
      s.alphas = detail::parse_grid("--alpha", sim_alpha, errs);
      if (!errs.empty()) fail(errs.front());
      const auto res = run_pipelines(s, g.threads);
      Output out(g);
      std::vector<std::string> extra = {"failed: " + std::to_string(res.failures.size())};
      for (const auto& f : res.failures) extra.push_back("failure: replicate=" + std::to_string(f.replicate) + " " + f.message);
      write_csv_header(out.stream(), s.name, ts, to_ini(s), extra);
      res.tables.begin()->second.write_csv(out.stream());
      return res.exit_code();
    }

    if (*lap) {
      const Dataset ds = read_dataset(lap_data);
      LapConfig cfg;
      cfg.normalize_laplacian = lap_norm;
      if (lap_tune_flag) {
        cfg = lap_tune(ds, default_lap_grid(), cfg, g.threads).best;
      } else {
        cfg.lambda1 = lap_l1;
        cfg.lambda2 = lap_l2;
      }
      const LapFit fit = lap_fit(ds, cfg);
      Output out(g);
      write_csv_header(out.stream(), "baseline-lap", ts, echo,
                       {"lambda1: " + cell(cfg.lambda1), "lambda2: " + cell(cfg.lambda2),
                        std::string("converged: ") + (fit.converged ? "true" : "false")});
      out.stream() << "t,overlap,mse_beta,pred_error,se_overlap_pred,se_pred_error\n";
      out.stream() << fit.iterations << ",," << cell((fit.beta - ds.beta0).squaredNorm() / ds.params.p)
                   << ',' << cell(mse_beta(ds.Phi, fit.beta, ds.beta0)) << ",,\n";
      return 0;
    }

    if (*exp) {
      ExperimentSpec s;
      const auto names = builtin_names();
      if (std::find(names.begin(), names.end(), exp_name) != names.end()) {
        s = builtin_spec(exp_name);
      } else {
        s = parse_spec_file(exp_name);
      }
      if (seed_opt->count()) s.seed = g.seed;
      if (quad_opt->count()) s.amp.quad_order = g.quad_order;
      if (exp_reps > 0) s.replicates = exp_reps;
      s.validate();
      WriteOptions opt;
      opt.out_dir = g.out.empty() ? fs::path("results") : fs::path(g.out);
      opt.force = g.force;
      std::vector<fs::path> files;
      const int code = run_experiment(s, opt, g.threads, &files);
      for (const auto& f : files) std::cerr << "wrote " << f.string() << "\n";
      if (code != 0) std::cerr << "more than 10% of replicates failed\n";
      return code;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

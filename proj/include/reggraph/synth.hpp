#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "reggraph/error.hpp"
#include "reggraph/prior.hpp"
#include "reggraph/rng.hpp"

namespace reggraph {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class DesignKind { kGaussian, kBernoulli };

inline std::string to_string(DesignKind d) {
  return d == DesignKind::kGaussian ? "gaussian" : "bernoulli";
}

inline DesignKind parse_design(const std::string& s) {
  if (s == "gaussian") return DesignKind::kGaussian;
  if (s == "bernoulli") return DesignKind::kBernoulli;
  fail("unknown design '" + s + "' (expected gaussian|bernoulli)");
}

/// a_p from the graph SNR: a_p = b_p + sqrt(lambda b_p (1 - b_p/p)).
inline double snr_to_ap(double lambda, double b_p, double p) {
  require(lambda >= 0.0, "lambda must be nonnegative");
  require(b_p > 0.0 && b_p < p, "b_p must lie in (0, p)");
  const double a = b_p + std::sqrt(lambda * b_p * (1.0 - b_p / p));
  if (a > p) fail("supercritical SNR for given sparsity");
  return a;
}

/// Inverse of snr_to_ap: lambda = (a_p - b_p)^2 / (b_p (1 - b_p/p)).
inline double ap_to_snr(double a_p, double b_p, double p) {
  require(b_p > 0.0 && b_p < p, "b_p must lie in (0, p)");
  const double d = a_p - b_p;
  return d * d / (b_p * (1.0 - b_p / p));
}

struct ModelParams {
  int n = 0;
  int p = 0;
  double Delta = 1.0;
  double b_p = 0.7;
  double lambda = 0.0;
  PriorSpec prior;
  DesignKind design = DesignKind::kGaussian;

  double kappa() const { return static_cast<double>(n) / static_cast<double>(p); }
  double a_p() const { return snr_to_ap(lambda, b_p, p); }
  double base_rate() const { return b_p / static_cast<double>(p); }

  void validate() const {
    require(n >= 1 && p >= 2, "n >= 1 and p >= 2 required");
    require(Delta > 0.0, "Delta must be positive");
    require(b_p > 0.0 && b_p < p, "b_p must lie in (0, p)");
    const double a = a_p();
    require(a <= p, "a_p must not exceed p");
  }
};

/// Undirected simple graph: edge list (i < j) plus CSR adjacency.
struct Graph {
  int p = 0;
  std::vector<std::pair<int, int>> edges;
  std::vector<int> offsets;
  std::vector<int> neighbors;

  static Graph from_edges(int p, std::vector<std::pair<int, int>> edges) {
    Graph g;
    g.p = p;
    g.edges = std::move(edges);
    std::vector<int> deg(p, 0);
    for (auto [i, j] : g.edges) {
      require(i >= 0 && j >= 0 && i < p && j < p && i != j, "invalid edge");
      ++deg[i];
      ++deg[j];
    }
    g.offsets.assign(p + 1, 0);
    for (int i = 0; i < p; ++i) g.offsets[i + 1] = g.offsets[i] + deg[i];
    g.neighbors.resize(g.offsets[p]);
    std::vector<int> fill(g.offsets.begin(), g.offsets.end() - 1);
    for (auto [i, j] : g.edges) {
      g.neighbors[fill[i]++] = j;
      g.neighbors[fill[j]++] = i;
    }
    return g;
  }

  int degree(int i) const { return offsets[i + 1] - offsets[i]; }

  /// A v
  Vec apply(const Vec& v) const {
    Vec out(p);
    for (int i = 0; i < p; ++i) {
      double s = 0.0;
      for (int k = offsets[i]; k < offsets[i + 1]; ++k) s += v[neighbors[k]];
      out[i] = s;
    }
    return out;
  }
};

struct Dataset {
  ModelParams params;
  std::uint64_t seed = 0;
  Vec sigma0;
  Vec beta0;
  Mat Phi;
  Vec y;
  Graph graph;
};

/// Applies the centered, scaled adjacency
///   Abar = (A - b_p/p) / sqrt((b_p/p)(1 - b_p/p))
/// through a rank-one correction, never forming the dense p x p matrix.
class CenteredAdjacency {
 public:
  CenteredAdjacency(const Graph& g, double b_p) : g_(&g), d_(b_p / g.p) {
    if (!(d_ > 0.0 && d_ < 1.0)) fail("centered adjacency undefined for b_p in {0, p}");
    scale_ = 1.0 / std::sqrt(d_ * (1.0 - d_));
  }
  Vec apply(const Vec& v) const {
    Vec out = g_->apply(v);
    out.array() -= d_ * v.sum();
    return out * scale_;
  }

 private:
  const Graph* g_;
  double d_;
  double scale_;
};

inline Vec centered_adjacency_apply(const Dataset& ds, const Vec& v) {
  require(v.size() == ds.params.p, "vector length must equal p");
  return CenteredAdjacency(ds.graph, ds.params.b_p).apply(v);
}

inline constexpr int kMaxSurrogateDim = 5000;

/// sqrt(lambda/p) sigma0 sigma0^T + Z with Z symmetric, N(0,1) off the
/// diagonal and N(0,2) on it.
inline Mat gaussian_surrogate(const Vec& sigma0, double lambda, std::uint64_t seed,
                              int max_dim = kMaxSurrogateDim) {
  const auto p = static_cast<int>(sigma0.size());
  require(p <= max_dim, "surrogate dimension exceeds configured maximum");
  Rng rng = make_rng(seed, Stream::kSurrogate);
  std::normal_distribution<double> z(0.0, 1.0);
  const double c = std::sqrt(lambda / p);
  Mat m(p, p);
  for (int j = 0; j < p; ++j) {
    for (int i = 0; i < j; ++i) {
      const double v = c * sigma0[i] * sigma0[j] + z(rng);
      m(i, j) = v;
      m(j, i) = v;
    }
    m(j, j) = c * sigma0[j] * sigma0[j] + std::sqrt(2.0) * z(rng);
  }
  return m;
}

/// Draws one Reg-Graph realization. Design entries have mean 0 and variance
/// 1/p, so S = Phi / sqrt(kappa) has entries of variance 1/n.
inline Dataset generate(const ModelParams& params, std::uint64_t seed) {
  params.validate();
  const int n = params.n, p = params.p;
  Dataset ds;
  ds.params = params;
  ds.seed = seed;

  {
    Rng rng = make_rng(seed, Stream::kLatents);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    ds.sigma0.resize(p);
    ds.beta0.resize(p);
    for (int i = 0; i < p; ++i) {
      const int s = u(rng) < params.prior.rho() ? 1 : 0;
      const auto& atoms = params.prior.atoms(s);
      double r = u(rng), acc = 0.0, b = atoms.back().value;
      for (const auto& a : atoms) {
        acc += a.prob;
        if (r < acc) {
          b = a.value;
          break;
        }
      }
      ds.sigma0[i] = s;
      ds.beta0[i] = b;
    }
  }
  {
    Rng rng = make_rng(seed, Stream::kDesign);
    ds.Phi.resize(n, p);
    const double sd = 1.0 / std::sqrt(static_cast<double>(p));
    if (params.design == DesignKind::kGaussian) {
      std::normal_distribution<double> z(0.0, sd);
      for (Eigen::Index k = 0; k < ds.Phi.size(); ++k) ds.Phi.data()[k] = z(rng);
    } else {
      constexpr double q = 0.3;
      std::bernoulli_distribution bern(q);
      const double hi = (1.0 - q) / std::sqrt(q * (1.0 - q)) * sd;
      const double lo = -q / std::sqrt(q * (1.0 - q)) * sd;
      for (Eigen::Index k = 0; k < ds.Phi.size(); ++k) ds.Phi.data()[k] = bern(rng) ? hi : lo;
    }
  }
  {
    Rng rng = make_rng(seed, Stream::kNoise);
    std::normal_distribution<double> z(0.0, std::sqrt(params.Delta));
    Vec eps(n);
    for (int i = 0; i < n; ++i) eps[i] = z(rng);
    ds.y = ds.Phi * ds.beta0 + eps;
  }
  {
    Rng rng = make_rng(seed, Stream::kGraph);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double pa = params.a_p() / p, pb = params.b_p / p;
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < p; ++i)
      for (int j = i + 1; j < p; ++j) {
        const double prob = (ds.sigma0[i] * ds.sigma0[j] == 1.0) ? pa : pb;
        if (u(rng) < prob) edges.emplace_back(i, j);
      }
    ds.graph = Graph::from_edges(p, std::move(edges));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Dataset directory format
//
//   header.txt    key = value lines (format, n, p, Delta, b_p, a_p, lambda,
//                 design, seed, rho, atoms0, atoms1)
//   phi.bin       n*p float64, row-major, host byte order
//   signal.csv    i,sigma0,beta0
//   response.csv  mu,y
//   edges.csv     i,j   (0-based, i < j)
// ---------------------------------------------------------------------------

inline constexpr const char* kDatasetFormat = "reggraph-dataset-1";

inline std::map<std::string, std::string> read_key_values(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail("malformed line '" + line + "'");
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

inline void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto& prm = ds.params;
  {
    std::ofstream h(dir / "header.txt");
    h << std::setprecision(17);
    h << "format = " << kDatasetFormat << "\n"
      << "n = " << prm.n << "\n"
      << "p = " << prm.p << "\n"
      << "Delta = " << prm.Delta << "\n"
      << "b_p = " << prm.b_p << "\n"
      << "a_p = " << prm.a_p() << "\n"
      << "lambda = " << prm.lambda << "\n"
      << "design = " << to_string(prm.design) << "\n"
      << "seed = " << ds.seed << "\n"
      << prm.prior.to_text();
  }
  {
    std::ofstream f(dir / "phi.bin", std::ios::binary);
    for (int r = 0; r < prm.n; ++r)
      for (int c = 0; c < prm.p; ++c) {
        const double v = ds.Phi(r, c);
        f.write(reinterpret_cast<const char*>(&v), sizeof v);
      }
  }
  {
    std::ofstream f(dir / "signal.csv");
    f << std::setprecision(17) << "i,sigma0,beta0\n";
    for (int i = 0; i < prm.p; ++i) f << i << ',' << ds.sigma0[i] << ',' << ds.beta0[i] << '\n';
  }
  {
    std::ofstream f(dir / "response.csv");
    f << std::setprecision(17) << "mu,y\n";
    for (int i = 0; i < prm.n; ++i) f << i << ',' << ds.y[i] << '\n';
  }
  {
    std::ofstream f(dir / "edges.csv");
    f << "i,j\n";
    for (auto [i, j] : ds.graph.edges) f << i << ',' << j << '\n';
  }
}

inline std::vector<std::vector<double>> read_csv_rows(const std::filesystem::path& file,
                                                      std::size_t columns) {
  std::ifstream in(file);
  if (!in) fail("cannot open " + file.string());
  std::string line;
  std::getline(in, line);  // header
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (row.size() != columns) fail("unexpected column count in " + file.string());
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Dataset read_dataset(const std::filesystem::path& dir) {
  std::ifstream h(dir / "header.txt");
  if (!h) fail("cannot open " + (dir / "header.txt").string());
  auto kv = read_key_values(h);
  auto get = [&](const std::string& k) {
    auto it = kv.find(k);
    if (it == kv.end()) fail("dataset header missing '" + k + "'");
    return it->second;
  };
  if (get("format") != kDatasetFormat) fail("unsupported dataset format '" + get("format") + "'");
  Dataset ds;
  auto& prm = ds.params;
  prm.n = std::stoi(get("n"));
  prm.p = std::stoi(get("p"));
  prm.Delta = std::stod(get("Delta"));
  prm.b_p = std::stod(get("b_p"));
  prm.lambda = std::stod(get("lambda"));
  prm.design = parse_design(get("design"));
  prm.prior = PriorSpec(std::stod(get("rho")), PriorSpec::parse_atoms(get("atoms0")),
                        PriorSpec::parse_atoms(get("atoms1")));
  ds.seed = std::stoull(get("seed"));
  prm.validate();

  ds.Phi.resize(prm.n, prm.p);
  {
    std::ifstream f(dir / "phi.bin", std::ios::binary);
    if (!f) fail("cannot open phi.bin");
    for (int r = 0; r < prm.n; ++r)
      for (int c = 0; c < prm.p; ++c) {
        double v;
        if (!f.read(reinterpret_cast<char*>(&v), sizeof v)) fail("phi.bin truncated");
        ds.Phi(r, c) = v;
      }
  }
  const auto sig = read_csv_rows(dir / "signal.csv", 3);
  if (static_cast<int>(sig.size()) != prm.p) fail("signal.csv must have p rows");
  ds.sigma0.resize(prm.p);
  ds.beta0.resize(prm.p);
  for (int i = 0; i < prm.p; ++i) {
    ds.sigma0[i] = sig[i][1];
    ds.beta0[i] = sig[i][2];
  }
  const auto resp = read_csv_rows(dir / "response.csv", 2);
  if (static_cast<int>(resp.size()) != prm.n) fail("response.csv must have n rows");
  ds.y.resize(prm.n);
  for (int i = 0; i < prm.n; ++i) ds.y[i] = resp[i][1];
  std::vector<std::pair<int, int>> edges;
  for (const auto& r : read_csv_rows(dir / "edges.csv", 2))
    edges.emplace_back(static_cast<int>(r[0]), static_cast<int>(r[1]));
  ds.graph = Graph::from_edges(prm.p, std::move(edges));
  return ds;
}

}  // namespace reggraph

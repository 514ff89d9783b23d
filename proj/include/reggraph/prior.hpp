#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "reggraph/error.hpp"

namespace reggraph {

struct Atom {
  double value = 0.0;
  double prob = 0.0;
};

/// One support point of the joint law of (Sigma, B).
struct JointAtom {
  int sigma = 0;
  double b = 0.0;
  double weight = 0.0;
};

/// Discrete joint prior: Sigma ~ Bernoulli(rho), B | Sigma=s drawn from atoms_s.
class PriorSpec {
 public:
  PriorSpec() = default;
  PriorSpec(double rho, std::vector<Atom> atoms0, std::vector<Atom> atoms1)
      : rho_(rho), atoms0_(std::move(atoms0)), atoms1_(std::move(atoms1)) {
    validate();
  }

  /// P(.|0) = delta_0, P(.|1) uniform on `slab`.
  static PriorSpec spike_slab(double rho, const std::vector<double>& slab) {
    require(!slab.empty(), "slab must be nonempty");
    std::vector<Atom> a1;
    for (double v : slab) a1.push_back({v, 1.0 / static_cast<double>(slab.size())});
    return PriorSpec(rho, {{0.0, 1.0}}, std::move(a1));
  }

  double rho() const { return rho_; }
  const std::vector<Atom>& atoms0() const { return atoms0_; }
  const std::vector<Atom>& atoms1() const { return atoms1_; }
  const std::vector<Atom>& atoms(int sigma) const { return sigma ? atoms1_ : atoms0_; }

  double s_max() const {
    double m = 0.0;
    for (const auto& a : atoms0_) m = std::max(m, std::abs(a.value));
    for (const auto& a : atoms1_) m = std::max(m, std::abs(a.value));
    return m;
  }

  bool is_spike_slab() const {
    return atoms0_.size() == 1 && atoms0_[0].value == 0.0 && atoms0_[0].prob == 1.0;
  }

  /// Smallest |b| over slab atoms; zero when the prior is not spike-slab.
  double slab_separation() const {
    if (!is_spike_slab()) return 0.0;
    double m = std::numeric_limits<double>::infinity();
    for (const auto& a : atoms1_)
      if (a.prob > 0.0) m = std::min(m, std::abs(a.value));
    return m;
  }

  std::vector<JointAtom> joint_atoms() const {
    std::vector<JointAtom> out;
    for (const auto& a : atoms0_)
      if (a.prob > 0.0) out.push_back({0, a.value, (1.0 - rho_) * a.prob});
    for (const auto& a : atoms1_)
      if (a.prob > 0.0) out.push_back({1, a.value, rho_ * a.prob});
    return out;
  }

  double mean_b() const {
    double m = 0.0;
    for (const auto& j : joint_atoms()) m += j.weight * j.b;
    return m;
  }
  double second_moment_b() const {
    double m = 0.0;
    for (const auto& j : joint_atoms()) m += j.weight * j.b * j.b;
    return m;
  }
  double var_b() const {
    const double m = mean_b();
    return second_moment_b() - m * m;
  }

  /// key = value text; atoms as `value:prob` separated by commas.
  std::string to_text() const {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "rho = " << rho_ << "\n";
    os << "atoms0 = " << atoms_to_text(atoms0_) << "\n";
    os << "atoms1 = " << atoms_to_text(atoms1_) << "\n";
    return os.str();
  }

  static std::string atoms_to_text(const std::vector<Atom>& atoms) {
    std::ostringstream os;
    os << std::setprecision(17);
    for (std::size_t i = 0; i < atoms.size(); ++i) {
      if (i) os << ", ";
      os << atoms[i].value << ":" << atoms[i].prob;
    }
    return os.str();
  }

  static std::vector<Atom> parse_atoms(const std::string& text) {
    std::vector<Atom> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto colon = item.find(':');
      if (colon == std::string::npos) fail("atom '" + item + "' is not of the form value:prob");
      try {
        out.push_back({std::stod(item.substr(0, colon)), std::stod(item.substr(colon + 1))});
      } catch (const std::exception&) {
        fail("atom '" + item + "' is not numeric");
      }
    }
    return out;
  }

 private:
  void validate() const {
    require(rho_ > 0.0 && rho_ < 1.0, "rho must lie in (0,1)");
    for (int s = 0; s < 2; ++s) {
      const auto& list = atoms(s);
      const std::string name = s ? "atoms1" : "atoms0";
      require(!list.empty(), name + " must be nonempty");
      double total = 0.0;
      for (const auto& a : list) {
        require(a.prob >= 0.0, name + " has a negative probability");
        require(std::isfinite(a.value), name + " has a non-finite value");
        total += a.prob;
      }
      require(std::abs(total - 1.0) <= 1e-12, name + " probabilities must sum to 1");
    }
  }

  double rho_ = 0.5;
  std::vector<Atom> atoms0_{{0.0, 1.0}};
  std::vector<Atom> atoms1_{{1.0, 1.0}};
};

}  // namespace reggraph

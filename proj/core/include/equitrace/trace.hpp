#pragma once

#include <string>
#include <vector>

#include "equitrace/flow.hpp"
#include "equitrace/geometry.hpp"
#include "equitrace/orbits.hpp"

namespace equitrace {

/// Test function on R \ {0}: a linear combination of gaussians, smooth bumps
/// and polynomial-times-bump terms.
class TestFunction {
 public:
  enum class Family { Gaussian, Bump, PolyBump };

  struct Term {
    double coef = 1.0;
    Family family = Family::Gaussian;
    double center = 0.0;
    double width = 1.0;  // gaussian width or bump radius
    std::vector<double> poly;  // PolyBump coefficients in ((t - center) / width)
  };

  static TestFunction gaussian(double center, double width);
  static TestFunction bump(double center, double radius);
  static TestFunction polybump(double center, double radius, std::vector<double> coeffs);
  /// Specs: "gaussian:c:w", "bump:c:r", "polybump:c:r:a0,a1,...", optionally
  /// scaled "2.5*bump:1:0.5" and joined with '+'.
  static TestFunction parse(const std::string& spec);

  double operator()(double t) const;
  /// Interval outside of which psi vanishes (gaussians: center +- 8 widths).
  std::pair<double, double> support() const;
  double sup_abs() const;
  std::string str() const;

  const std::vector<Term>& terms() const { return terms_; }
  TestFunction operator+(const TestFunction& o) const;
  TestFunction operator*(double a) const;

 private:
  static void validate(const Term& term);
  std::vector<Term> terms_;
};

inline constexpr double kGaussianSupportWidths = 8.0;
inline constexpr double kAtomMergeTolerance = 1e-7;
inline constexpr double kSelfCheckTolerance = 1e-7;

struct Atom {
  double l = 0.0;
  double weight = 0.0;
  std::vector<std::string> contributors;  // "h=<payload>#<orbit index>"
};

/// Weighted Dirac comb sum_k w_k delta_{l_k}, atoms sorted by l.
struct DeltaComb {
  std::vector<Atom> atoms;
  double total_variation() const;
};

struct Contribution {
  double l;
  double weight;
  std::string provenance;
};

/// Merges contributions within kAtomMergeTolerance with compensated sums.
DeltaComb merge_contributions(std::vector<Contribution> contributions);

/// Sum of weight * psi(l) over atoms in sorted order.
double pair(const DeltaComb& comb, const TestFunction& psi);

/// tr(A F_l^{-1} rho(x, .)) at gamma(0); with self_check_seed != 0 it is
/// re-evaluated at gamma(t) for 3 random t, throwing TIndependenceViolation on
/// disagreement beyond kSelfCheckTolerance.
double fiber_trace(const CoverSystem& system, const DelocalizedOrbit& orbit, unsigned long self_check_seed = 0);

struct OrbitRecord {
  GroupElt h;
  long index = 0;  // position within the orbit list for h g h^{-1}
  DelocalizedOrbit orbit;
  PoincareData poincare;
  double t_gamma = 0.0;
  double fiber_trace = 1.0;
  double weight = 0.0;
};

struct AssembleOptions {
  long radius = 8;
  OrbitWindow window;
  SeedGrid seeds;
  int threads = 1;
  double nondegeneracy = kNondegeneracyThreshold;
  unsigned long seed = 1;
};

struct AssembleResult {
  DeltaComb comb;
  std::vector<OrbitRecord> records;
  std::vector<double> shell_sums;  // contribution of coset representatives by word length
  std::vector<std::string> warnings;
  SearchStats stats;
};

/// Orbit sum for g over G/Z_g: weight fiber_trace * T_gamma / |det(1 - P)|
/// per orbit class, merged into atoms.
AssembleResult assemble(const CoverSystem& system, const CutoffFunction& chi, const GroupElt& g,
                        const AssembleOptions& options);

/// Pairing with a truncation note when supp(psi) leaves the orbit window.
double pair_checked(const DeltaComb& comb, const TestFunction& psi, const OrbitWindow& window,
                    std::vector<std::string>* warnings);

}  // namespace equitrace

#pragma once

#include <array>
#include <string>
#include <vector>

#include "equitrace/flow.hpp"
#include "equitrace/geometry.hpp"
#include "equitrace/trace.hpp"

namespace equitrace {

/// Gaussian mollification of the delta kernel on the graph of the flow.
struct MollifierSpec {
  std::vector<double> ladder{0.08, 0.04, 0.02};  // strictly decreasing widths
  double grid_factor = 4.0;  // quadrature spacing <= eps / grid_factor
  double cut_sigmas = 6.0;   // gaussian truncated beyond this many widths
  long budget = 200'000'000;  // integrand evaluations per ladder rung
  long radius = 8;            // word-length radius for coset representatives
  int threads = 1;
};

struct MollifiedResult {
  std::vector<double> eps;
  std::vector<double> values;
  std::vector<long> evaluations;
  std::vector<long> active_nodes;
  double extrapolate = 0.0;
  double order = 2.0;  // empirical convergence order used for extrapolation
};

/// Sum over coset representatives h of the double integral of
/// chi(m) psi(t) tr(rho A F_t^{-1}) g_eps(delta^{-1} phi_t(x^{-1} m) - m)
/// with x = h g h^{-1}, for one width.
double mollified_value(const CoverSystem& system, const CutoffFunction& chi, const GroupElt& g,
                       const TestFunction& psi, double eps, const MollifierSpec& spec, long* evaluations = nullptr,
                       long* active_nodes = nullptr);

/// Ladder values and a Richardson extrapolate toward eps -> 0.
MollifiedResult mollified_trace(const CoverSystem& system, const CutoffFunction& chi, const GroupElt& g,
                                const TestFunction& psi, const MollifierSpec& spec);

/// Richardson extrapolation of three values at eps, eps/2, eps/4 with an
/// empirical order estimate; throws NonConvergentLadder when the differences
/// grow.
std::pair<double, double> richardson(double v1, double v2, double v3);

struct CoveringTerm {
  GroupElt element;
  std::string payload;
  double pairing = 0.0;
  size_t atoms = 0;
};

struct CoveringReport {
  double lhs = 0.0;
  double rhs = 0.0;
  double discrepancy = 0.0;
  bool exact = false;
  long radius = 0;
  double reach = 0.0;
  size_t reachable_elements = 0;
  size_t omitted_reachable = 0;  // reachable elements in the three shells past the radius
  std::vector<CoveringTerm> terms;
  std::vector<std::string> warnings;
};

/// Compares the classical trace downstairs (trivial group on the quotient
/// model) with the sum over deck elements of the equivariant traces upstairs.
CoveringReport covering_check(const CoverSystem& upstairs, const CutoffFunction& chi_up,
                              const AssembleOptions& up_options, const CoverSystem& downstairs,
                              const CutoffFunction& chi_down, const AssembleOptions& down_options,
                              const TestFunction& psi, long radius);

/// Elements of the upstairs group within `radius` whose displacement on
/// supp(chi) can be bridged by a flow time in supp(psi).
bool reachable(const CoverSystem& system, const CutoffFunction& chi, const GroupElt& x, double reach);

struct CatmapOrbit {
  int period = 0;                     // primitive period d
  long det_one_minus_a_d = 0;         // |det(I - A^d)|
  std::vector<std::array<long, 2>> points;  // numerators over the common denominator
};

struct CatmapFixedPoints {
  int n = 0;
  long det = 0;          // |det(A^n - I)|
  long denominator = 0;  // points are numerators / denominator in [0, 1)^2
  std::vector<std::array<long, 2>> fixed_points;
  std::vector<CatmapOrbit> orbits;
  /// Predicted comb weight at l = n: sum over orbits of d / |det(I - A^n)|.
  double predicted_weight = 0.0;
};

/// Fixed points of A^n on the torus for A = [[2,1],[1,1]] in exact integer
/// arithmetic, grouped into A-orbits.
CatmapFixedPoints catmap_fixed_points(int n);

}  // namespace equitrace

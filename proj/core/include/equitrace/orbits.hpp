#pragma once

#include <vector>

#include "equitrace/flow.hpp"
#include "equitrace/geometry.hpp"

namespace equitrace {

enum class OrbitKind { Periodic, ProperLine };

const char* to_string(OrbitKind kind);

/// A flow curve with phi_l(m0) = delta x m0, where delta is the deck element
/// (identity without a quotient).
struct DelocalizedOrbit {
  GroupElt x;
  double l = 0.0;
  Point m0;
  OrbitKind kind = OrbitKind::ProperLine;
  double t_sharp = 0.0;  // primitive period, periodic kind only
  double residual = 0.0;
  DeckElt deck;
};

struct PoincareData {
  Mat p;
  double det_one_minus_p = 1.0;
  bool nondegenerate = true;
  double eigen_residual = 0.0;  // |A_full u - u|
};

struct OrbitWindow {
  double l_min = 0.0;
  double l_max = 0.0;
  bool contains(double l) const { return l >= l_min && l <= l_max; }
};

/// Seeds: a tensor grid of base points times `l_count` period guesses.
struct SeedGrid {
  Box box;
  std::vector<int> counts;
  int l_count = 5;
};

struct RefineResult {
  enum class Status { Converged, NoConvergence, SingularJacobian };
  Status status = Status::NoConvergence;
  DelocalizedOrbit orbit;
  std::vector<double> residuals;  // one entry per Newton iterate
  int iterations = 0;
};

const char* to_string(RefineResult::Status status);

struct SearchStats {
  size_t seeds = 0;
  size_t converged = 0;
  size_t no_convergence = 0;
  size_t singular = 0;
  size_t outside_window = 0;
  size_t duplicates = 0;
};

inline constexpr double kResidualTolerance = 1e-9;
inline constexpr double kDedupPeriod = 1e-7;
inline constexpr double kDedupCurve = 1e-6;
inline constexpr double kNondegeneracyThreshold = 1e-8;
inline constexpr int kMaxNewtonIterations = 50;

/// |delta^{-1} phi_l(m) - x m| with delta the nearest deck element.
double orbit_residual(const CoverSystem& system, const GroupElt& x, double l, const Point& m,
                      DeckElt* deck = nullptr);

/// Damped Newton on (m, l) with a phase condition pinning the time shift.
RefineResult refine(const CoverSystem& system, const Point& m_seed, double l_seed, const GroupElt& x);

/// One representative per time-shift class, sorted by (l, m0).
std::vector<DelocalizedOrbit> find_orbits(const CoverSystem& system, const GroupElt& x, const OrbitWindow& window,
                                          const SeedGrid& seeds, int threads = 1, SearchStats* stats = nullptr);

/// Linearized delocalized Poincare map at the orbit's base point.
PoincareData poincare(const CoverSystem& system, const DelocalizedOrbit& orbit,
                      double threshold = kNondegeneracyThreshold);

/// The same orbit with base point moved to gamma(shift).
DelocalizedOrbit shift_orbit(const CoverSystem& system, const DelocalizedOrbit& orbit, double shift);

/// Integral of chi along one injective sweep of the orbit (T_gamma).
double primitive_period(const CoverSystem& system, const DelocalizedOrbit& orbit, const CutoffFunction& chi);

/// Maps (x, l)-orbits to (h x h^{-1}, l)-orbits with base points h m0.
std::vector<DelocalizedOrbit> conjugate_orbits(const CoverSystem& system, const GroupElt& h,
                                               const std::vector<DelocalizedOrbit>& orbits);

/// Adds the translates z gamma, for z within `radius` commuting with x, whose
/// curves meet supp(chi) and are not yet listed. A seed box only sees the
/// curves through it; the orbit sum needs every curve meeting the cutoff.
std::vector<DelocalizedOrbit> complete_orbits(const CoverSystem& system, const CutoffFunction& chi,
                                              const GroupElt& x, const std::vector<DelocalizedOrbit>& orbits,
                                              long radius);

/// Distance from p to the curve of `orbit`, with deck identification, over
/// the sweep [-reach, reach] (proper lines) or one period (periodic kind).
double curve_distance(const CoverSystem& system, const DelocalizedOrbit& orbit, const Point& p, double reach);

}  // namespace equitrace

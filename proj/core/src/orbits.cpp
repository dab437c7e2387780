#include "equitrace/orbits.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <spdlog/spdlog.h>

#include "equitrace/parallel.hpp"

namespace equitrace {

const char* to_string(OrbitKind kind) { return kind == OrbitKind::Periodic ? "periodic" : "proper_line"; }

const char* to_string(RefineResult::Status status) {
  switch (status) {
    case RefineResult::Status::Converged: return "Converged";
    case RefineResult::Status::NoConvergence: return "NoConvergence";
    case RefineResult::Status::SingularJacobian: return "SingularJacobian";
  }
  return "?";
}

namespace {

struct Eval {
  Vec res;  // delta^{-1} phi_l(m) - x m
  double phase = 0.0;
  double norm = 0.0;  // full norm including the phase row
  DeckElt deck;
};

Eval evaluate(Propagator& prop, const CoverSystem& sys, const GroupElt& x, const Point& m, double l,
              const Vec& u_seed, const Point& m_seed) {
  Eval e;
  const Point end = prop.flow(m, l);
  const Point xm = sys.group.act(x, m);
  e.deck = sys.quotient.nearest(end, xm);
  e.res = sys.quotient.apply_inverse(e.deck, end) - xm;
  e.phase = u_seed.dot(m - m_seed);
  e.norm = std::sqrt(e.res.squaredNorm() + e.phase * e.phase);
  return e;
}

// Smallest T = P0 / j (j = 12..1) with closure residual <= tol, where P0 =
// ord(x) |l|. Returns 0 when no divisor closes.
double detect_sharp_period(Propagator& prop, const CoverSystem& sys, const DelocalizedOrbit& o, long ord) {
  const double p0 = static_cast<double>(ord) * std::abs(o.l);
  for (int j = 12; j >= 1; --j) {
    const double t = p0 / j;
    if (t > sys.flow.t_max) continue;
    const Point end = prop.flow(o.m0, t);
    const double closure = sys.quotient.distance(end, o.m0);
    // The full period closes by construction; allow it the propagated Newton error.
    const double tol = j == 1 ? 1e-7 : kResidualTolerance;
    if (closure <= tol) return t;
  }
  return 0.0;
}

std::vector<Point> tensor_grid(const Box& box, const std::vector<int>& counts) {
  const int n = box.dim();
  std::vector<Point> pts;
  size_t total = 1;
  for (int i = 0; i < n; ++i) total *= static_cast<size_t>(std::max(1, counts[static_cast<size_t>(i)]));
  pts.reserve(total);
  std::vector<int> idx(static_cast<size_t>(n), 0);
  for (size_t t = 0; t < total; ++t) {
    Point p(n);
    for (int i = 0; i < n; ++i) {
      const int c = std::max(1, counts[static_cast<size_t>(i)]);
      const double lo = box.lo(i);
      const double hi = box.hi(i);
      p(i) = (c == 1 || hi == lo) ? (c == 1 ? 0.5 * (lo + hi) : lo) : lo + (idx[static_cast<size_t>(i)] + 0.5) * (hi - lo) / c;
    }
    pts.push_back(p);
    for (int i = n - 1; i >= 0; --i) {
      if (++idx[static_cast<size_t>(i)] < std::max(1, counts[static_cast<size_t>(i)])) break;
      idx[static_cast<size_t>(i)] = 0;
    }
  }
  return pts;
}

bool lex_less(const Point& a, const Point& b) {
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a(i) != b(i)) return a(i) < b(i);
  }
  return false;
}

}  // namespace

double orbit_residual(const CoverSystem& system, const GroupElt& x, double l, const Point& m, DeckElt* deck) {
  Propagator prop(system);
  const Point end = prop.flow(m, l);
  const Point xm = system.group.act(x, m);
  DeckElt d = system.quotient.nearest(end, xm);
  if (deck != nullptr) *deck = d;
  return (system.quotient.apply_inverse(d, end) - xm).norm();
}

RefineResult refine(const CoverSystem& sys, const Point& m_seed, double l_seed, const GroupElt& x) {
  RefineResult out;
  const int n = sys.dim;
  Propagator prop(sys);
  const Vec u_seed = sys.flow.velocity(m_seed);
  Point m = m_seed;
  double l = l_seed;
  bool singular = false;

  Eval cur = evaluate(prop, sys, x, m, l, u_seed, m_seed);
  out.residuals.push_back(cur.res.norm());
  bool polished = false;

  for (int it = 0; it <= kMaxNewtonIterations; ++it) {
    out.iterations = it;
    if (cur.res.norm() <= kResidualTolerance) {
      if (polished || cur.res.norm() == 0.0) break;
      polished = true;
    } else if (it == kMaxNewtonIterations) {
      out.status = singular ? RefineResult::Status::SingularJacobian : RefineResult::Status::NoConvergence;
      return out;
    }

    const auto st = prop.flow_with_jacobian(m, l);
    const Mat dinv = sys.quotient.inverse_jacobian(cur.deck, st.x);
    const Mat dx = sys.group.act_jacobian(x, m);
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n + 1, n + 1);
    jac.topLeftCorner(n, n) = dinv * st.jac - dx;
    jac.topRightCorner(n, 1) = dinv * sys.flow.velocity(st.x);
    jac.bottomLeftCorner(1, n) = u_seed.transpose();
    Eigen::VectorXd rhs(n + 1);
    rhs.head(n) = -cur.res;
    rhs(n) = -cur.phase;

    Eigen::VectorXd step;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(jac);
    lu.setThreshold(1e-11);
    if (lu.rank() == n + 1) {
      step = lu.solve(rhs);
      singular = false;
    } else {
      singular = true;
      step = jac.completeOrthogonalDecomposition().solve(rhs);
    }
    if (!step.allFinite()) {
      out.status = RefineResult::Status::SingularJacobian;
      return out;
    }

    double lambda = 1.0;
    bool accepted = false;
    while (lambda >= 1.0 / 1024.0) {
      const Point m_try = m + lambda * step.head(n);
      const double l_try = l + lambda * step(n);
      if (std::abs(l_try) > sys.flow.t_max) {
        lambda *= 0.5;
        continue;
      }
      Eval trial = evaluate(prop, sys, x, m_try, l_try, u_seed, m_seed);
      if (trial.norm < (1.0 - 1e-4 * lambda) * cur.norm || (polished && trial.norm <= cur.norm)) {
        m = m_try;
        l = l_try;
        cur = trial;
        accepted = true;
        break;
      }
      lambda *= 0.5;
    }
    if (!accepted) {
      if (polished) break;
      out.status = singular ? RefineResult::Status::SingularJacobian : RefineResult::Status::NoConvergence;
      return out;
    }
    out.residuals.push_back(cur.res.norm());
    if (polished) break;
  }

  DelocalizedOrbit& o = out.orbit;
  o.x = x;
  o.l = l;
  o.m0 = sys.quotient.reduce(m);
  o.residual = orbit_residual(sys, x, l, o.m0, &o.deck);
  if (o.residual > kResidualTolerance) {
    // Reduction into the fundamental domain must not spoil the solution.
    o.m0 = m;
    o.residual = orbit_residual(sys, x, l, o.m0, &o.deck);
  }
  const long ord = sys.group.order(x);
  if (ord > 0) {
    o.kind = OrbitKind::Periodic;
    o.t_sharp = detect_sharp_period(prop, sys, o, ord);
    if (o.t_sharp == 0.0) {
      out.status = RefineResult::Status::NoConvergence;
      return out;
    }
  } else {
    o.kind = OrbitKind::ProperLine;
  }
  out.status = RefineResult::Status::Converged;
  return out;
}

double curve_distance(const CoverSystem& sys, const DelocalizedOrbit& orbit, const Point& p, double reach) {
  Propagator prop(sys);
  const int n = sys.dim;
  std::vector<double> ends;
  if (orbit.kind == OrbitKind::Periodic) {
    ends.push_back(orbit.t_sharp);
  } else {
    ends.push_back(reach);
    ends.push_back(-reach);
  }
  double best = sys.quotient.distance(orbit.m0, p);
  DenseTrajectory tr;
  Point q(n);
  for (double end : ends) {
    prop.trajectory(orbit.m0, end, false, false, tr);
    auto dist = [&](double s) {
      tr.eval(s, q.data());
      return sys.quotient.distance(q, p);
    };
    const int samples = std::max(64, static_cast<int>(std::ceil(std::abs(end) / 0.01)));
    int best_i = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= samples; ++i) {
      const double d = dist(end * i / samples);
      if (d < best_d) {
        best_d = d;
        best_i = i;
      }
    }
    double a = end * std::max(0, best_i - 1) / samples;
    double b = end * std::min(samples, best_i + 1) / samples;
    if (a > b) std::swap(a, b);
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = b - g * (b - a);
    double d = a + g * (b - a);
    double fc = dist(c);
    double fd = dist(d);
    for (int it = 0; it < 80 && (b - a) > 1e-13; ++it) {
      if (fc < fd) {
        b = d;
        d = c;
        fd = fc;
        c = b - g * (b - a);
        fc = dist(c);
      } else {
        a = c;
        c = d;
        fc = fd;
        d = a + g * (b - a);
        fd = dist(d);
      }
    }
    best = std::min({best, best_d, fc, fd});
  }
  return best;
}

std::vector<DelocalizedOrbit> find_orbits(const CoverSystem& sys, const GroupElt& x, const OrbitWindow& window,
                                          const SeedGrid& seeds, int threads, SearchStats* stats) {
  if (window.l_min <= 0.0 && window.l_max >= 0.0) throw DomainError("period window must avoid 0");
  if (std::max(std::abs(window.l_min), std::abs(window.l_max)) > sys.flow.t_max) {
    throw DomainError("period window exceeds t_max");
  }
  const auto points = tensor_grid(seeds.box, seeds.counts);
  const int lc = std::max(1, seeds.l_count);
  const size_t total = points.size() * static_cast<size_t>(lc);
  std::vector<RefineResult> results(total);
  parallel_for(total, threads, [&](size_t i) {
    const Point& m = points[i / static_cast<size_t>(lc)];
    const int k = static_cast<int>(i % static_cast<size_t>(lc));
    const double l = window.l_min + (k + 0.5) * (window.l_max - window.l_min) / lc;
    results[i] = refine(sys, m, l, x);
  });

  SearchStats st;
  st.seeds = total;
  double min_speed = std::numeric_limits<double>::infinity();
  for (const auto& p : points) min_speed = std::min(min_speed, sys.flow.velocity(p).norm());
  const double diag = (seeds.box.hi - seeds.box.lo).norm();

  std::vector<DelocalizedOrbit> unique;
  for (auto& r : results) {
    switch (r.status) {
      case RefineResult::Status::NoConvergence: ++st.no_convergence; continue;
      case RefineResult::Status::SingularJacobian: ++st.singular; continue;
      case RefineResult::Status::Converged: ++st.converged; break;
    }
    const auto& c = r.orbit;
    if (!window.contains(c.l)) {
      ++st.outside_window;
      continue;
    }
    bool dup = false;
    for (const auto& u : unique) {
      if (std::abs(u.l - c.l) > kDedupPeriod) continue;
      if (sys.quotient.distance(u.m0, c.m0) <= kDedupCurve) {
        dup = true;
        break;
      }
      const double reach = std::min(sys.flow.t_max, std::abs(u.l) + (diag + 1.0) / std::max(min_speed, 1e-3));
      if (curve_distance(sys, u, c.m0, reach) <= kDedupCurve) {
        dup = true;
        break;
      }
    }
    if (dup) {
      ++st.duplicates;
      continue;
    }
    unique.push_back(c);
  }
  std::sort(unique.begin(), unique.end(), [](const DelocalizedOrbit& a, const DelocalizedOrbit& b) {
    if (a.l != b.l) return a.l < b.l;
    return lex_less(a.m0, b.m0);
  });
  spdlog::debug("find_orbits x={}: {} seeds, {} converged, {} unique, {} no-convergence, {} singular",
                sys.group.format(x), st.seeds, st.converged, unique.size(), st.no_convergence, st.singular);
  if (stats != nullptr) *stats = st;
  return unique;
}

PoincareData poincare(const CoverSystem& sys, const DelocalizedOrbit& orbit, double threshold) {
  const int n = sys.dim;
  Propagator prop(sys);
  const GroupElt xinv = sys.group.inverse(orbit.x);
  const Point y = sys.group.act(xinv, orbit.m0);
  const auto st = prop.flow_with_jacobian(y, orbit.l);
  const DeckElt d = sys.quotient.nearest(st.x, orbit.m0);
  const Mat a_full = sys.quotient.inverse_jacobian(d, st.x) * st.jac * sys.group.act_jacobian(xinv, orbit.m0);

  PoincareData pd;
  const Vec u = sys.flow.velocity(orbit.m0);
  pd.eigen_residual = (a_full * u - u).norm();
  if (n == 1) {
    pd.p = Mat(0, 0);
    pd.det_one_minus_p = 1.0;
  } else {
    // Orthonormal basis of the complement of u from a Householder reflection.
    Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(Eigen::MatrixXd(u)).householderQ();
    const Eigen::MatrixXd e = q.rightCols(n - 1);
    const Eigen::MatrixXd p = e.transpose() * Eigen::MatrixXd(a_full) * e;
    pd.p = p;
    pd.det_one_minus_p = (Eigen::MatrixXd::Identity(n - 1, n - 1) - p).determinant();
  }
  pd.nondegenerate = std::abs(pd.det_one_minus_p) >= threshold;
  return pd;
}

DelocalizedOrbit shift_orbit(const CoverSystem& sys, const DelocalizedOrbit& orbit, double shift) {
  DelocalizedOrbit o = orbit;
  o.m0 = flow(sys, orbit.m0, shift);
  o.residual = orbit_residual(sys, o.x, o.l, o.m0, &o.deck);
  return o;
}

double primitive_period(const CoverSystem& sys, const DelocalizedOrbit& orbit, const CutoffFunction& chi) {
  using GK = boost::math::quadrature::gauss_kronrod<double, 15>;
  Propagator prop(sys);
  const int n = sys.dim;
  DenseTrajectory tr;
  Point q(n);
  auto integrate = [&](double end) {
    prop.trajectory(orbit.m0, end, false, false, tr);
    auto f = [&](double s) {
      tr.eval(s, q.data());
      return chi(q);
    };
    const int panels = std::max(16, static_cast<int>(std::ceil(std::abs(end) / 0.05)));
    KahanSum sum;
    for (int i = 0; i < panels; ++i) {
      const double a = end * i / panels;
      const double b = end * (i + 1) / panels;
      sum.add(GK::integrate(f, a, b, 4, 1e-12));
    }
    return sum.value();
  };

  if (orbit.kind == OrbitKind::Periodic) return std::abs(integrate(orbit.t_sharp));

  // Grow the sweep until the window vanishes on the outer half at both ends.
  double s = std::max(1.0, std::abs(orbit.l));
  for (;;) {
    if (s > sys.flow.t_max) {
      throw SupportEscape("cutoff support not left along the orbit within t_max");
    }
    bool clear = true;
    for (double dir : {1.0, -1.0}) {
      prop.trajectory(orbit.m0, dir * s, false, false, tr);
      for (int i = 0; i <= 64 && clear; ++i) {
        tr.eval(dir * s * (0.5 + 0.5 * i / 64.0), q.data());
        if (chi.window(q) != 0.0) clear = false;
      }
    }
    if (clear) break;
    s *= 2.0;
  }
  if (s > sys.flow.t_max) s = sys.flow.t_max;
  return integrate(s) - integrate(-s);
}

std::vector<DelocalizedOrbit> conjugate_orbits(const CoverSystem& sys, const GroupElt& h,
                                               const std::vector<DelocalizedOrbit>& orbits) {
  std::vector<DelocalizedOrbit> out;
  out.reserve(orbits.size());
  const GroupElt hinv = sys.group.inverse(h);
  for (const auto& o : orbits) {
    DelocalizedOrbit c = o;
    c.x = sys.group.compose(sys.group.compose(h, o.x), hinv);
    c.m0 = sys.quotient.reduce(sys.group.act(h, o.m0));
    c.residual = orbit_residual(sys, c.x, c.l, c.m0, &c.deck);
    out.push_back(c);
  }
  return out;
}

std::vector<DelocalizedOrbit> complete_orbits(const CoverSystem& sys, const CutoffFunction& chi, const GroupElt& x,
                                              const std::vector<DelocalizedOrbit>& orbits, long radius) {
  const auto kind = sys.group.kind();
  if (kind == GroupKind::Trivial || kind == GroupKind::TranslationLine) return orbits;
  std::vector<GroupElt> centralizer;
  for (const auto& z : sys.group.ball(radius)) {
    if (sys.group.is_identity(z)) continue;
    if (sys.group.compose(z, x) == sys.group.compose(x, z)) centralizer.push_back(z);
  }
  const int n = sys.dim;
  const Box& box = chi.support_box();
  auto in_box = [&](const Point& q) {
    for (int i = 0; i < n; ++i) {
      if (q(i) < box.lo(i) || q(i) > box.hi(i)) return false;
    }
    return true;
  };

  std::vector<DelocalizedOrbit> out = orbits;
  Propagator prop(sys);
  DenseTrajectory tr;
  Point q(n);
  for (const auto& o : orbits) {
    // x^k gamma is gamma shifted in time, so one period sweeps every translate.
    const double end = o.kind == OrbitKind::Periodic ? o.t_sharp : std::abs(o.l);
    prop.trajectory(o.m0, end, false, false, tr);
    const int samples = std::max(64, static_cast<int>(std::ceil(end / 0.005)));
    for (const auto& z : centralizer) {
      double hit = -1.0;
      for (int i = 0; i <= samples && hit < 0.0; ++i) {
        const double t = end * i / samples;
        tr.eval(t, q.data());
        const Point p = sys.quotient.reduce(sys.group.act(z, q));
        if (in_box(p) && chi.window(p) != 0.0) hit = t;
      }
      if (hit < 0.0) continue;
      DelocalizedOrbit c = shift_orbit(sys, conjugate_orbits(sys, z, {o})[0], hit);
      c.m0 = sys.quotient.reduce(c.m0);
      c.residual = orbit_residual(sys, c.x, c.l, c.m0, &c.deck);
      const double reach = std::min(sys.flow.t_max, 2.0 * end + (box.hi - box.lo).norm() / std::max(sys.flow.velocity(c.m0).norm(), 1e-3));
      bool dup = false;
      for (const auto& u : out) {
        if (std::abs(u.l - c.l) > kDedupPeriod) continue;
        if (curve_distance(sys, u, c.m0, reach) <= kDedupCurve) {
          dup = true;
          break;
        }
      }
      if (!dup) out.push_back(c);
    }
  }
  std::sort(out.begin(), out.end(), [](const DelocalizedOrbit& a, const DelocalizedOrbit& b) {
    if (a.l != b.l) return a.l < b.l;
    return lex_less(a.m0, b.m0);
  });
  if (out.size() > orbits.size()) {
    spdlog::debug("complete_orbits x={}: {} translates added", sys.group.format(x), out.size() - orbits.size());
  }
  return out;
}

}  // namespace equitrace

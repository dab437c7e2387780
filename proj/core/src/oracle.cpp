#include "equitrace/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include "equitrace/parallel.hpp"

namespace equitrace {

namespace {

struct Cell {
  std::array<int, kMaxDim> idx{};
  double t_lo = 0.0;  // time window in which the cell may be active
  double t_hi = 0.0;
};

double max_speed(const CoverSystem& sys, const Box& box) {
  Box wide = box;
  wide.lo.array() -= 1.0;
  wide.hi.array() += 1.0;
  double s = 0.0;
  for (const auto& p : sample_grid(wide, std::max(3, static_cast<int>(std::pow(2000.0, 1.0 / box.dim()))))) {
    s = std::max(s, sys.flow.velocity(p).norm());
  }
  return 1.1 * s;
}

// Time segments covering [a, b], each integrated from t = 0.
std::vector<std::pair<double, double>> time_segments(double a, double b) {
  std::vector<std::pair<double, double>> segs;
  if (b > 0.0) segs.emplace_back(std::max(a, 0.0), b);
  if (a < 0.0) segs.emplace_back(a, std::min(b, 0.0));
  return segs;
}

class MollifiedIntegrator {
 public:
  MollifiedIntegrator(const CoverSystem& sys, const CutoffFunction& chi, const GroupElt& x, const TestFunction& psi,
                      double eps, const MollifierSpec& spec)
      : sys_(sys), chi_(chi), x_(x), xinv_(sys.group.inverse(x)), psi_(psi), eps_(eps), spec_(spec) {
    box_ = chi.support_box();
    n_ = sys.dim;
    for (int i = 0; i < n_; ++i) {
      if (!(box_.hi(i) > box_.lo(i))) throw DomainError("mollified quadrature needs a full-dimensional support box");
    }
    const auto [a, b] = psi.support();
    t_lo_ = a;
    t_hi_ = b;
    umax_ = max_speed(sys, box_);
    const double h = eps / spec.grid_factor;
    double wmax = 0.0;
    for (int i = 0; i < n_; ++i) wmax = std::max(wmax, box_.hi(i) - box_.lo(i));
    levels_ = 0;
    while (wmax / std::ldexp(1.0, levels_) > h) ++levels_;
    nt_ = std::max(1L, static_cast<long>(std::ceil((t_hi_ - t_lo_) * umax_ / h)));
    ht_ = (t_hi_ - t_lo_) / static_cast<double>(nt_);
    cut_ = spec.cut_sigmas * eps;
    norm_ = std::pow(2.0 * M_PI * eps * eps, -0.5 * n_);
    fiber_ = !sys.bundle.is_trivial_line();
    transport_ = !sys.bundle.transport_trivial();
  }

  double run(long* evaluations, long* active_nodes) {
    const int start = std::min(levels_, 4);
    std::vector<Cell> cells;
    {
      const int per = 1 << start;
      long total = 1;
      for (int i = 0; i < n_; ++i) total *= per;
      cells.resize(static_cast<size_t>(total));
      for (long c = 0; c < total; ++c) {
        cells[static_cast<size_t>(c)].t_lo = t_lo_;
        cells[static_cast<size_t>(c)].t_hi = t_hi_;
        long rem = c;
        for (int i = n_ - 1; i >= 0; --i) {
          cells[static_cast<size_t>(c)].idx[static_cast<size_t>(i)] = static_cast<int>(rem % per);
          rem /= per;
        }
      }
    }
    long evals = 0;
    for (int level = start; level < levels_; ++level) {
      std::vector<char> active(cells.size(), 0);
      std::vector<long> steps(cells.size(), 0);
      parallel_for(cells.size(), spec_.threads, [&](size_t i) {
        active[i] = screen(cells[i], level, &steps[i]) ? 1 : 0;
      });
      evals += std::accumulate(steps.begin(), steps.end(), 0L);
      std::vector<Cell> next;
      const int kids = 1 << n_;
      for (size_t i = 0; i < cells.size(); ++i) {
        if (!active[i]) continue;
        for (int k = 0; k < kids; ++k) {
          Cell c;
          c.t_lo = cells[i].t_lo;
          c.t_hi = cells[i].t_hi;
          for (int d = 0; d < n_; ++d) {
            c.idx[static_cast<size_t>(d)] = 2 * cells[i].idx[static_cast<size_t>(d)] + ((k >> (n_ - 1 - d)) & 1);
          }
          next.push_back(c);
        }
      }
      cells.swap(next);
      double work = static_cast<double>(evals);
      for (const auto& c : cells) work += static_cast<double>(time_nodes(c));
      if (work > static_cast<double>(spec_.budget)) {
        throw QuadratureBudgetExceeded(fmt::format(
            "eps = {}: {} active quadrature nodes need {:.3g} evaluations, over the budget of {}", eps_,
            cells.size(), work, spec_.budget));
      }
    }
    std::vector<double> parts(cells.size(), 0.0);
    std::vector<long> steps(cells.size(), 0);
    parallel_for(cells.size(), spec_.threads, [&](size_t i) { parts[i] = node_value(cells[i], &steps[i]); });
    evals += std::accumulate(steps.begin(), steps.end(), 0L);
    if (evaluations != nullptr) *evaluations += evals;
    if (active_nodes != nullptr) *active_nodes += static_cast<long>(cells.size());
    double vol = ht_;
    for (int i = 0; i < n_; ++i) vol *= (box_.hi(i) - box_.lo(i)) / std::ldexp(1.0, levels_);
    return vol * tree_sum(std::move(parts));
  }

 private:
  Point center(const Cell& c, int level, double* radius) const {
    Point m(n_);
    double r2 = 0.0;
    for (int i = 0; i < n_; ++i) {
      const double w = (box_.hi(i) - box_.lo(i)) / std::ldexp(1.0, level);
      m(i) = box_.lo(i) + (c.idx[static_cast<size_t>(i)] + 0.5) * w;
      r2 += 0.25 * w * w;
    }
    if (radius != nullptr) *radius = std::sqrt(r2);
    return m;
  }

  std::pair<long, long> time_range(const Cell& c) const {
    const long j0 = std::max(0L, static_cast<long>(std::floor((c.t_lo - t_lo_) / ht_ - 0.5)));
    const long j1 = std::min(nt_, static_cast<long>(std::ceil((c.t_hi - t_lo_) / ht_ + 0.5)));
    return {j0, j1};
  }

  long time_nodes(const Cell& c) const {
    const auto [j0, j1] = time_range(c);
    return std::max(0L, j1 - j0);
  }

  // Conservative test whether the gaussian can be nonzero anywhere in the
  // cell; narrows the cell's time window to the active time cells.
  bool screen(Cell& cell, int level, long* steps) const {
    double r = 0.0;
    const Point mc = center(cell, level, &r);
    const WindowSpec& w = chi_.spec();
    if (w.kind == WindowSpec::Kind::Bump && (mc - w.center).norm() > w.radius + r) return false;
    const Point y = sys_.group.act(xinv_, mc);
    const Mat dxinv = sys_.group.act_jacobian(xinv_, mc);
    Propagator prop(sys_);
    DenseTrajectory tr;
    double buf[kMaxDim + kMaxDim * kMaxDim];
    const double span = t_hi_ - t_lo_;
    const long count = std::max(1L, static_cast<long>(std::ceil(span * umax_ / std::max(2.0 * r, ht_ * umax_))));
    const double htc = span / static_cast<double>(count);
    double hit_lo = t_hi_;
    double hit_hi = t_lo_;
    for (const auto& [a, b] : time_segments(cell.t_lo, cell.t_hi)) {
      prop.trajectory(y, std::abs(b) >= std::abs(a) ? b : a, true, false, tr);
      *steps += static_cast<long>(tr.steps());
      for (long j = 0; j < count; ++j) {
        const double t = t_lo_ + (static_cast<double>(j) + 0.5) * htc;
        if (t + 0.5 * htc < cell.t_lo || t - 0.5 * htc > cell.t_hi) continue;
        if (t < a - 0.5 * htc || t > b + 0.5 * htc) continue;
        tr.eval(std::clamp(t, std::min(tr.t_begin(), tr.t_end()), std::max(tr.t_begin(), tr.t_end())), buf);
        const auto st = prop.decode(buf, true, false);
        const DeckElt d = sys_.quotient.nearest(st.x, mc);
        const Mat dinv = sys_.quotient.inverse_jacobian(d, st.x);
        const Vec dd = sys_.quotient.apply_inverse(d, st.x) - mc;
        const Mat dm = dinv * st.jac * dxinv - Mat::Identity(n_, n_);
        const double dt = (dinv * sys_.flow.velocity(st.x)).norm();
        const double bound = dd.norm() - 2.0 * (dm.norm() * r + dt * 0.5 * htc) - r;
        if (bound < cut_) {
          hit_lo = std::min(hit_lo, t - 0.5 * htc);
          hit_hi = std::max(hit_hi, t + 0.5 * htc);
        }
      }
    }
    if (hit_hi < hit_lo) return false;
    cell.t_lo = std::max(cell.t_lo, hit_lo);
    cell.t_hi = std::min(cell.t_hi, hit_hi);
    return true;
  }

  double node_value(const Cell& cell, long* steps) const {
    const Point m = center(cell, levels_, nullptr);
    const double c = chi_(m);
    if (c == 0.0) return 0.0;
    const Point y = sys_.group.act(xinv_, m);
    Propagator prop(sys_);
    DenseTrajectory tr;
    double buf[kMaxDim + kMaxDim * kMaxDim];
    Mat rho_a;
    if (fiber_) rho_a = sys_.bundle.fiber_action(sys_.group, x_, y) * sys_.bundle.endomorphism(y);
    KahanSum sum;
    const auto [j0, j1] = time_range(cell);
    for (const auto& [a, b] : time_segments(t_lo_ + static_cast<double>(j0) * ht_, t_lo_ + static_cast<double>(j1) * ht_)) {
      prop.trajectory(y, std::abs(b) >= std::abs(a) ? b : a, false, transport_, tr);
      *steps += static_cast<long>(tr.steps()) + (j1 - j0);
      for (long j = j0; j < j1; ++j) {
        const double t = t_lo_ + (static_cast<double>(j) + 0.5) * ht_;
        if (t < a || t > b) continue;
        tr.eval(t, buf);
        const auto st = prop.decode(buf, false, transport_);
        const DeckElt d = sys_.quotient.nearest(st.x, m);
        const double r2 = (sys_.quotient.apply_inverse(d, st.x) - m).squaredNorm();
        if (r2 > cut_ * cut_) continue;
        const double p = psi_(t);
        if (p == 0.0) continue;
        double f = 1.0;
        if (fiber_) f = transport_ ? st.fiber.partialPivLu().solve(rho_a).trace() : rho_a.trace();
        sum.add(p * f * std::exp(-0.5 * r2 / (eps_ * eps_)));
      }
    }
    return c * norm_ * sum.value();
  }

  const CoverSystem& sys_;
  const CutoffFunction& chi_;
  GroupElt x_;
  GroupElt xinv_;
  const TestFunction& psi_;
  double eps_;
  const MollifierSpec& spec_;
  Box box_;
  int n_ = 0;
  int levels_ = 0;
  long nt_ = 0;
  double ht_ = 0.0;
  double t_lo_ = 0.0;
  double t_hi_ = 0.0;
  double umax_ = 1.0;
  double cut_ = 0.0;
  double norm_ = 1.0;
  bool fiber_ = false;
  bool transport_ = false;
};

}  // namespace

double mollified_value(const CoverSystem& system, const CutoffFunction& chi, const GroupElt& g,
                       const TestFunction& psi, double eps, const MollifierSpec& spec, long* evaluations,
                       long* active_nodes) {
  if (!(eps > 0.0)) throw DomainError("mollifier width must be positive");
  // The oracle only needs the integrand to the accuracy of the quadrature.
  CoverSystem sys = system;
  sys.flow.ode.rtol = std::max(sys.flow.ode.rtol, 1e-9);
  sys.flow.ode.atol = std::max(sys.flow.ode.atol, 1e-11);
  KahanSum total;
  for (const auto& h : sys.group.coset_representatives(g, spec.radius)) {
    const GroupElt x = sys.group.compose(sys.group.compose(h, g), sys.group.inverse(h));
    MollifiedIntegrator integ(sys, chi, x, psi, eps, spec);
    total.add(integ.run(evaluations, active_nodes));
  }
  return total.value();
}

std::pair<double, double> richardson(double v1, double v2, double v3) {
  const double d1 = v1 - v2;
  const double d2 = v2 - v3;
  if (std::abs(d2) > std::abs(d1) && std::abs(d2) > 1e-12) {
    throw NonConvergentLadder(fmt::format("ladder differences grow: {} then {}", d1, d2));
  }
  double p = 2.0;
  if (d2 != 0.0 && d1 / d2 > 0.0) {
    const double est = std::log2(d1 / d2);
    if (est >= 0.5 && est <= 4.0) p = est;
  }
  return {v3 - d2 / (std::pow(2.0, p) - 1.0), p};
}

MollifiedResult mollified_trace(const CoverSystem& system, const CutoffFunction& chi, const GroupElt& g,
                                const TestFunction& psi, const MollifierSpec& spec) {
  if (spec.ladder.empty()) throw DomainError("empty mollifier ladder");
  for (size_t i = 1; i < spec.ladder.size(); ++i) {
    if (!(spec.ladder[i] < spec.ladder[i - 1])) throw DomainError("mollifier ladder must be strictly decreasing");
  }
  MollifiedResult res;
  for (double eps : spec.ladder) {
    long evals = 0;
    long nodes = 0;
    const double v = mollified_value(system, chi, g, psi, eps, spec, &evals, &nodes);
    spdlog::debug("mollified eps={} value={} evaluations={} nodes={}", eps, v, evals, nodes);
    res.eps.push_back(eps);
    res.values.push_back(v);
    res.evaluations.push_back(evals);
    res.active_nodes.push_back(nodes);
  }
  const size_t k = res.values.size();
  if (k >= 3) {
    const bool halving = std::abs(res.eps[k - 2] / res.eps[k - 1] - 2.0) < 1e-9 &&
                         std::abs(res.eps[k - 3] / res.eps[k - 2] - 2.0) < 1e-9;
    if (halving) {
      std::tie(res.extrapolate, res.order) = richardson(res.values[k - 3], res.values[k - 2], res.values[k - 1]);
    } else {
      res.extrapolate = res.values.back();
    }
  } else {
    res.extrapolate = res.values.back();
  }
  return res;
}

// ---------------------------------------------------------------------------
// Covering decomposition

bool reachable(const CoverSystem& sys, const CutoffFunction& chi, const GroupElt& x, double reach) {
  const Box& box = chi.support_box();
  const int n = box.dim();
  const int per = std::max(3, static_cast<int>(std::pow(4000.0, 1.0 / n)));
  double spacing = 0.0;
  for (int i = 0; i < n; ++i) spacing = std::max(spacing, (box.hi(i) - box.lo(i)) / per);
  const double half_diag = 0.5 * spacing * std::sqrt(static_cast<double>(n));
  for (const auto& p : sample_grid(box, per)) {
    if (chi.window(p) == 0.0 && (p - chi.spec().center).norm() > chi.spec().radius + half_diag) continue;
    const Point q = sys.group.act(x, p);
    const Mat jac = sys.group.act_jacobian(x, p);
    if (sys.quotient.active()) {
      const double lip = jac.norm() + std::sqrt(static_cast<double>(n));
      if (sys.quotient.distance(q, p) <= reach + lip * half_diag) return true;
      continue;
    }
    // Per coordinate, so that expanding directions do not swamp a shift.
    bool near = true;
    for (int i = 0; i < n && near; ++i) {
      near = std::abs(q(i) - p(i)) <= reach + (jac.row(i).norm() + 1.0) * half_diag;
    }
    if (near) return true;
  }
  return false;
}

CoveringReport covering_check(const CoverSystem& up, const CutoffFunction& chi_up, const AssembleOptions& up_options,
                              const CoverSystem& down, const CutoffFunction& chi_down,
                              const AssembleOptions& down_options, const TestFunction& psi, long radius) {
  if (up.group.kind() != GroupKind::FreeAbelian && up.group.kind() != GroupKind::Finite &&
      up.group.kind() != GroupKind::Trivial) {
    throw DomainError("covering check needs a discrete deck group upstairs");
  }
  if (down.group.kind() != GroupKind::Trivial) throw DomainError("the quotient model must carry the trivial group");
  CoveringReport rep;
  rep.radius = radius;
  const auto [a, b] = psi.support();
  rep.reach = std::max(std::abs(a), std::abs(b)) * max_speed(up, chi_up.support_box());

  const auto down_comb = assemble(down, chi_down, down.group.identity(), down_options);
  rep.lhs = pair_checked(down_comb.comb, psi, down_options.window, &rep.warnings);

  KahanSum rhs;
  for (long r = 0; r <= radius; ++r) {
    for (const auto& x : up.group.shell(r)) {
      if (!reachable(up, chi_up, x, rep.reach)) continue;
      ++rep.reachable_elements;
      const auto res = assemble(up, chi_up, x, up_options);
      CoveringTerm term;
      term.element = x;
      term.payload = up.group.format(x);
      term.pairing = pair_checked(res.comb, psi, up_options.window, &rep.warnings);
      term.atoms = res.comb.atoms.size();
      rhs.add(term.pairing);
      if (term.atoms > 0) rep.terms.push_back(std::move(term));
    }
  }
  rep.rhs = rhs.value();
  rep.discrepancy = std::abs(rep.lhs - rep.rhs);
  for (long r = radius + 1; r <= radius + 3; ++r) {
    for (const auto& x : up.group.shell(r)) {
      if (reachable(up, chi_up, x, rep.reach)) ++rep.omitted_reachable;
    }
  }
  rep.exact = rep.omitted_reachable == 0;
  if (!rep.exact) {
    rep.warnings.push_back(fmt::format("NotExact: {} reachable deck elements beyond radius {}", rep.omitted_reachable,
                                       radius));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Cat map

namespace {

using I2 = std::array<std::array<long, 2>, 2>;

I2 mul(const I2& a, const I2& b) {
  I2 c{};
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
  }
  return c;
}

I2 power(const I2& a, int n) {
  I2 r{{{1, 0}, {0, 1}}};
  for (int i = 0; i < n; ++i) r = mul(r, a);
  return r;
}

long mod(long a, long m) {
  const long r = a % m;
  return r < 0 ? r + m : r;
}

// Extended gcd: returns g = gcd(a, b) >= 0 with a x + b y = g.
long ext_gcd(long a, long b, long& x, long& y) {
  if (b == 0) {
    x = a >= 0 ? 1 : -1;
    y = 0;
    return std::abs(a);
  }
  long x1 = 0;
  long y1 = 0;
  const long g = ext_gcd(b, a % b, x1, y1);
  x = y1;
  y = x1 - (a / b) * y1;
  return g;
}

}  // namespace

CatmapFixedPoints catmap_fixed_points(int n) {
  if (n < 1 || n > 12) throw DomainError("catmap_fixed_points needs 1 <= n <= 12");
  const I2 a{{{2, 1}, {1, 1}}};
  I2 m = power(a, n);
  m[0][0] -= 1;
  m[1][1] -= 1;
  const long det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
  CatmapFixedPoints out;
  out.n = n;
  out.det = std::abs(det);
  out.denominator = out.det;

  // Lower-triangular basis [[p, 0], [q, s]] of the column lattice M Z^2.
  long x = 0;
  long y = 0;
  const long p = ext_gcd(m[0][0], m[0][1], x, y);
  const long q0 = m[1][0] * x + m[1][1] * y;
  const long s = std::abs(m[1][0] * (m[0][1] / p) - m[1][1] * (m[0][0] / p));
  if (p * s != out.det) throw DomainError("lattice basis does not match the determinant");

  // Fixed points v = M^{-1} k = adj(M) k / det for k over Z^2 / M Z^2.
  const I2 adj{{{m[1][1], -m[0][1]}, {-m[1][0], m[0][0]}}};
  const long sign = det < 0 ? -1 : 1;
  (void)q0;
  for (long i = 0; i < p; ++i) {
    for (long j = 0; j < s; ++j) {
      std::array<long, 2> v{mod(sign * (adj[0][0] * i + adj[0][1] * j), out.det),
                            mod(sign * (adj[1][0] * i + adj[1][1] * j), out.det)};
      out.fixed_points.push_back(v);
    }
  }
  std::sort(out.fixed_points.begin(), out.fixed_points.end());
  out.fixed_points.erase(std::unique(out.fixed_points.begin(), out.fixed_points.end()), out.fixed_points.end());
  if (static_cast<long>(out.fixed_points.size()) != out.det) {
    throw DomainError("fixed-point enumeration produced duplicate coset representatives");
  }

  std::vector<char> seen(out.fixed_points.size(), 0);
  auto index_of = [&](const std::array<long, 2>& v) {
    return static_cast<size_t>(std::lower_bound(out.fixed_points.begin(), out.fixed_points.end(), v) -
                               out.fixed_points.begin());
  };
  for (size_t i = 0; i < out.fixed_points.size(); ++i) {
    if (seen[i]) continue;
    CatmapOrbit orb;
    std::array<long, 2> v = out.fixed_points[i];
    do {
      seen[index_of(v)] = 1;
      orb.points.push_back(v);
      v = {mod(a[0][0] * v[0] + a[0][1] * v[1], out.det), mod(a[1][0] * v[0] + a[1][1] * v[1], out.det)};
    } while (v != out.fixed_points[i]);
    orb.period = static_cast<int>(orb.points.size());
    I2 ad = power(a, orb.period);
    orb.det_one_minus_a_d = std::abs((1 - ad[0][0]) * (1 - ad[1][1]) - ad[0][1] * ad[1][0]);
    out.orbits.push_back(std::move(orb));
  }
  KahanSum w;
  for (const auto& orb : out.orbits) w.add(static_cast<double>(orb.period) / static_cast<double>(out.det));
  out.predicted_weight = w.value();
  return out;
}

}  // namespace equitrace

#include "equitrace/trace.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include "equitrace/parallel.hpp"

namespace equitrace {

// ---------------------------------------------------------------------------
// TestFunction

namespace {

double parse_number(const std::string& text, const std::string& spec) {
  size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    throw DomainError("bad number '" + text + "' in test function '" + spec + "'");
  }
  if (used != text.size() || !std::isfinite(v)) {
    throw DomainError("bad number '" + text + "' in test function '" + spec + "'");
  }
  return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

// Splits at '+' signs that are not part of an exponent.
std::vector<std::string> split_terms(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (std::isspace(static_cast<unsigned char>(c))) continue;
    if (c == '+' && !cur.empty() && cur.back() != 'e' && cur.back() != 'E' && cur.back() != '*' &&
        cur.back() != ':') {
      out.push_back(cur);
      cur.clear();
      continue;
    }
    cur.push_back(c);
  }
  out.push_back(cur);
  return out;
}

double bump_at(double x) {
  const double r2 = x * x;
  return r2 < 1.0 ? std::exp(-1.0 / (1.0 - r2)) : 0.0;
}

std::string num(double v) { return fmt::format("{}", v); }

}  // namespace

void TestFunction::validate(const Term& t) {
  if (!(t.width > 0.0)) throw DomainError("test function width must be positive");
  if (t.family == Family::Gaussian) {
    if (std::abs(t.center) < 6.0 * t.width) {
      throw DomainError("gaussian test functions need |center| >= 6 width to stay away from t = 0");
    }
  } else if (std::abs(t.center) < t.width) {
    throw DomainError("bump test functions must be supported away from t = 0");
  }
}

TestFunction TestFunction::gaussian(double center, double width) {
  TestFunction f;
  f.terms_.push_back({1.0, Family::Gaussian, center, width, {}});
  validate(f.terms_.back());
  return f;
}

TestFunction TestFunction::bump(double center, double radius) {
  TestFunction f;
  f.terms_.push_back({1.0, Family::Bump, center, radius, {}});
  validate(f.terms_.back());
  return f;
}

TestFunction TestFunction::polybump(double center, double radius, std::vector<double> coeffs) {
  TestFunction f;
  f.terms_.push_back({1.0, Family::PolyBump, center, radius, std::move(coeffs)});
  validate(f.terms_.back());
  return f;
}

TestFunction TestFunction::parse(const std::string& spec) {
  TestFunction out;
  for (const auto& raw : split_terms(spec)) {
    if (raw.empty()) throw DomainError("empty term in test function '" + spec + "'");
    std::string body = raw;
    double coef = 1.0;
    const auto star = raw.find('*');
    if (star != std::string::npos) {
      coef = parse_number(raw.substr(0, star), spec);
      body = raw.substr(star + 1);
    }
    const auto parts = split(body, ':');
    TestFunction term;
    if (parts[0] == "gaussian" && parts.size() == 3) {
      term = gaussian(parse_number(parts[1], spec), parse_number(parts[2], spec));
    } else if (parts[0] == "bump" && parts.size() == 3) {
      term = bump(parse_number(parts[1], spec), parse_number(parts[2], spec));
    } else if (parts[0] == "polybump" && parts.size() == 4) {
      std::vector<double> coeffs;
      for (const auto& c : split(parts[3], ',')) coeffs.push_back(parse_number(c, spec));
      term = polybump(parse_number(parts[1], spec), parse_number(parts[2], spec), std::move(coeffs));
    } else {
      throw DomainError("unknown test function '" + raw + "' (expected gaussian:c:w, bump:c:r or polybump:c:r:a0,..)");
    }
    out = out.terms_.empty() ? term * coef : out + term * coef;
  }
  return out;
}

double TestFunction::operator()(double t) const {
  double sum = 0.0;
  for (const auto& term : terms_) {
    const double x = (t - term.center) / term.width;
    double v = 0.0;
    switch (term.family) {
      case Family::Gaussian: v = std::exp(-0.5 * x * x); break;
      case Family::Bump: v = bump_at(x); break;
      case Family::PolyBump: {
        const double b = bump_at(x);
        if (b == 0.0) break;
        double p = 0.0;
        for (auto it = term.poly.rbegin(); it != term.poly.rend(); ++it) p = p * x + *it;
        v = p * b;
        break;
      }
    }
    sum += term.coef * v;
  }
  return sum;
}

std::pair<double, double> TestFunction::support() const {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& t : terms_) {
    const double r = t.family == Family::Gaussian ? kGaussianSupportWidths * t.width : t.width;
    lo = std::min(lo, t.center - r);
    hi = std::max(hi, t.center + r);
  }
  return {lo, hi};
}

double TestFunction::sup_abs() const {
  double s = 0.0;
  for (const auto& t : terms_) {
    double peak = t.family == Family::Gaussian ? 1.0 : std::exp(-1.0);
    if (t.family == Family::PolyBump) {
      double p = 0.0;
      for (double a : t.poly) p += std::abs(a);
      peak *= p;
    }
    s += std::abs(t.coef) * peak;
  }
  return s;
}

std::string TestFunction::str() const {
  std::string out;
  for (const auto& t : terms_) {
    if (!out.empty()) out += "+";
    if (t.coef != 1.0) out += num(t.coef) + "*";
    switch (t.family) {
      case Family::Gaussian: out += "gaussian:" + num(t.center) + ":" + num(t.width); break;
      case Family::Bump: out += "bump:" + num(t.center) + ":" + num(t.width); break;
      case Family::PolyBump: {
        out += "polybump:" + num(t.center) + ":" + num(t.width) + ":";
        for (size_t i = 0; i < t.poly.size(); ++i) out += (i ? "," : "") + num(t.poly[i]);
        break;
      }
    }
  }
  return out;
}

TestFunction TestFunction::operator+(const TestFunction& o) const {
  TestFunction f = *this;
  f.terms_.insert(f.terms_.end(), o.terms_.begin(), o.terms_.end());
  return f;
}

TestFunction TestFunction::operator*(double a) const {
  TestFunction f = *this;
  for (auto& t : f.terms_) t.coef *= a;
  return f;
}

// ---------------------------------------------------------------------------
// Combs

double DeltaComb::total_variation() const {
  KahanSum s;
  for (const auto& a : atoms) s.add(std::abs(a.weight));
  return s.value();
}

DeltaComb merge_contributions(std::vector<Contribution> contributions) {
  std::stable_sort(contributions.begin(), contributions.end(),
                   [](const Contribution& a, const Contribution& b) { return a.l < b.l; });
  DeltaComb comb;
  size_t i = 0;
  while (i < contributions.size()) {
    // Contributions within tolerance of the first one in the run share its atom.
    size_t j = i;
    KahanSum w;
    Atom atom;
    while (j < contributions.size() && contributions[j].l - contributions[i].l <= kAtomMergeTolerance) {
      w.add(contributions[j].weight);
      atom.contributors.push_back(contributions[j].provenance);
      ++j;
    }
    atom.l = contributions[i].l;
    atom.weight = w.value();
    comb.atoms.push_back(std::move(atom));
    i = j;
  }
  return comb;
}

double pair(const DeltaComb& comb, const TestFunction& psi) {
  KahanSum s;
  for (const auto& a : comb.atoms) s.add(a.weight * psi(a.l));
  return s.value();
}

double pair_checked(const DeltaComb& comb, const TestFunction& psi, const OrbitWindow& window,
                    std::vector<std::string>* warnings) {
  const auto [lo, hi] = psi.support();
  if (warnings != nullptr && (lo < window.l_min || hi > window.l_max)) {
    warnings->push_back(fmt::format("TruncationWarning: supp({}) = [{}, {}] leaves the orbit window [{}, {}]",
                                    psi.str(), lo, hi, window.l_min, window.l_max));
  }
  return pair(comb, psi);
}

// ---------------------------------------------------------------------------
// Fiber trace

namespace {

double fiber_trace_at(Propagator& prop, const CoverSystem& sys, const GroupElt& x, double l, const Point& p) {
  const Mat f = prop.fiber_transport(p, l);
  const Mat rho = sys.bundle.fiber_action(sys.group, x, p);
  const Mat a = sys.bundle.endomorphism(p);
  return (a * f.partialPivLu().solve(rho)).trace();
}

}  // namespace

double fiber_trace(const CoverSystem& sys, const DelocalizedOrbit& orbit, unsigned long self_check_seed) {
  if (sys.bundle.is_trivial_line()) return 1.0;
  Propagator prop(sys);
  const double base = fiber_trace_at(prop, sys, orbit.x, orbit.l, orbit.m0);
  if (self_check_seed == 0) return base;
  std::mt19937_64 rng(self_check_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double span = orbit.kind == OrbitKind::Periodic ? orbit.t_sharp : std::abs(orbit.l);
  for (int k = 0; k < 3; ++k) {
    const double t = orbit.kind == OrbitKind::Periodic ? span * unit(rng) : span * (2.0 * unit(rng) - 1.0);
    const Point p = prop.flow(orbit.m0, t);
    const double v = fiber_trace_at(prop, sys, orbit.x, orbit.l, p);
    if (std::abs(v - base) > kSelfCheckTolerance * std::max(1.0, std::abs(base))) {
      throw TIndependenceViolation(fmt::format(
          "fiber trace along orbit at l = {} changes from {} at t = 0 to {} at t = {}", orbit.l, base, v, t));
    }
  }
  return base;
}

// ---------------------------------------------------------------------------
// Assembly

AssembleResult assemble(const CoverSystem& sys, const CutoffFunction& chi, const GroupElt& g,
                        const AssembleOptions& opt) {
  AssembleResult res;
  const auto reps = sys.group.coset_representatives(g, opt.radius);
  const auto base =
      complete_orbits(sys, chi, g, find_orbits(sys, g, opt.window, opt.seeds, opt.threads, &res.stats), opt.radius);

  std::vector<std::pair<GroupElt, std::vector<DelocalizedOrbit>>> families;
  for (const auto& h : reps) families.emplace_back(h, conjugate_orbits(sys, h, base));
  for (const auto& [h, orbits] : families) {
    for (size_t i = 0; i < orbits.size(); ++i) {
      OrbitRecord rec;
      rec.h = h;
      rec.index = static_cast<long>(i);
      rec.orbit = orbits[i];
      res.records.push_back(std::move(rec));
    }
  }

  parallel_for(res.records.size(), opt.threads, [&](size_t i) {
    OrbitRecord& rec = res.records[i];
    rec.poincare = poincare(sys, rec.orbit, opt.nondegeneracy);
    if (!rec.poincare.nondegenerate) return;
    rec.t_gamma = primitive_period(sys, rec.orbit, chi);
    rec.fiber_trace = fiber_trace(sys, rec.orbit, opt.seed + 7919 * (i + 1));
    rec.weight = rec.fiber_trace * rec.t_gamma / std::abs(rec.poincare.det_one_minus_p);
  });

  std::vector<Contribution> contributions;
  long max_len = 0;
  for (const auto& h : reps) max_len = std::max(max_len, sys.group.word_length(h));
  std::vector<KahanSum> shells(static_cast<size_t>(max_len + 1));
  for (const auto& rec : res.records) {
    if (!rec.poincare.nondegenerate) {
      throw DegenerateOrbit(fmt::format("orbit of {} with l = {} has |det(1 - P)| = {} below {}",
                                        sys.group.format(rec.orbit.x), rec.orbit.l,
                                        std::abs(rec.poincare.det_one_minus_p), opt.nondegeneracy));
    }
    contributions.push_back({rec.orbit.l, rec.weight, "h=" + sys.group.format(rec.h) + "#" + std::to_string(rec.index)});
    shells[static_cast<size_t>(sys.group.word_length(rec.h))].add(rec.weight);
  }
  res.comb = merge_contributions(std::move(contributions));
  for (const auto& s : shells) res.shell_sums.push_back(s.value());

  if (sys.group.kind() == GroupKind::Finite && !sys.group.shell(opt.radius + 1).empty()) {
    const double total = res.comb.total_variation();
    const double last = std::abs(res.shell_sums.back());
    if (last > 1e-10 * std::max(total, 1e-300)) {
      res.warnings.push_back(fmt::format("TruncationWarning: shell {} contributes {} of total {}", max_len, last, total));
    }
  }
  spdlog::debug("assemble g={}: {} coset reps, {} orbit records, {} atoms", sys.group.format(g), reps.size(),
                res.records.size(), res.comb.atoms.size());
  return res;
}

}  // namespace equitrace

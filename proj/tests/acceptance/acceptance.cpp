// Acceptance criteria for the trace formula engine. Prints one PASS/FAIL line
// per criterion and exits non-zero when any criterion fails.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include <spdlog/fmt/fmt.h>

#include "equitrace/config.hpp"
#include "equitrace/oracle.hpp"
#include "equitrace/orbits.hpp"
#include "equitrace/trace.hpp"

using namespace equitrace;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Check {
  bool ok = true;
  std::vector<std::string> notes;

  void expect(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      notes.push_back(what);
    }
  }
};

Model model_with(const std::string& name, const std::vector<std::array<std::string, 3>>& overrides = {}) {
  auto cfg = load_config(name);
  for (const auto& [s, k, v] : overrides) cfg.set(s, k, v);
  cfg.resolve();
  return build_model(cfg);
}

double rel(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

double weight_at(const DeltaComb& c, double l) {
  for (const auto& a : c.atoms) {
    if (std::abs(a.l - l) <= kAtomMergeTolerance) return a.weight;
  }
  return 0.0;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Atom lists agree in position and weight.
void compare_combs(Check& c, const DeltaComb& a, const DeltaComb& b, double tol, const std::string& label) {
  c.expect(a.atoms.size() == b.atoms.size(),
           fmt::format("{}: {} vs {} atoms", label, a.atoms.size(), b.atoms.size()));
  for (size_t i = 0; i < std::min(a.atoms.size(), b.atoms.size()); ++i) {
    c.expect(std::abs(a.atoms[i].l - b.atoms[i].l) <= tol,
             fmt::format("{}: atom {} at {} vs {}", label, i, a.atoms[i].l, b.atoms[i].l));
    c.expect(rel(a.atoms[i].weight, b.atoms[i].weight) <= tol,
             fmt::format("{}: weight at l = {}: {:.12g} vs {:.12g}", label, a.atoms[i].l, a.atoms[i].weight,
                         b.atoms[i].weight));
  }
}

// 1. Translations of the line: one atom of weight 1 at l = a.
Check translation() {
  Check c;
  const auto t0 = Clock::now();
  for (const auto& [g, window] : {std::pair{"0.7", "0.2, 2.0"}, std::pair{"-1.3", "-2.0, -0.2"}}) {
    const double a = std::stod(g);
    const auto m = model_with("translation", {{"group", "g", g}, {"orbits", "window", window}});
    const auto res = assemble(m.system, m.chi, m.g, m.assemble);
    c.expect(res.comb.atoms.size() == 1, fmt::format("g = {}: {} atoms", g, res.comb.atoms.size()));
    if (res.comb.atoms.empty()) continue;
    c.expect(std::abs(res.comb.atoms[0].l - a) <= 1e-10, fmt::format("g = {}: atom at {}", g, res.comb.atoms[0].l));
    c.expect(std::abs(res.comb.atoms[0].weight - 1.0) <= 1e-10,
             fmt::format("g = {}: weight {:.17g}", g, res.comb.atoms[0].weight));
    for (double w : {0.05, 0.08, 0.1}) {
      const auto psi = TestFunction::gaussian(a + 0.3 * w, w);
      const double v = pair(res.comb, psi);
      c.expect(std::abs(v - psi(a)) <= 1e-8, fmt::format("g = {}: pairing {} vs {}", g, v, psi(a)));
    }
  }
  const double secs = seconds_since(t0);
  c.expect(secs < 5.0, fmt::format("runtime {:.1f} s", secs));
  c.notes.insert(c.notes.begin(), fmt::format("{:.2f} s", secs));
  return c;
}

// 2. Trivial group on the cat-map suspension against exact fixed-point counts
// and the mollified kernel.
Check classical_limit() {
  Check c;
  const auto t0 = Clock::now();
  const auto m = model_with("catmap");
  const auto res = assemble(m.system, m.chi, m.g, m.assemble);
  for (int n = 1; n <= 3; ++n) {
    const double want = catmap_fixed_points(n).predicted_weight;
    const double got = weight_at(res.comb, n);
    c.expect(std::abs(got - want) <= 1e-8 * std::abs(want), fmt::format("l = {}: {:.17g} vs {:.17g}", n, got, want));
  }
  const auto psi = TestFunction::bump(1.0, 0.4);
  const double target = pair(res.comb, psi);
  try {
    const auto mol = mollified_trace(m.system, m.chi, m.g, psi, m.mollifier);
    const double err = std::abs(mol.extrapolate - target) / std::abs(target);
    c.expect(err <= 0.01, fmt::format("mollified {:.8g} vs {:.8g}", mol.extrapolate, target));
    c.notes.insert(c.notes.begin(), fmt::format("mollified rel {:.2e}", err));
  } catch (const Error& e) {
    c.expect(false, e.what());
  }
  const double secs = seconds_since(t0);
  c.expect(secs < 120.0, fmt::format("runtime {:.1f} s", secs));
  c.notes.insert(c.notes.begin(), fmt::format("{:.1f} s", secs));
  return c;
}

// 3. Covering decomposition on the circle and on the nonlinear suspension.
Check covering() {
  Check c;
  const auto t0 = Clock::now();
  for (const auto& [up_name, tol] : {std::pair{"circle_up", 1e-10}, std::pair{"suspension_up", 1e-6}}) {
    const auto up = model_with(up_name);
    const auto down = model_with(up.quotient_model);
    for (const char* spec : {"bump:2:1.5", "bump:1:0.4", "gaussian:2.5:0.1"}) {
      const auto rep = covering_check(up.system, up.chi, up.assemble, down.system, down.chi, down.assemble,
                                      TestFunction::parse(spec), up.covering_radius);
      c.expect(rep.exact, fmt::format("{} {}: exactness flag not set", up_name, spec));
      c.expect(rep.discrepancy <= tol, fmt::format("{} {}: |LHS - RHS| = {:.3g}", up_name, spec, rep.discrepancy));
    }
  }
  const double secs = seconds_since(t0);
  c.expect(secs < 60.0, fmt::format("runtime {:.1f} s", secs));
  c.notes.insert(c.notes.begin(), fmt::format("{:.1f} s", secs));
  return c;
}

// 4. A second admissible cutoff per model.
const std::map<std::string, std::vector<std::array<std::string, 3>>>& alternative_windows() {
  static const std::map<std::string, std::vector<std::array<std::string, 3>>> alt = {
      {"translation", {{"group", "window.center", "[0.4]"}, {"group", "window.radius", "1.3"}}},
      {"circle_up", {{"group", "window.center", "[0.1]"}, {"group", "window.radius", "1.1"}}},
      {"suspension_up", {{"group", "window.center", "[0.3, 0.7]"}, {"group", "window.radius", "0.9"}}},
      {"degenerate", {{"group", "window.center", "[0.2, 0.6]"}, {"group", "window.radius", "0.9"}}},
      {"perm",
       {{"group", "window", "suspension"}, {"group", "window.radius", "0.8"},
        {"group", "window.profile", "1.2 + cos(2*pi*v1) * sin(2*pi*v2)"}}},
      {"perm_bundle",
       {{"group", "window", "suspension"}, {"group", "window.radius", "0.8"},
        {"group", "window.profile", "1.2 + cos(2*pi*v1) * sin(2*pi*v2)"}}},
  };
  return alt;
}

Check cutoff_independence() {
  Check c;
  std::string tested;
  for (const auto& [name, text] : model_gallery()) {
    const auto it = alternative_windows().find(name);
    const auto a = model_with(name);
    const auto b = model_with(name, it == alternative_windows().end() ? std::vector<std::array<std::string, 3>>{}
                                                                       : it->second);
    if (it == alternative_windows().end()) {
      // Only chi = 1 is admissible for the trivial group.
      tested += name + "(chi=1) ";
    } else {
      tested += name + " ";
    }
    AssembleResult ra;
    AssembleResult rb;
    try {
      ra = assemble(a.system, a.chi, a.g, a.assemble);
    } catch (const DegenerateOrbit&) {
      bool also = false;
      try {
        assemble(b.system, b.chi, b.g, b.assemble);
      } catch (const DegenerateOrbit&) {
        also = true;
      }
      c.expect(also, name + ": degeneracy depends on the window");
      continue;
    }
    rb = assemble(b.system, b.chi, b.g, b.assemble);
    compare_combs(c, ra.comb, rb.comb, 1e-8, name);
    // T_gamma summed over the conjugacy class of each orbit length.
    std::map<long, std::array<double, 2>> tg;
    for (const auto& r : ra.records) tg[std::lround(r.orbit.l * 1e6)][0] += r.t_gamma;
    for (const auto& r : rb.records) tg[std::lround(r.orbit.l * 1e6)][1] += r.t_gamma;
    for (const auto& [key, v] : tg) {
      c.expect(rel(v[0], v[1]) <= 1e-8, fmt::format("{}: T_gamma at l = {}: {:.12g} vs {:.12g}", name,
                                                      static_cast<double>(key) * 1e-6, v[0], v[1]));
    }
  }
  c.notes.insert(c.notes.begin(), tested);
  return c;
}

// 5. Time shifts of the base point and conjugation of g.
Check representative_invariance() {
  Check c;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (const char* name : {"suspension_down", "suspension_up", "catmap", "perm"}) {
    const auto m = model_with(name);
    for (const auto& o : find_orbits(m.system, m.g, m.assemble.window, m.assemble.seeds)) {
      const double base = poincare(m.system, o).det_one_minus_p;
      for (int k = 0; k < 5; ++k) {
        const auto shifted = shift_orbit(m.system, o, u(rng) * std::abs(o.l));
        const double d = poincare(m.system, shifted).det_one_minus_p;
        c.expect(std::abs(d - base) <= 1e-9 * std::max(1.0, std::abs(base)),
                 fmt::format("{} l = {}: det {:.12g} vs {:.12g}", name, o.l, d, base));
      }
    }
  }
  const auto m = model_with("perm");
  const auto& grp = m.system.group;
  const auto base = assemble(m.system, m.chi, m.g, m.assemble);
  std::vector<double> base_periods;
  for (const auto& o : find_orbits(m.system, m.g, m.assemble.window, m.assemble.seeds)) base_periods.push_back(o.l);
  for (const auto& h : grp.ball(3)) {
    const GroupElt x = grp.compose(grp.compose(h, m.g), grp.inverse(h));
    const auto label = "g^h = " + grp.format(x);
    std::vector<double> periods;
    for (const auto& o : find_orbits(m.system, x, m.assemble.window, m.assemble.seeds)) periods.push_back(o.l);
    c.expect(periods.size() == base_periods.size(), label + ": period multiset sizes differ");
    for (size_t i = 0; i < std::min(periods.size(), base_periods.size()); ++i) {
      c.expect(std::abs(periods[i] - base_periods[i]) <= 1e-8, label + ": periods differ");
    }
    compare_combs(c, assemble(m.system, m.chi, x, m.assemble).comb, base.comb, 1e-8, label);
  }
  return c;
}

// 6. Fiber traces on the rank-2 bundle model.
Check fiber_traces() {
  Check c;
  const auto scalar = model_with("perm");
  const auto bundle = model_with("perm_bundle");
  const auto orbits = find_orbits(bundle.system, bundle.g, bundle.assemble.window, bundle.assemble.seeds);
  c.expect(!orbits.empty(), "no orbits");
  unsigned long seed = 11;
  for (const auto& o : orbits) {
    try {
      fiber_trace(bundle.system, o, seed++);
    } catch (const Error& e) {
      c.expect(false, e.what());
    }
  }
  const auto a = assemble(scalar.system, scalar.chi, scalar.g, scalar.assemble);
  const auto b = assemble(bundle.system, bundle.chi, bundle.g, bundle.assemble);
  c.expect(a.records.size() == b.records.size(), "record counts differ");
  std::map<long, double> expected;
  for (size_t i = 0; i < std::min(a.records.size(), b.records.size()); ++i) {
    c.expect(std::abs(a.records[i].orbit.l - b.records[i].orbit.l) <= 1e-9, "records out of step");
    const double want = a.records[i].weight * b.records[i].fiber_trace;
    c.expect(std::abs(b.records[i].weight - want) <= 1e-8 * std::max(1.0, std::abs(want)),
             fmt::format("record {}: {:.12g} vs {:.12g}", i, b.records[i].weight, want));
    expected[std::lround(a.records[i].orbit.l * 1e6)] += want;
  }
  for (const auto& atom : b.comb.atoms) {
    const double want = expected[std::lround(atom.l * 1e6)];
    c.expect(std::abs(atom.weight - want) <= 1e-8 * std::max(1.0, std::abs(want)),
             fmt::format("atom at {}: {:.12g} vs {:.12g}", atom.l, atom.weight, want));
  }
  return c;
}

// 7. Determinants of the lifted orbits against the quotient orbits.
Check nondegeneracy_equivalence() {
  Check c;
  const auto up = model_with("suspension_up");
  const auto down = model_with("suspension_down");
  const auto down_orbits = find_orbits(down.system, down.g, down.assemble.window, down.assemble.seeds);
  auto frac = [](double x) { return x - std::floor(x + 1e-9); };
  size_t matched = 0;
  for (const auto& h : up.system.group.ball(2)) {
    const auto& grp = up.system.group;
    const GroupElt x = grp.compose(grp.compose(h, up.g), grp.inverse(h));
    for (const auto& o : find_orbits(up.system, x, up.assemble.window, up.assemble.seeds)) {
      const double du = poincare(up.system, o).det_one_minus_p;
      bool found = false;
      for (const auto& d : down_orbits) {
        if (std::abs(d.l - o.l) > 1e-7 || std::abs(frac(d.m0(0)) - frac(o.m0(0))) > 1e-7) continue;
        found = true;
        const double dd = poincare(down.system, d).det_one_minus_p;
        c.expect(std::abs(du - dd) <= 1e-8 * std::max(1.0, std::abs(dd)),
                 fmt::format("l = {} x = {}: {:.12g} vs {:.12g}", o.l, o.m0(0), du, dd));
      }
      c.expect(found, fmt::format("upstairs orbit l = {} x = {} has no quotient partner", o.l, o.m0(0)));
      matched += found ? 1 : 0;
    }
  }
  c.expect(matched > 0, "no orbits compared");
  c.notes.insert(c.notes.begin(), fmt::format("{} orbits", matched));
  return c;
}

struct Outcome {
  int code = -1;
  std::string out;
};

Outcome run_cli(const std::string& args) {
  const std::string cmd = std::string(EQUITRACE_CLI) + " " + args + " 2>&1";
  Outcome o;
  FILE* p = popen(cmd.c_str(), "r");
  if (p == nullptr) return o;
  std::array<char, 4096> buf{};
  size_t n = 0;
  while ((n = fread(buf.data(), 1, buf.size(), p)) > 0) o.out.append(buf.data(), n);
  const int status = pclose(p);
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 8. Variational Jacobians, partitions of unity and reproducible artifacts.
Check hygiene() {
  Check c;
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst_fd = 0.0;
  for (const char* name : {"suspension_down", "suspension_up", "catmap", "perm"}) {
    const auto m = model_with(name);
    const int n = m.system.dim;
    for (int k = 0; k < 4; ++k) {
      Point p(n);
      for (int i = 0; i < n; ++i) p(i) = u(rng);
      const double t = 0.5 + 2.0 * u(rng);
      const auto st = flow_with_jacobian(m.system, p, t);
      const double h = 1e-6;
      for (int j = 0; j < n; ++j) {
        Point a = p;
        Point b = p;
        a(j) += h;
        b(j) -= h;
        const Vec col = (flow(m.system, a, t) - flow(m.system, b, t)) / (2 * h);
        worst_fd = std::max(worst_fd, (col - st.jac.col(j)).cwiseAbs().maxCoeff());
      }
    }
  }
  c.expect(worst_fd <= 1e-5, fmt::format("Jacobian vs finite differences {:.3g}", worst_fd));

  double worst_pu = 0.0;
  for (const char* name : {"circle_up", "suspension_up", "perm"}) {
    const auto m = model_with(name);
    const auto elts = m.system.group.ball(m.system.group.kind() == GroupKind::Finite ? 8 : 6);
    for (const auto& p : sample_grid(m.system.domain, m.system.dim <= 2 ? 40 : 5)) {
      double s = 0.0;
      for (const auto& x : elts) s += m.chi(m.system.group.act(x, p));
      worst_pu = std::max(worst_pu, std::abs(s - 1.0));
    }
  }
  c.expect(worst_pu <= 1e-10, fmt::format("partition of unity residual {:.3g}", worst_pu));

  const fs::path root = fs::temp_directory_path() / "equitrace_acceptance";
  size_t files = 0;
  for (const auto& [name, text] : model_gallery()) {
    std::array<Outcome, 2> runs;
    for (int r = 0; r < 2; ++r) {
      const fs::path dir = root / fmt::format("{}_{}", name, r);
      fs::remove_all(dir);
      runs[static_cast<size_t>(r)] = run_cli(fmt::format("all --config {} --out {}", name, dir.string()));
    }
    c.expect(runs[0].code == runs[1].code, name + ": exit codes differ");
    for (const auto& entry : fs::directory_iterator(root / (name + "_0"))) {
      const auto other = root / (name + "_1") / entry.path().filename();
      c.expect(slurp(entry.path()) == slurp(other), name + ": " + entry.path().filename().string() + " differs");
      ++files;
    }
  }
  c.notes.insert(c.notes.begin(), fmt::format("FD {:.1e}, PU {:.1e}, {} artifacts compared", worst_fd, worst_pu, files));
  return c;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Check()>>> criteria = {
      {"AC1 translation comb", translation},
      {"AC2 classical limit on the cat map", classical_limit},
      {"AC3 covering decomposition", covering},
      {"AC4 cutoff independence", cutoff_independence},
      {"AC5 representative and conjugation invariance", representative_invariance},
      {"AC6 fiber traces and scalar factorization", fiber_traces},
      {"AC7 nondegeneracy upstairs vs downstairs", nondegeneracy_equivalence},
      {"AC8 numerical hygiene", hygiene},
  };
  int failed = 0;
  for (const auto& [label, fn] : criteria) {
    Check c;
    try {
      c = fn();
    } catch (const std::exception& e) {
      c.ok = false;
      c.notes.push_back(std::string("exception: ") + e.what());
    }
    std::string detail;
    for (const auto& n : c.notes) detail += (detail.empty() ? "" : "; ") + n;
    if (detail.size() > 600) detail = detail.substr(0, 600) + " ...";
    fmt::print("{} {}: {}\n", c.ok ? "PASS" : "FAIL", label, detail);
    std::fflush(stdout);
    failed += c.ok ? 0 : 1;
  }
  fmt::print("{} of {} criteria passed\n", criteria.size() - static_cast<size_t>(failed), criteria.size());
  return failed == 0 ? 0 : 1;
}

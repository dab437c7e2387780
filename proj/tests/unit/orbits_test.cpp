#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "equitrace/orbits.hpp"
#include "helpers.hpp"

using namespace equitrace;

namespace {

const char* kIrrationalTorus = R"(
[chart]
dim = 2
labels = x, y
domain = [[-1, 2], [-1, 2]]

[group]
kind = free_abelian
gen.1 = affine [[1, 0], [0, 1]] [1, 0]
gen.2 = affine [[1, 0], [0, 1]] [0, 1]
window.center = [0.5, 0.5]
window.radius = 0.75
g = (1,0)

[flow]
u.1 = 1
u.2 = sqrt(2)

[orbits]
window = 0.5, 1.5
seed_box = [[0, 1], [0, 1]]
seed_counts = 4, 4
l_seeds = 3

[trace]
psi = bump:1:0.4
)";

double bisect(double a, double b, double (*f)(double)) {
  for (int i = 0; i < 200; ++i) {
    const double m = 0.5 * (a + b);
    if ((f(a) < 0) == (f(m) < 0)) {
      a = m;
    } else {
      b = m;
    }
  }
  return 0.5 * (a + b);
}

double displacement(double x) { return 0.1 * std::sin(2 * std::numbers::pi * x); }

std::vector<DelocalizedOrbit> search(const Model& m, const GroupElt& g) {
  return find_orbits(m.system, g, m.assemble.window, m.assemble.seeds);
}

long cat_trace(int n) {
  long a = 2, b = 1, c = 1, d = 1;
  long pa = 1, pb = 0, pc = 0, pd = 1;
  for (int i = 0; i < n; ++i) {
    const long na = pa * a + pb * c, nb = pa * b + pb * d, nc = pc * a + pd * c, nd = pc * b + pd * d;
    pa = na;
    pb = nb;
    pc = nc;
    pd = nd;
  }
  return pa + pd;
}

}  // namespace

TEST(Orbits, TranslationHasOneLine) {
  for (const auto& [g, window] : {std::pair{"0.7", "0.2, 2.0"}, std::pair{"-1.3", "-2.0, -0.2"}}) {
    const auto m = testing_support::gallery_model_with("translation", {{"group", "g", g}, {"orbits", "window", window}});
    const auto orbits = search(m, m.g);
    ASSERT_EQ(orbits.size(), 1u) << g;
    EXPECT_EQ(orbits[0].kind, OrbitKind::ProperLine);
    EXPECT_NEAR(orbits[0].l, std::stod(g), 1e-12);
    EXPECT_LE(orbits[0].residual, kResidualTolerance);
  }
}

TEST(Orbits, IrrationalSlopeHasNone) {
  const auto m = testing_support::text_model(kIrrationalTorus);
  SearchStats stats;
  const auto orbits = find_orbits(m.system, m.g, m.assemble.window, m.assemble.seeds, 1, &stats);
  EXPECT_TRUE(orbits.empty());
  EXPECT_EQ(stats.converged, 0u);
}

TEST(Orbits, RefineReportsNoConvergence) {
  const auto m = testing_support::text_model(kIrrationalTorus);
  const auto r = refine(m.system, make_vec({0.3, 0.4}), 1.0, m.g);
  EXPECT_NE(r.status, RefineResult::Status::Converged);
}

TEST(Orbits, CircleMapFixedPointsMatchBisection) {
  const auto m = testing_support::gallery_model("suspension_down");
  const double roots[] = {bisect(-0.1, 0.1, displacement), bisect(0.4, 0.6, displacement)};
  const auto orbits = search(m, m.g);
  for (int l = 1; l <= 3; ++l) {
    std::vector<double> found;
    for (const auto& o : orbits) {
      if (std::abs(o.l - l) > 1e-7) continue;
      EXPECT_EQ(o.kind, OrbitKind::Periodic);
      EXPECT_NEAR(o.t_sharp, 1.0, 1e-9);
      found.push_back(o.m0(0) - std::floor(o.m0(0) + 0.25));
      const double fp = 1.0 + 0.2 * std::numbers::pi * std::cos(2 * std::numbers::pi * o.m0(0));
      const auto pd = poincare(m.system, o);
      EXPECT_NEAR(std::abs(pd.det_one_minus_p), std::abs(1.0 - std::pow(fp, l)), 1e-8);
      EXPECT_LE(pd.eigen_residual, 1e-8);
    }
    std::sort(found.begin(), found.end());
    ASSERT_EQ(found.size(), 2u) << "l = " << l;
    EXPECT_NEAR(found[0], roots[0], 1e-9);
    EXPECT_NEAR(found[1], roots[1], 1e-9);
  }
}

TEST(Orbits, NewtonConvergesQuadratically) {
  const auto m = testing_support::gallery_model("suspension_down");
  const auto r = refine(m.system, make_vec({0.03, 0.2}), 1.02, m.g);
  ASSERT_EQ(r.status, RefineResult::Status::Converged);
  EXPECT_NEAR(r.orbit.l, 1.0, 1e-10);
  // Past the first step, each residual is bounded by a multiple of the square of its predecessor.
  int checked = 0;
  for (size_t i = 1; i + 1 < r.residuals.size(); ++i) {
    if (r.residuals[i] > 1e-3 || r.residuals[i + 1] < 1e-13) continue;
    EXPECT_LE(r.residuals[i + 1], 50.0 * r.residuals[i] * r.residuals[i]);
    ++checked;
  }
  EXPECT_GE(checked, 1);
}

TEST(Orbits, CatMapDeterminants) {
  const auto m = testing_support::gallery_model("catmap");
  const auto orbits = search(m, m.g);
  const size_t classes[] = {0, 1, 3, 6};
  for (int n = 1; n <= 3; ++n) {
    size_t count = 0;
    for (const auto& o : orbits) {
      if (std::abs(o.l - n) > 1e-7) continue;
      ++count;
      const auto pd = poincare(m.system, o);
      EXPECT_NEAR(std::abs(pd.det_one_minus_p), std::abs(2.0 - static_cast<double>(cat_trace(n))), 1e-8);
      EXPECT_TRUE(pd.nondegenerate);
    }
    EXPECT_EQ(count, classes[n]) << "n = " << n;
  }
}

TEST(Orbits, DeterminantIsTimeShiftInvariant) {
  for (const char* name : {"suspension_down", "catmap", "perm"}) {
    SCOPED_TRACE(name);
    const auto m = testing_support::gallery_model(name);
    const auto orbits = search(m, m.g);
    ASSERT_FALSE(orbits.empty());
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (const auto& o : orbits) {
      const double base = poincare(m.system, o).det_one_minus_p;
      for (int k = 0; k < 5; ++k) {
        const auto shifted = shift_orbit(m.system, o, u(rng) * o.l);
        EXPECT_LE(shifted.residual, kResidualTolerance);
        EXPECT_NEAR(poincare(m.system, shifted).det_one_minus_p, base, 1e-9 * std::max(1.0, std::abs(base)));
      }
    }
  }
}

TEST(Orbits, ConjugationMapsOrbitsOfConjugates) {
  const auto m = testing_support::gallery_model("perm");
  const auto& grp = m.system.group;
  const auto base = search(m, m.g);
  ASSERT_FALSE(base.empty());
  for (const auto& h : grp.ball(3)) {
    const GroupElt c = grp.compose(grp.compose(h, m.g), grp.inverse(h));
    const auto mapped = conjugate_orbits(m.system, h, base);
    const auto direct = search(m, c);
    ASSERT_EQ(mapped.size(), direct.size());
    std::vector<double> a, b;
    for (const auto& o : mapped) {
      EXPECT_LE(o.residual, kResidualTolerance);
      EXPECT_EQ(o.x, c);
      a.push_back(o.l);
    }
    for (const auto& o : direct) b.push_back(o.l);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    for (size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-8);
  }
}

TEST(Orbits, DegenerateModelIsFlagged) {
  const auto m = testing_support::gallery_model("degenerate");
  const auto orbits = search(m, m.g);
  ASSERT_FALSE(orbits.empty());
  EXPECT_FALSE(poincare(m.system, orbits[0]).nondegenerate);
}

TEST(Orbits, WindowMustAvoidZero) {
  const auto m = testing_support::gallery_model("translation");
  EXPECT_THROW(find_orbits(m.system, m.g, OrbitWindow{-0.5, 0.5}, m.assemble.seeds), DomainError);
}

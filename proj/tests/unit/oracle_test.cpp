#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "equitrace/oracle.hpp"
#include "helpers.hpp"

using namespace equitrace;

namespace {

// Entries of A^n for A = [[2, 1], [1, 1]].
std::array<long, 4> cat_power(int n) {
  std::array<long, 4> p{1, 0, 0, 1};
  for (int i = 0; i < n; ++i) p = {2 * p[0] + p[1], p[0] + p[1], 2 * p[2] + p[3], p[2] + p[3]};
  return p;
}

long mod(long a, long m) { return ((a % m) + m) % m; }

}  // namespace

TEST(Catmap, FixedPointsMatchBruteForce) {
  for (int n = 1; n <= 5; ++n) {
    SCOPED_TRACE(n);
    const auto fp = catmap_fixed_points(n);
    const auto p = cat_power(n);
    const long det = std::abs((p[0] - 1) * (p[3] - 1) - p[1] * p[2]);
    EXPECT_EQ(fp.det, det);
    // Every fixed point of A^n on the torus has coordinates in (1/det) Z.
    std::set<std::pair<long, long>> brute;
    for (long i = 0; i < det; ++i) {
      for (long j = 0; j < det; ++j) {
        if (mod(p[0] * i + p[1] * j - i, det) == 0 && mod(p[2] * i + p[3] * j - j, det) == 0) brute.insert({i, j});
      }
    }
    EXPECT_EQ(static_cast<long>(brute.size()), det);
    std::set<std::pair<long, long>> found;
    for (const auto& q : fp.fixed_points) {
      // Rescale numerators over fp.denominator to denominator det.
      ASSERT_EQ(mod(q[0] * det, fp.denominator), 0);
      ASSERT_EQ(mod(q[1] * det, fp.denominator), 0);
      found.insert({q[0] * det / fp.denominator, q[1] * det / fp.denominator});
    }
    EXPECT_EQ(found, brute);
    long points = 0;
    for (const auto& o : fp.orbits) {
      EXPECT_EQ(n % o.period, 0);
      EXPECT_EQ(static_cast<long>(o.points.size()), o.period);
      points += o.period;
    }
    EXPECT_EQ(points, det);
    EXPECT_NEAR(fp.predicted_weight, 1.0, 1e-15);
  }
  EXPECT_EQ(catmap_fixed_points(1).det, 1);
  EXPECT_EQ(catmap_fixed_points(2).det, 5);
  EXPECT_EQ(catmap_fixed_points(3).det, 16);
}

TEST(Richardson, ExactOnQuadraticError) {
  auto v = [](double e) { return 1.0 + 3.0 * e * e; };
  const auto [x, p] = richardson(v(0.08), v(0.04), v(0.02));
  EXPECT_NEAR(x, 1.0, 1e-12);
  EXPECT_NEAR(p, 2.0, 1e-9);
  EXPECT_THROW(richardson(1.0, 1.1, 1.4), NonConvergentLadder);
}

TEST(Mollified, TranslationMatchesClosedForm) {
  // The comb is one atom of weight 1 at 0.7; mollifying gaussian psi of width w
  // with g_eps gives w / sqrt(w^2 + eps^2) at the atom.
  const auto m = testing_support::gallery_model("translation");
  const double w = 0.05;
  const auto psi = TestFunction::gaussian(0.7, w);
  for (double eps : {0.08, 0.04}) {
    const double v = mollified_value(m.system, m.chi, m.g, psi, eps, m.mollifier);
    EXPECT_NEAR(v, w / std::sqrt(w * w + eps * eps), 1e-6) << "eps = " << eps;
  }
}

TEST(Mollified, NoOrbitsGiveZero) {
  const auto m = testing_support::gallery_model("translation");
  const auto psi = TestFunction::gaussian(3.0, 0.1);
  EXPECT_LT(std::abs(mollified_value(m.system, m.chi, m.g, psi, 0.04, m.mollifier)), 1e-12);
}

TEST(Mollified, BudgetIsEnforced) {
  auto m = testing_support::gallery_model("catmap");
  m.mollifier.budget = 1000;
  EXPECT_THROW(mollified_value(m.system, m.chi, m.g, m.oracle_psi, 0.04, m.mollifier), QuadratureBudgetExceeded);
}

TEST(Mollified, RejectsBadLadder) {
  auto m = testing_support::gallery_model("translation");
  m.mollifier.ladder = {0.04, 0.08};
  EXPECT_THROW(mollified_trace(m.system, m.chi, m.g, m.oracle_psi, m.mollifier), DomainError);
}

TEST(Covering, CircleIsExact) {
  const auto up = testing_support::gallery_model("circle_up");
  const auto down = testing_support::gallery_model("circle_down");
  for (const char* spec : {"bump:2:1.5", "gaussian:1:0.08", "bump:3:0.4"}) {
    SCOPED_TRACE(spec);
    const auto rep = covering_check(up.system, up.chi, up.assemble, down.system, down.chi, down.assemble,
                                    TestFunction::parse(spec), 8);
    EXPECT_TRUE(rep.exact);
    EXPECT_LE(rep.discrepancy, 1e-10);
    EXPECT_EQ(rep.omitted_reachable, 0u);
  }
}

TEST(Covering, Reachability) {
  const auto up = testing_support::gallery_model("circle_up");
  GroupElt near;
  near.exps = {1};
  GroupElt far;
  far.exps = {6};
  EXPECT_TRUE(reachable(up.system, up.chi, near, 1.5));
  EXPECT_FALSE(reachable(up.system, up.chi, far, 1.5));
}

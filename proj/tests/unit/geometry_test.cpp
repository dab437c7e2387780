#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "equitrace/geometry.hpp"
#include "helpers.hpp"

using namespace equitrace;

namespace {

Mat perm3(int a, int b, int c) {
  Mat m = Mat::Zero(3, 3);
  m(0, a) = 1.0;
  m(1, b) = 1.0;
  m(2, c) = 1.0;
  return m;
}

GroupModel s3() {
  return GroupModel::finite({ActionMap::affine(perm3(1, 0, 2), Vec::Zero(3)),
                             ActionMap::affine(perm3(2, 0, 1), Vec::Zero(3))});
}

}  // namespace

TEST(Geometry, CircleLiftInverse) {
  for (double y = -2.0; y <= 2.0; y += 0.0173) {
    EXPECT_NEAR(circle_lift(circle_lift_inverse(y, 0.1), 0.1), y, 1e-14);
  }
}

TEST(Geometry, SymmetricGroupTable) {
  const GroupModel g = s3();
  ASSERT_EQ(g.finite_size(), 6u);
  std::set<GroupElt> seen;
  for (const auto& a : g.ball(10)) {
    seen.insert(a);
    EXPECT_TRUE(g.is_identity(g.compose(a, g.inverse(a))));
    // Table arithmetic agrees with composing the matrices.
    for (const auto& b : g.ball(10)) {
      const Point p = make_vec({0.1, 0.7, -0.4});
      EXPECT_LT((g.act(g.compose(a, b), p) - g.act(a, g.act(b, p))).norm(), 1e-15);
    }
  }
  EXPECT_EQ(seen.size(), 6u);
  EXPECT_EQ(g.order(g.generator(0)), 2);
  EXPECT_EQ(g.order(g.generator(1)), 3);
}

TEST(Geometry, TranspositionHasThreeCosetRepresentatives) {
  const GroupModel g = s3();
  const GroupElt t = g.generator(0);
  const auto reps = g.coset_representatives(t, 8);
  ASSERT_EQ(reps.size(), 3u);
  // Conjugates h t h^-1 are the three distinct transpositions.
  std::set<GroupElt> conj;
  for (const auto& h : reps) conj.insert(g.compose(g.compose(h, t), g.inverse(h)));
  EXPECT_EQ(conj.size(), 3u);
  for (const auto& c : conj) EXPECT_EQ(g.order(c), 2);
}

TEST(Geometry, RotationByPiJacobian) {
  const GroupModel g = GroupModel::finite({ActionMap::affine(-Mat::Identity(2, 2), Vec::Zero(2))});
  EXPECT_EQ(g.finite_size(), 2u);
  const Mat j = g.act_jacobian(g.generator(0), make_vec({0.3, -1.1}));
  EXPECT_LT((j + Mat::Identity(2, 2)).norm(), 1e-15);
}

TEST(Geometry, FreeAbelianShells) {
  const GroupModel g = GroupModel::free_abelian(
      {ActionMap::affine(Mat::Identity(2, 2), make_vec({1, 0})), ActionMap::affine(Mat::Identity(2, 2), make_vec({0, 1}))});
  EXPECT_EQ(g.shell(0).size(), 1u);
  for (long r = 1; r <= 6; ++r) {
    const auto sh = g.shell(r);
    EXPECT_EQ(sh.size(), static_cast<size_t>(4 * r));
    for (const auto& x : sh) EXPECT_EQ(g.word_length(x), r);
  }
}

TEST(Geometry, SuspensionSigmaInverseAndJacobian) {
  const ActionMap m = ActionMap::suspension_sigma(2, 0.1);
  const Vec p = make_vec({0.31, 0.6});
  EXPECT_LT((m.apply_inverse(m.apply(p)) - p).norm(), 1e-14);
  const double h = 1e-6;
  for (int i = 0; i < 2; ++i) {
    Vec dp = Vec::Zero(2);
    dp(i) = h;
    const Vec fd = (m.apply(p + dp) - m.apply(p - dp)) / (2 * h);
    EXPECT_LT((fd - m.jacobian(p).col(i)).norm(), 1e-8);
  }
}

TEST(Geometry, CatQuotientDeckOperations) {
  Mat a(2, 2);
  a << 2, 1, 1, 1;
  const Quotient q = Quotient::mapping_torus_linear(a);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int k = 0; k < 50; ++k) {
    const Point p = make_vec({u(rng), u(rng), u(rng)});
    const Point r = q.reduce(p);
    for (int i = 0; i < 3; ++i) {
      EXPECT_GE(r(i), 0.0);
      EXPECT_LT(r(i), 1.0);
    }
    EXPECT_LT(q.distance(p, r), 1e-12);
    const DeckElt d = q.nearest(p, r);
    EXPECT_LT((q.apply_inverse(d, p) - r).norm(), 1e-9);
    EXPECT_LT((q.apply(d, q.apply_inverse(d, p)) - p).norm(), 1e-12);
  }
}

TEST(Geometry, CircleCutoffIsPartitionOfUnity) {
  const auto model = testing_support::gallery_model("circle_up");
  EXPECT_LE(model.chi.partition_residual(), 1e-10);
  const auto& g = model.system.group;
  for (double m = -0.9; m < 1.9; m += 0.0137) {
    double sum = 0.0;
    for (long k = -6; k <= 6; ++k) {
      GroupElt x;
      x.exps = {k};
      sum += model.chi(g.act(x, make_vec({m})));
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Geometry, SuspensionCutoffIsPartitionOfUnity) {
  const auto model = testing_support::gallery_model("suspension_up");
  EXPECT_LE(model.chi.partition_residual(), 1e-10);
  const auto& g = model.system.group;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 40; ++k) {
    const Point m = make_vec({u(rng), u(rng)});
    double sum = 0.0;
    for (const auto& x : g.ball(12)) sum += model.chi(g.act(x, m));
    EXPECT_NEAR(sum, 1.0, 1e-10);
  }
}

TEST(Geometry, TranslationLineCutoffIntegratesToOne) {
  const auto model = testing_support::gallery_model("translation");
  for (double m : {-0.5, 0.0, 0.2, 0.6}) {
    auto f = [&](double s) { return model.chi(make_vec({m + s})); };
    const double total =
        boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, -m - 0.75, -m + 0.75, 12, 1e-13);
    EXPECT_NEAR(total, 1.0, 1e-9);
  }
}

TEST(Geometry, NarrowWindowFailsCoverage) {
  GroupModel g = GroupModel::free_abelian({ActionMap::affine(Mat::Identity(1, 1), make_vec({1}))});
  WindowSpec w;
  w.center = make_vec({0.5});
  w.radius = 0.3;
  Box domain{make_vec({-1}), make_vec({2})};
  EXPECT_THROW(build_cutoff(w, g, Quotient::none(1), domain), CoverageFailure);
}

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "equitrace/expr.hpp"

using equitrace::Expr;

namespace {

const std::vector<std::string> kVars{"x", "s"};

}  // namespace

TEST(Expr, EvaluatesAgainstClosedForm) {
  const Expr e = Expr::parse("x + 0.1*sin(2*pi*x) - s^2/3 + exp(-x)*cosh(s)", kVars);
  for (double x : {-0.7, 0.0, 0.3, 1.9}) {
    for (double s : {-1.0, 0.25, 2.0}) {
      const double want = x + 0.1 * std::sin(2 * std::numbers::pi * x) - s * s / 3 + std::exp(-x) * std::cosh(s);
      const double vars[] = {x, s};
      EXPECT_NEAR(e.eval(vars), want, 1e-14 * std::max(1.0, std::abs(want)));
    }
  }
}

TEST(Expr, PrecedenceAndUnaryMinus) {
  const double vars[] = {2.0, 3.0};
  EXPECT_DOUBLE_EQ(Expr::parse("-x^2", kVars).eval(vars), -4.0);
  EXPECT_DOUBLE_EQ(Expr::parse("x^s^0", kVars).eval(vars), 2.0);
  EXPECT_DOUBLE_EQ(Expr::parse("1 - x - s", kVars).eval(vars), -4.0);
  EXPECT_DOUBLE_EQ(Expr::parse("x / s * 3", kVars).eval(vars), 2.0);
}

TEST(Expr, DerivativeMatchesFiniteDifferences) {
  const Expr e = Expr::parse("sin(x*s) + sqrt(1 + x^2) * log(2 + s) + tanh(x - s)", kVars);
  for (int var = 0; var < 2; ++var) {
    const Expr d = e.derivative(var);
    for (double x : {-0.4, 0.8}) {
      for (double s : {0.1, 1.3}) {
        double p[] = {x, s};
        double m[] = {x, s};
        const double h = 1e-6;
        p[var] += h;
        m[var] -= h;
        const double fd = (e.eval(p) - e.eval(m)) / (2 * h);
        const double at[] = {x, s};
        EXPECT_NEAR(d.eval(at), fd, 1e-7);
      }
    }
  }
}

TEST(Expr, ConstantFolding) {
  const Expr e = Expr::parse("3*x + 2*pi", kVars);
  EXPECT_TRUE(e.derivative(0).is_constant());
  EXPECT_DOUBLE_EQ(e.derivative(0).constant_value(), 3.0);
  EXPECT_TRUE(e.derivative(1).is_constant());
  EXPECT_DOUBLE_EQ(e.derivative(1).constant_value(), 0.0);
}

TEST(Expr, StrRoundTrips) {
  const Expr e = Expr::parse("0.3*cos(2*pi*s) - x/7", kVars);
  const Expr again = Expr::parse(e.str(), kVars);
  const double vars[] = {0.37, -1.21};
  EXPECT_DOUBLE_EQ(e.eval(vars), again.eval(vars));
}

TEST(Expr, RejectsMalformedInput) {
  EXPECT_THROW(Expr::parse("x +", kVars), std::invalid_argument);
  EXPECT_THROW(Expr::parse("y", kVars), std::invalid_argument);
  EXPECT_THROW(Expr::parse("sin(x", kVars), std::invalid_argument);
  EXPECT_THROW(Expr::parse("foo(x)", kVars), std::invalid_argument);
}

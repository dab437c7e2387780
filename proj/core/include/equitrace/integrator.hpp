#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <vector>

#include "equitrace/types.hpp"

namespace equitrace {

struct OdeOptions {
  double rtol = 1e-10;
  double atol = 1e-12;
  double h_max = 0.0;  // 0 means unbounded
  long max_steps = 200000;
};

/// Piecewise quintic interpolant recorded by the Dormand-Prince stepper.
/// Steps are stored in integration order; time may run backwards.
class DenseTrajectory {
 public:
  int dim() const { return dim_; }
  double t_begin() const { return t0_; }
  double t_end() const { return t1_; }
  size_t steps() const { return ts_.size(); }

  /// Evaluates the state at time t (clamped to the integrated range).
  void eval(double t, double* out) const;

  void clear(int dim, double t0) {
    dim_ = dim;
    t0_ = t0;
    t1_ = t0;
    ts_.clear();
    hs_.clear();
    coef_.clear();
  }

 private:
  template <typename Rhs>
  friend class Dp5;

  int dim_ = 0;
  double t0_ = 0.0;
  double t1_ = 0.0;
  std::vector<double> ts_;
  std::vector<double> hs_;
  std::vector<double> coef_;  // 5 * dim per step
};

/// Dormand-Prince 5(4) with the Hairer PI step controller and dense output.
/// The right-hand side is a callable `void(double t, const double* y, double* dy)`.
template <typename Rhs>
class Dp5 {
 public:
  Dp5(int dim, OdeOptions opt) : n_(dim), opt_(opt), work_(static_cast<size_t>(dim) * 12) {}

  /// Integrates y from t0 to t1 in place. Throws StepFailure when the step
  /// size underflows or the step budget is exhausted.
  void integrate(Rhs& f, double t0, double t1, double* y, DenseTrajectory* dense = nullptr);

 private:
  double* k(int i) { return work_.data() + static_cast<size_t>(i) * n_; }

  int n_;
  OdeOptions opt_;
  std::vector<double> work_;
};

inline void DenseTrajectory::eval(double t, double* out) const {
  if (ts_.empty()) {
    return;
  }
  const bool forward = t1_ >= t0_;
  size_t i;
  if (forward) {
    t = std::clamp(t, t0_, t1_);
    auto it = std::upper_bound(ts_.begin(), ts_.end(), t);
    i = it == ts_.begin() ? 0 : static_cast<size_t>(it - ts_.begin()) - 1;
  } else {
    t = std::clamp(t, t1_, t0_);
    auto it = std::upper_bound(ts_.begin(), ts_.end(), t, [](double a, double b) { return a > b; });
    i = it == ts_.begin() ? 0 : static_cast<size_t>(it - ts_.begin()) - 1;
  }
  i = std::min(i, ts_.size() - 1);
  const double theta = (t - ts_[i]) / hs_[i];
  const double theta1 = 1.0 - theta;
  const double* c = coef_.data() + i * 5 * static_cast<size_t>(dim_);
  for (int j = 0; j < dim_; ++j) {
    const double r1 = c[j];
    const double r2 = c[dim_ + j];
    const double r3 = c[2 * dim_ + j];
    const double r4 = c[3 * dim_ + j];
    const double r5 = c[4 * dim_ + j];
    out[j] = r1 + theta * (r2 + theta1 * (r3 + theta * (r4 + theta1 * r5)));
  }
}

template <typename Rhs>
void Dp5<Rhs>::integrate(Rhs& f, double t0, double t1, double* y, DenseTrajectory* dense) {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                          a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                          a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192,
                          a75 = -2187.0 / 6784, a76 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                          e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
  static constexpr double d1 = -12715105075.0 / 11282082432, d3 = 87487479700.0 / 32700410799,
                          d4 = -10690763975.0 / 1880347072, d5 = 701980252875.0 / 199316789632,
                          d6 = -1453857185.0 / 822651844, d7 = 69997945.0 / 29380423;
  static constexpr double beta = 0.04, safe = 0.9, facc1 = 1.0 / 0.2, facc2 = 1.0 / 10.0;
  static constexpr double expo1 = 0.2 - beta * 0.75;

  const int n = n_;
  if (dense != nullptr) dense->clear(n, t0);
  if (t1 == t0) return;

  double* k1 = k(0);
  double* k2 = k(1);
  double* k3 = k(2);
  double* k4 = k(3);
  double* k5 = k(4);
  double* k6 = k(5);
  double* k7 = k(6);
  double* ys = k(7);
  double* y1 = k(8);
  double* err = k(9);

  const double dir = t1 > t0 ? 1.0 : -1.0;
  const double span = std::abs(t1 - t0);
  const double hmax = opt_.h_max > 0 ? std::min(opt_.h_max, span) : span;

  f(t0, y, k1);

  // Initial step guess (Hairer's hinit).
  double h;
  {
    double dnf = 0.0, dny = 0.0;
    for (int i = 0; i < n; ++i) {
      const double sk = opt_.atol + opt_.rtol * std::abs(y[i]);
      dnf += (k1[i] / sk) * (k1[i] / sk);
      dny += (y[i] / sk) * (y[i] / sk);
    }
    h = (dnf <= 1e-10 || dny <= 1e-10) ? 1e-6 : std::sqrt(dny / dnf) * 0.01;
    h = std::min(h, hmax);
    for (int i = 0; i < n; ++i) k3[i] = y[i] + dir * h * k1[i];
    f(t0 + dir * h, k3, k2);
    double der2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double sk = opt_.atol + opt_.rtol * std::abs(y[i]);
      const double v = (k2[i] - k1[i]) / sk;
      der2 += v * v;
    }
    der2 = std::sqrt(der2) / h;
    const double der12 = std::max(std::abs(der2), std::sqrt(dnf));
    const double h1 = der12 <= 1e-15 ? std::max(1e-6, h * 1e-3) : std::pow(0.01 / der12, 0.2);
    h = std::min({100 * h, h1, hmax});
  }

  double t = t0;
  double facold = 1e-4;
  bool reject = false;
  long nstep = 0;

  for (;;) {
    if (nstep++ > opt_.max_steps) {
      std::ostringstream os;
      os << "step budget exhausted at t=" << t;
      throw StepFailure(os.str());
    }
    bool last = false;
    if ((t + dir * h - t1) * dir >= 0.0) {
      h = std::abs(t1 - t);
      last = true;
    }
    if (h <= std::max(1e-14 * std::abs(t), 1e-300)) {
      std::ostringstream os;
      os.precision(17);
      os << "step size underflow at t=" << t << " state=(";
      for (int i = 0; i < n; ++i) os << (i ? "," : "") << y[i];
      os << ")";
      throw StepFailure(os.str());
    }
    const double hs = dir * h;

    for (int i = 0; i < n; ++i) ys[i] = y[i] + hs * a21 * k1[i];
    f(t + c2 * hs, ys, k2);
    for (int i = 0; i < n; ++i) ys[i] = y[i] + hs * (a31 * k1[i] + a32 * k2[i]);
    f(t + c3 * hs, ys, k3);
    for (int i = 0; i < n; ++i) ys[i] = y[i] + hs * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
    f(t + c4 * hs, ys, k4);
    for (int i = 0; i < n; ++i)
      ys[i] = y[i] + hs * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
    f(t + c5 * hs, ys, k5);
    for (int i = 0; i < n; ++i)
      ys[i] = y[i] + hs * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
    f(t + hs, ys, k6);
    for (int i = 0; i < n; ++i)
      y1[i] = y[i] + hs * (a71 * k1[i] + a73 * k3[i] + a74 * k4[i] + a75 * k5[i] + a76 * k6[i]);
    f(t + hs, y1, k7);

    double e = 0.0;
    for (int i = 0; i < n; ++i) {
      err[i] = hs * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
      const double sk = opt_.atol + opt_.rtol * std::max(std::abs(y[i]), std::abs(y1[i]));
      e += (err[i] / sk) * (err[i] / sk);
    }
    e = std::sqrt(e / n);

    const double fac11 = std::pow(e, expo1);
    double fac = fac11 / std::pow(facold, beta);
    fac = std::max(facc2, std::min(facc1, fac / safe));
    double hnew = h / fac;

    if (e <= 1.0) {
      facold = std::max(e, 1e-4);
      if (dense != nullptr) {
        const size_t off = dense->coef_.size();
        dense->coef_.resize(off + 5 * static_cast<size_t>(n));
        double* c = dense->coef_.data() + off;
        for (int i = 0; i < n; ++i) {
          const double ydiff = y1[i] - y[i];
          const double bspl = hs * k1[i] - ydiff;
          c[i] = y[i];
          c[n + i] = ydiff;
          c[2 * n + i] = bspl;
          c[3 * n + i] = ydiff - hs * k7[i] - bspl;
          c[4 * n + i] =
              hs * (d1 * k1[i] + d3 * k3[i] + d4 * k4[i] + d5 * k5[i] + d6 * k6[i] + d7 * k7[i]);
        }
        dense->ts_.push_back(t);
        dense->hs_.push_back(hs);
      }
      for (int i = 0; i < n; ++i) {
        y[i] = y1[i];
        k1[i] = k7[i];
      }
      t = last ? t1 : t + hs;
      if (dense != nullptr) dense->t1_ = t;
      if (last) return;
      hnew = std::min(hnew, hmax);
      if (reject) hnew = std::min(hnew, h);
      reject = false;
    } else {
      hnew = h / std::min(facc1, fac11 / safe);
      reject = true;
    }
    h = hnew;
  }
}

}  // namespace equitrace

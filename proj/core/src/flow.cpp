#include "equitrace/flow.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace equitrace {

// ---------------------------------------------------------------------------
// FlowField

FlowField::FlowField(std::vector<std::string> labels, std::vector<Expr> u)
    : labels_(std::move(labels)), u_(std::move(u)) {
  const int n = dim();
  if (n < 1 || n > kMaxDim) throw DomainError("flow dimension must be between 1 and 8");
  du_.reserve(static_cast<size_t>(n * n));
  linear_ = true;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      du_.push_back(u_[static_cast<size_t>(i)].derivative(j));
      if (!du_.back().is_constant()) linear_ = false;
    }
  }
}

void FlowField::velocity(const double* m, double* out) const {
  for (size_t i = 0; i < u_.size(); ++i) out[i] = u_[i].eval(m);
}

Vec FlowField::velocity(const Vec& m) const {
  Vec out(dim());
  velocity(m.data(), out.data());
  return out;
}

void FlowField::jacobian(const double* m, double* out) const {
  for (size_t i = 0; i < du_.size(); ++i) out[i] = du_[i].eval(m);
}

Mat FlowField::jacobian(const Vec& m) const {
  const int n = dim();
  Mat j(n, n);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) j(r, c) = du_[static_cast<size_t>(r * n + c)].eval(m.data());
  }
  return j;
}

// ---------------------------------------------------------------------------
// BundleCocycle

namespace {

bool is_constant_value(const ExprMatrix& m, int i, int j, double v) {
  const Expr& e = m.at(i, j);
  return e.is_constant() && e.constant_value() == v;
}

}  // namespace

BundleCocycle BundleCocycle::trivial_line() {
  return BundleCocycle(1, ExprMatrix::zeros(1, 1), ExprMatrix::identity(1), {});
}

BundleCocycle::BundleCocycle(int rank, ExprMatrix b, ExprMatrix a, std::vector<ExprMatrix> rho)
    : rank_(rank), b_(std::move(b)), a_(std::move(a)), rho_(std::move(rho)) {
  if (rank_ < 1 || rank_ > kMaxDim) throw DomainError("bundle rank must be between 1 and 8");
  auto check_shape = [&](const ExprMatrix& m, const char* what) {
    if (m.rows != rank_ || m.cols != rank_) {
      throw DomainError(std::string(what) + " must be " + std::to_string(rank_) + "x" + std::to_string(rank_));
    }
  };
  check_shape(b_, "B");
  check_shape(a_, "A");
  for (const auto& r : rho_) check_shape(r, "rho");
  for (int i = 0; i < rank_; ++i) {
    for (int j = 0; j < rank_; ++j) {
      if (!is_constant_value(b_, i, j, 0.0)) b_zero_ = false;
      if (!is_constant_value(a_, i, j, i == j ? 1.0 : 0.0)) a_identity_ = false;
      for (const auto& r : rho_) {
        if (!is_constant_value(r, i, j, i == j ? 1.0 : 0.0)) rho_identity_ = false;
      }
    }
  }
}

Mat BundleCocycle::eval(const ExprMatrix& e, const Point& m) {
  Mat out(e.rows, e.cols);
  for (int i = 0; i < e.rows; ++i) {
    for (int j = 0; j < e.cols; ++j) out(i, j) = e.at(i, j).eval(m.data());
  }
  return out;
}

Mat BundleCocycle::generator_matrix(const Point& m) const { return eval(b_, m); }

void BundleCocycle::generator_matrix(const double* m, double* out) const {
  for (int j = 0; j < rank_; ++j) {
    for (int i = 0; i < rank_; ++i) out[j * rank_ + i] = b_.at(i, j).eval(m);
  }
}

Mat BundleCocycle::endomorphism(const Point& m) const { return eval(a_, m); }

Mat BundleCocycle::fiber_action(const GroupModel& group, const GroupElt& x, const Point& m) const {
  Mat r = Mat::Identity(rank_, rank_);
  if (rho_identity_ || rho_.empty()) return r;
  Point p = m;
  for (const auto& st : group.word(x)) {
    const auto& gen = group.generators()[static_cast<size_t>(st.gen)];
    const auto& expr = rho_.at(static_cast<size_t>(st.gen));
    if (st.sign > 0) {
      r = eval(expr, p) * r;
      p = gen.apply(p);
    } else {
      Point q = gen.apply_inverse(p);
      r = eval(expr, q).inverse() * r;
      p = q;
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Propagator

void Propagator::Rhs::operator()(double /*t*/, const double* y, double* dy) {
  const int n = sys->dim;
  sys->flow.velocity(y, dy);
  int off = n;
  if (jac) {
    sys->flow.jacobian(y, du);
    const double* jm = y + off;
    double* djm = dy + off;
    for (int c = 0; c < n; ++c) {
      for (int r = 0; r < n; ++r) {
        double acc = 0.0;
        for (int k = 0; k < n; ++k) acc += du[r * n + k] * jm[c * n + k];
        djm[c * n + r] = acc;
      }
    }
    off += n * n;
  }
  if (fib) {
    const int rk = sys->bundle.rank();
    sys->bundle.generator_matrix(y, bm);
    const double* fm = y + off;
    double* dfm = dy + off;
    for (int c = 0; c < rk; ++c) {
      for (int r = 0; r < rk; ++r) {
        double acc = 0.0;
        for (int k = 0; k < rk; ++k) acc += bm[k * rk + r] * fm[c * rk + k];
        dfm[c * rk + r] = acc;
      }
    }
  }
}

Propagator::Propagator(const CoverSystem& system) : system_(&system), rhs_{&system, false, false, {}, {}} {}

int Propagator::state_size(bool with_jacobian, bool with_fiber) const {
  const int n = system_->dim;
  const int r = system_->bundle.rank();
  return n + (with_jacobian ? n * n : 0) + (with_fiber ? r * r : 0);
}

void Propagator::check_horizon(double t) const {
  if (std::abs(t) > system_->flow.t_max * (1.0 + 1e-12)) {
    std::ostringstream os;
    os << "flow time " << t << " exceeds t_max " << system_->flow.t_max;
    throw DomainError(os.str());
  }
}

void Propagator::init(const Point& m, bool jac, bool fib) {
  const int n = system_->dim;
  const int r = system_->bundle.rank();
  if (m.size() != n) throw DomainError("point has wrong dimension");
  y_.assign(static_cast<size_t>(state_size(jac, fib)), 0.0);
  for (int i = 0; i < n; ++i) y_[static_cast<size_t>(i)] = m(i);
  int off = n;
  if (jac) {
    for (int i = 0; i < n; ++i) y_[static_cast<size_t>(off + i * n + i)] = 1.0;
    off += n * n;
  }
  if (fib) {
    for (int i = 0; i < r; ++i) y_[static_cast<size_t>(off + i * r + i)] = 1.0;
  }
  rhs_.jac = jac;
  rhs_.fib = fib;
}

Propagator::State Propagator::decode(const double* y, bool jac, bool fib) const {
  const int n = system_->dim;
  const int r = system_->bundle.rank();
  State s;
  s.x = Eigen::Map<const Vec>(y, n);
  int off = n;
  if (jac) {
    s.jac = Eigen::Map<const Mat>(y + off, n, n);
    off += n * n;
  } else {
    s.jac = Mat::Identity(n, n);
  }
  if (fib) {
    s.fiber = Eigen::Map<const Mat>(y + off, r, r);
  } else {
    s.fiber = Mat::Identity(r, r);
  }
  return s;
}

Propagator::State Propagator::propagate(const Point& m, double t, bool jac, bool fib) {
  check_horizon(t);
  fib = fib && !system_->bundle.transport_trivial();
  init(m, jac, fib);
  Dp5<Rhs> stepper(state_size(jac, fib), system_->flow.ode);
  stepper.integrate(rhs_, 0.0, t, y_.data());
  State s = decode(y_.data(), jac, fib);
  if (t == 0.0) s.x = m;
  return s;
}

void Propagator::trajectory(const Point& m, double t, bool jac, bool fib, DenseTrajectory& out) {
  check_horizon(t);
  init(m, jac, fib);
  Dp5<Rhs> stepper(state_size(jac, fib), system_->flow.ode);
  stepper.integrate(rhs_, 0.0, t, y_.data(), &out);
}

Point Propagator::flow(const Point& m, double t) { return propagate(m, t, false, false).x; }

Propagator::State Propagator::flow_with_jacobian(const Point& m, double t) {
  return propagate(m, t, true, false);
}

Mat Propagator::fiber_transport(const Point& m, double t) { return propagate(m, t, false, true).fiber; }

Point flow(const CoverSystem& system, const Point& m, double t) { return Propagator(system).flow(m, t); }

Propagator::State flow_with_jacobian(const CoverSystem& system, const Point& m, double t) {
  return Propagator(system).flow_with_jacobian(m, t);
}

Mat fiber_transport(const CoverSystem& system, const Point& m, double t) {
  return Propagator(system).fiber_transport(m, t);
}

// ---------------------------------------------------------------------------
// Hypotheses

namespace {

std::string describe_point(const Point& m) {
  std::ostringstream os;
  os.precision(10);
  os << "(";
  for (Eigen::Index i = 0; i < m.size(); ++i) os << (i ? ", " : "") << m(i);
  os << ")";
  return os.str();
}

}  // namespace

HypothesisViolation::HypothesisViolation(HypothesisReport report)
    : Error("HypothesisViolation", "standing hypotheses violated: " + report.worst), report_(std::move(report)) {}

HypothesisReport check_hypotheses(const CoverSystem& system, int samples, unsigned long seed) {
  HypothesisReport rep;
  rep.min_speed = std::numeric_limits<double>::infinity();
  Propagator prop(system);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int n = system.dim;
  const auto& group = system.group;
  const auto& bundle = system.bundle;
  const double t_span = std::min(1.0, system.flow.t_max);

  std::vector<GroupElt> gens;
  if (group.kind() == GroupKind::TranslationLine) {
    GroupElt e;
    e.s = 0.731;
    gens.push_back(e);
  } else if (group.kind() != GroupKind::Trivial) {
    for (int i = 0; i < static_cast<int>(group.generators().size()); ++i) gens.push_back(group.generator(i));
  }

  double worst_rel = 0.0;
  auto note = [&](double value, double& slot, const std::string& what) {
    slot = std::max(slot, value);
    if (value / kHypothesisTolerance > worst_rel) {
      worst_rel = value / kHypothesisTolerance;
      rep.worst = what;
    }
  };

  for (auto m0 : sample_grid(system.domain, 4)) {
    const double speed = system.flow.velocity(m0).norm();
    if (speed < rep.min_speed) rep.min_speed = speed;
  }

  for (int s = 0; s < samples; ++s) {
    Point m(n);
    for (int i = 0; i < n; ++i) {
      const double lo = system.domain.lo(i);
      const double hi = system.domain.hi(i);
      m(i) = lo + (hi - lo) * unit(rng);
    }
    const double t = t_span * (2.0 * unit(rng) - 1.0);
    rep.min_speed = std::min(rep.min_speed, system.flow.velocity(m).norm());

    const auto base = prop.propagate(m, t, false, true);
    const Mat a_m = bundle.endomorphism(m);
    const Mat a_t = bundle.endomorphism(base.x);
    {
      const double v = (a_t * base.fiber - base.fiber * a_m).cwiseAbs().maxCoeff();
      note(v, rep.a_commutation, "A does not commute with transport at " + describe_point(m));
    }

    for (const auto& g : gens) {
      const Point gm = group.act(g, m);
      const auto moved = prop.propagate(gm, t, false, true);
      const Point g_phi = group.act(g, base.x);
      note((moved.x - g_phi).norm(), rep.flow_equivariance,
           "flow not equivariant under " + group.format(g) + " at " + describe_point(m));
      const Mat rho_m = bundle.fiber_action(group, g, m);
      const Mat rho_t = bundle.fiber_action(group, g, base.x);
      note((rho_t * base.fiber - moved.fiber * rho_m).cwiseAbs().maxCoeff(), rep.bundle_equivariance,
           "bundle not equivariant under " + group.format(g) + " at " + describe_point(m));
      note((rho_m * a_m - bundle.endomorphism(gm) * rho_m).cwiseAbs().maxCoeff(), rep.a_commutation,
           "A does not commute with the action of " + group.format(g) + " at " + describe_point(m));
      if (system.quotient.active()) {
        // The group must permute deck orbits: g (d m) and g m lie in one orbit.
        for (const auto& d : system.quotient.generators()) {
          const Point a = group.act(g, system.quotient.apply(d, m));
          note(system.quotient.distance(a, gm), rep.deck_consistency,
               "action of " + group.format(g) + " does not normalize the deck group");
        }
      }
    }

    if (system.quotient.active()) {
      for (const auto& d : system.quotient.generators()) {
        const Point dm = system.quotient.apply(d, m);
        const auto moved = prop.propagate(dm, t, false, true);
        const Point d_phi = system.quotient.apply(d, base.x);
        note((moved.x - d_phi).norm(), rep.deck_consistency, "flow does not commute with deck translations");
        note((moved.fiber - base.fiber).cwiseAbs().maxCoeff(), rep.deck_consistency,
             "bundle transport is not deck invariant");
        note((bundle.endomorphism(dm) - a_m).cwiseAbs().maxCoeff(), rep.deck_consistency,
             "A is not deck invariant");
      }
    }
  }

  rep.passed = worst_rel <= 1.0 && rep.min_speed >= kMinSpeed;
  if (rep.min_speed < kMinSpeed) rep.worst = "vector field has (near) zeroes: min |u| = " + std::to_string(rep.min_speed);
  if (rep.passed) rep.worst.clear();
  return rep;
}

HypothesisReport require_hypotheses(const CoverSystem& system, int samples, unsigned long seed) {
  HypothesisReport rep = check_hypotheses(system, samples, seed);
  if (!rep.passed) throw HypothesisViolation(rep);
  return rep;
}

}  // namespace equitrace

#pragma once

#include <string>
#include <vector>

#include "equitrace/expr.hpp"
#include "equitrace/geometry.hpp"
#include "equitrace/integrator.hpp"
#include "equitrace/types.hpp"

namespace equitrace {

/// Vector field u given by one expression per coordinate, with its
/// symbolic Jacobian.
class FlowField {
 public:
  FlowField() = default;
  FlowField(std::vector<std::string> labels, std::vector<Expr> u);

  int dim() const { return static_cast<int>(u_.size()); }
  const std::vector<std::string>& labels() const { return labels_; }
  const std::vector<Expr>& components() const { return u_; }

  void velocity(const double* m, double* out) const;
  Vec velocity(const Vec& m) const;
  /// Row-major n x n Jacobian Du(m).
  void jacobian(const double* m, double* out) const;
  Mat jacobian(const Vec& m) const;

  OdeOptions ode;
  double t_max = 64.0;

 private:
  std::vector<std::string> labels_;
  std::vector<Expr> u_;
  std::vector<Expr> du_;
  bool linear_ = false;  // Du constant
};

/// Rank-r fiber data: transport generator B, endomorphism A and the group
/// fiber action rho given on generators. Deck transformations act trivially
/// on fibers.
class BundleCocycle {
 public:
  static BundleCocycle trivial_line();
  BundleCocycle(int rank, ExprMatrix b, ExprMatrix a, std::vector<ExprMatrix> rho);
  BundleCocycle() : BundleCocycle(trivial_line()) {}

  int rank() const { return rank_; }
  bool transport_trivial() const { return b_zero_; }
  bool endomorphism_identity() const { return a_identity_; }
  bool action_trivial() const { return rho_identity_; }
  bool is_trivial_line() const { return rank_ == 1 && b_zero_ && a_identity_ && rho_identity_; }

  Mat generator_matrix(const Point& m) const;  // B(m)
  void generator_matrix(const double* m, double* out) const;  // column-major
  Mat endomorphism(const Point& m) const;  // A(m)
  /// rho(x, m): E_m -> E_{x m}, composed as a cocycle along the word of x.
  Mat fiber_action(const GroupModel& group, const GroupElt& x, const Point& m) const;

  const ExprMatrix& b() const { return b_; }
  const ExprMatrix& a() const { return a_; }
  const std::vector<ExprMatrix>& rho() const { return rho_; }

 private:
  static Mat eval(const ExprMatrix& e, const Point& m);

  int rank_ = 1;
  ExprMatrix b_;
  ExprMatrix a_;
  std::vector<ExprMatrix> rho_;
  bool b_zero_ = true;
  bool a_identity_ = true;
  bool rho_identity_ = true;
};

/// The ambient object: chart, group action, optional compact quotient, flow
/// and bundle.
struct CoverSystem {
  std::string name;
  int dim = 1;
  std::vector<std::string> labels;
  GroupModel group;
  Quotient quotient;
  FlowField flow;
  BundleCocycle bundle;
  Box domain;  // sample box for coverage and hypothesis checks
};

/// Integrates the flow together with its variational equation and the fiber
/// transport. Holds reusable buffers; one instance per thread.
class Propagator {
 public:
  explicit Propagator(const CoverSystem& system);

  struct State {
    Point x;
    Mat jac;    // D phi_t, identity when not requested
    Mat fiber;  // F_t, identity when not requested
  };

  Point flow(const Point& m, double t);
  State flow_with_jacobian(const Point& m, double t);
  Mat fiber_transport(const Point& m, double t);
  State propagate(const Point& m, double t, bool with_jacobian, bool with_fiber);

  /// Dense trajectory from time 0 to t. Layout: x (n), then D phi (n*n,
  /// column-major) if requested, then F (r*r, column-major) if requested.
  void trajectory(const Point& m, double t, bool with_jacobian, bool with_fiber, DenseTrajectory& out);
  State decode(const double* y, bool with_jacobian, bool with_fiber) const;
  int state_size(bool with_jacobian, bool with_fiber) const;

  const CoverSystem& system() const { return *system_; }

 private:
  struct Rhs {
    const CoverSystem* sys;
    bool jac;
    bool fib;
    double du[kMaxDim * kMaxDim];
    double bm[kMaxDim * kMaxDim];
    void operator()(double t, const double* y, double* dy);
  };

  void check_horizon(double t) const;
  void init(const Point& m, bool jac, bool fib);

  const CoverSystem* system_;
  std::vector<double> y_;
  Rhs rhs_;
};

// Free-function forms of the propagator operations.
Point flow(const CoverSystem& system, const Point& m, double t);
Propagator::State flow_with_jacobian(const CoverSystem& system, const Point& m, double t);
Mat fiber_transport(const CoverSystem& system, const Point& m, double t);

struct HypothesisReport {
  double flow_equivariance = 0.0;
  double bundle_equivariance = 0.0;
  double a_commutation = 0.0;
  double deck_consistency = 0.0;
  double min_speed = 0.0;
  std::string worst;  // description of the worst offender
  bool passed = true;
};

class HypothesisViolation : public Error {
 public:
  explicit HypothesisViolation(HypothesisReport report);
  const HypothesisReport& report() const { return report_; }

 private:
  HypothesisReport report_;
};

inline constexpr double kHypothesisTolerance = 1e-7;
inline constexpr double kMinSpeed = 1e-6;

/// Samples the standing hypotheses: G-equivariance of the flow and of the
/// bundle, commutation of A with transport and fiber action, compatibility
/// with the deck group, and absence of zeroes of u.
HypothesisReport check_hypotheses(const CoverSystem& system, int samples, unsigned long seed);

/// Throws HypothesisViolation when check_hypotheses fails.
HypothesisReport require_hypotheses(const CoverSystem& system, int samples, unsigned long seed);

}  // namespace equitrace

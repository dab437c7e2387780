#pragma once

#include <optional>
#include <string>
#include <vector>

#include "equitrace/expr.hpp"
#include "equitrace/types.hpp"

namespace equitrace {

struct Box {
  Vec lo;
  Vec hi;
  int dim() const { return static_cast<int>(lo.size()); }
};

// f(x) = x + kappa sin(2 pi x), a lift of a degree-one circle map.
double circle_lift(double x, double kappa);
double circle_lift_derivative(double x, double kappa);
double circle_lift_inverse(double y, double kappa);

/// A diffeomorphism of the chart used as a group generator.
class ActionMap {
 public:
  enum class Kind { Affine, SuspensionSigma };

  static ActionMap affine(Mat a, Vec b);
  /// (v, s) -> (f(v), s - 1) with f the circle lift applied to each fiber coordinate.
  static ActionMap suspension_sigma(int dim, double kappa);

  Kind kind() const { return kind_; }
  int dim() const { return dim_; }
  Vec apply(const Vec& m) const;
  Vec apply_inverse(const Vec& m) const;
  Mat jacobian(const Vec& m) const;
  Mat inverse_jacobian(const Vec& m) const;  // derivative of the inverse map at m
  const Mat& matrix() const { return a_; }
  const Vec& offset() const { return b_; }
  double kappa() const { return kappa_; }
  std::string describe() const;

 private:
  Kind kind_ = Kind::Affine;
  int dim_ = 0;
  Mat a_;
  Mat a_inv_;
  Vec b_;
  double kappa_ = 0.0;
};

/// Element of a deck or symmetry group. Which field is meaningful depends on
/// the owning GroupModel kind.
struct GroupElt {
  std::vector<long> exps;  // free-abelian exponent vector
  int index = 0;           // finite: position in the shortlex element table
  double s = 0.0;          // translation-line parameter

  auto operator<=>(const GroupElt&) const = default;
};

enum class GroupKind { Trivial, FreeAbelian, Finite, TranslationLine };

const char* to_string(GroupKind kind);

/// One step of a word: generator `gen` applied with exponent +1 or -1.
struct WordStep {
  int gen;
  int sign;
};

class GroupModel {
 public:
  static GroupModel trivial(int dim);
  static GroupModel free_abelian(std::vector<ActionMap> generators);
  static GroupModel finite(std::vector<ActionMap> generators);
  static GroupModel translation_line(Vec direction);

  GroupKind kind() const { return kind_; }
  int dim() const { return dim_; }
  const char* haar() const;
  const std::vector<ActionMap>& generators() const { return gens_; }
  const Vec& direction() const { return direction_; }
  bool discrete() const { return kind_ != GroupKind::TranslationLine; }

  GroupElt identity() const;
  GroupElt compose(const GroupElt& a, const GroupElt& b) const;  // a * b
  GroupElt inverse(const GroupElt& a) const;
  GroupElt generator(int i) const;
  bool is_identity(const GroupElt& a) const;
  long order(const GroupElt& a) const;  // 0 for infinite order
  long word_length(const GroupElt& a) const;

  /// Steps in application order: act(a, m) applies steps[0] first.
  std::vector<WordStep> word(const GroupElt& a) const;

  Point act(const GroupElt& a, const Point& m) const;
  Mat act_jacobian(const GroupElt& a, const Point& m) const;

  std::string format(const GroupElt& a) const;
  GroupElt parse(const std::string& text) const;

  /// Elements with word length <= radius, by shell then payload order.
  std::vector<GroupElt> ball(long radius) const;
  std::vector<GroupElt> shell(long radius) const;
  size_t finite_size() const { return table_.size(); }

  std::vector<GroupElt> coset_representatives(const GroupElt& g, long radius) const;

 private:
  GroupKind kind_ = GroupKind::Trivial;
  int dim_ = 0;
  std::vector<ActionMap> gens_;
  Vec direction_;

  // Finite groups: each element as an affine map plus its shortlex word.
  struct FiniteElt {
    Mat a;
    Vec b;
    std::vector<int> word;  // generator indices, leftmost factor first
  };
  std::vector<FiniteElt> table_;
  std::vector<std::vector<int>> mult_;  // mult_[i][j] = index of i * j
  std::vector<int> inv_;
};

/// Element (j, k) of the mapping-torus deck group acting on (v, s) in R^{d+1}
/// by (v, s) -> (F^j(v) + k, s - j).
struct DeckElt {
  long j = 0;
  Vec k;
  bool operator==(const DeckElt& o) const { return j == o.j && k == o.k; }
};

/// Compact quotient X = R^{d+1} / deck realized as a mapping torus of a fiber
/// map F on R^d that satisfies F(v + k) = F(v) + L k. Without a quotient every
/// deck operation is the identity.
class Quotient {
 public:
  enum class Fiber { Linear, CircleLift };

  static Quotient none(int dim);
  static Quotient mapping_torus_linear(Mat l);
  static Quotient mapping_torus_circle(int fiber_dim, double kappa);

  bool active() const { return active_; }
  int dim() const { return dim_; }
  int fiber_dim() const { return dim_ - 1; }
  Fiber fiber() const { return fiber_; }
  const Mat& lattice_map() const { return l_; }
  double kappa() const { return kappa_; }

  Vec fiber_map(const Vec& v, long j) const;  // F^j(v)
  Mat fiber_jacobian(const Vec& v, long j) const;
  Mat lattice_power(long j) const;  // L^j

  DeckElt identity() const;
  Point apply(const DeckElt& d, const Point& m) const;
  Point apply_inverse(const DeckElt& d, const Point& m) const;
  Mat inverse_jacobian(const DeckElt& d, const Point& m) const;  // D(d^{-1}) at m

  /// Deck element d minimizing |d^{-1} q - p|.
  DeckElt nearest(const Point& q, const Point& p) const;
  /// Distance between the deck orbits of q and p.
  double distance(const Point& q, const Point& p) const;
  /// Representative of m in [0,1)^d x [0,1).
  Point reduce(const Point& m) const;

  /// Generators (one per fiber direction plus the suspension step).
  std::vector<DeckElt> generators() const;

 private:
  bool active_ = false;
  int dim_ = 0;
  Fiber fiber_ = Fiber::Linear;
  Mat l_;
  Mat l_inv_;
  double kappa_ = 0.0;
};

struct WindowSpec {
  enum class Kind { Bump, Constant, Suspension };
  Kind kind = Kind::Bump;
  Vec center;
  double radius = 1.0;
  Expr profile = Expr::constant(1.0);  // suspension only, over chart labels
};

/// exp(-1/(1 - r^2)) for r < 1, else 0.
double bump_profile(double r2);

/// chi(m) = w(m) / sum_x w(x m), or w / integral of w along the orbit for the
/// translation line.
class CutoffFunction {
 public:
  double operator()(const Point& m) const;
  double window(const Point& m) const;
  /// Sum (or integral) of w over the group orbit of m.
  double mass(const Point& m) const;
  /// Bounding box of supp(chi); for compact quotients the fundamental domain.
  const Box& support_box() const { return support_; }
  const WindowSpec& spec() const { return spec_; }
  /// Elements x with x supp(w) meeting supp(w) (discrete kinds).
  const std::vector<GroupElt>& overlap_set() const { return overlap_; }
  /// Largest partition-of-unity defect seen on the sample grid.
  double partition_residual() const { return partition_residual_; }
  double min_mass() const { return min_mass_; }

  friend CutoffFunction build_cutoff(const WindowSpec&, const GroupModel&, const Quotient&,
                                     const Box&);

 private:
  double mass_with(const Point& m, const std::vector<GroupElt>& elts) const;

  WindowSpec spec_;
  GroupModel group_;
  Quotient quotient_;
  std::vector<GroupElt> overlap_;
  Box support_;
  double partition_residual_ = 0.0;
  double min_mass_ = 0.0;
};

/// Builds chi for the window and checks coverage and the partition identity
/// on a sample grid of `domain`.
CutoffFunction build_cutoff(const WindowSpec& window, const GroupModel& group,
                            const Quotient& quotient, const Box& domain);

/// Regular sample grid with `per_dim` midpoints per axis (degenerate axes
/// contribute one point).
std::vector<Point> sample_grid(const Box& box, int per_dim);

}  // namespace equitrace

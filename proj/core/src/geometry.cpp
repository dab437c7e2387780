#include "equitrace/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <spdlog/fmt/fmt.h>

namespace equitrace {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::string fmt_double(double v) { return fmt::format("{}", v); }

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

}  // namespace

double circle_lift(double x, double kappa) { return x + kappa * std::sin(kTwoPi * x); }

double circle_lift_derivative(double x, double kappa) {
  return 1.0 + kappa * kTwoPi * std::cos(kTwoPi * x);
}

double circle_lift_inverse(double y, double kappa) {
  double x = y;
  for (int it = 0; it < 60; ++it) {
    const double dx = (circle_lift(x, kappa) - y) / circle_lift_derivative(x, kappa);
    x -= dx;
    if (std::abs(dx) <= 1e-16 * std::max(1.0, std::abs(x))) break;
  }
  return x;
}

// ---------------------------------------------------------------------------
// ActionMap

ActionMap ActionMap::affine(Mat a, Vec b) {
  if (a.rows() != a.cols() || a.rows() != b.size()) {
    throw DomainError("affine map needs a square matrix matching the offset");
  }
  ActionMap m;
  m.kind_ = Kind::Affine;
  m.dim_ = static_cast<int>(a.rows());
  Eigen::FullPivLU<Mat> lu(a);
  if (!lu.isInvertible()) throw DomainError("affine action matrix is singular");
  m.a_inv_ = lu.inverse();
  m.a_ = std::move(a);
  m.b_ = std::move(b);
  return m;
}

ActionMap ActionMap::suspension_sigma(int dim, double kappa) {
  if (dim < 2) throw DomainError("suspension_sigma needs dim >= 2");
  if (std::abs(kappa) * kTwoPi >= 1.0) throw DomainError("suspension_sigma needs |kappa| < 1/(2 pi)");
  ActionMap m;
  m.kind_ = Kind::SuspensionSigma;
  m.dim_ = dim;
  m.kappa_ = kappa;
  return m;
}

Vec ActionMap::apply(const Vec& m) const {
  if (kind_ == Kind::Affine) return a_ * m + b_;
  Vec out = m;
  for (int i = 0; i + 1 < dim_; ++i) out(i) = circle_lift(m(i), kappa_);
  out(dim_ - 1) = m(dim_ - 1) - 1.0;
  return out;
}

Vec ActionMap::apply_inverse(const Vec& m) const {
  if (kind_ == Kind::Affine) return a_inv_ * (m - b_);
  Vec out = m;
  for (int i = 0; i + 1 < dim_; ++i) out(i) = circle_lift_inverse(m(i), kappa_);
  out(dim_ - 1) = m(dim_ - 1) + 1.0;
  return out;
}

Mat ActionMap::jacobian(const Vec& m) const {
  if (kind_ == Kind::Affine) return a_;
  Mat j = Mat::Identity(dim_, dim_);
  for (int i = 0; i + 1 < dim_; ++i) j(i, i) = circle_lift_derivative(m(i), kappa_);
  return j;
}

Mat ActionMap::inverse_jacobian(const Vec& m) const {
  if (kind_ == Kind::Affine) return a_inv_;
  Mat j = Mat::Identity(dim_, dim_);
  for (int i = 0; i + 1 < dim_; ++i) {
    j(i, i) = 1.0 / circle_lift_derivative(circle_lift_inverse(m(i), kappa_), kappa_);
  }
  return j;
}

std::string ActionMap::describe() const {
  std::ostringstream os;
  if (kind_ == Kind::SuspensionSigma) return "suspension_sigma " + fmt_double(kappa_);
  os << "affine [";
  for (int i = 0; i < dim_; ++i) {
    os << (i ? ", [" : "[");
    for (int j = 0; j < dim_; ++j) os << (j ? ", " : "") << fmt_double(a_(i, j));
    os << "]";
  }
  os << "] [";
  for (int i = 0; i < dim_; ++i) os << (i ? ", " : "") << fmt_double(b_(i));
  os << "]";
  return os.str();
}

// ---------------------------------------------------------------------------
// GroupModel

const char* to_string(GroupKind kind) {
  switch (kind) {
    case GroupKind::Trivial: return "trivial";
    case GroupKind::FreeAbelian: return "free_abelian";
    case GroupKind::Finite: return "finite";
    case GroupKind::TranslationLine: return "translation_line";
  }
  return "?";
}

GroupModel GroupModel::trivial(int dim) {
  GroupModel g;
  g.kind_ = GroupKind::Trivial;
  g.dim_ = dim;
  return g;
}

GroupModel GroupModel::free_abelian(std::vector<ActionMap> generators) {
  if (generators.empty()) throw DomainError("free_abelian group needs at least one generator");
  GroupModel g;
  g.kind_ = GroupKind::FreeAbelian;
  g.dim_ = generators.front().dim();
  for (const auto& a : generators) {
    if (a.dim() != g.dim_) throw DomainError("generator dimension mismatch");
  }
  g.gens_ = std::move(generators);
  return g;
}

GroupModel GroupModel::finite(std::vector<ActionMap> generators) {
  if (generators.empty()) throw DomainError("finite group needs at least one generator");
  GroupModel g;
  g.kind_ = GroupKind::Finite;
  g.dim_ = generators.front().dim();
  for (const auto& a : generators) {
    if (a.kind() != ActionMap::Kind::Affine) throw DomainError("finite group generators must be affine");
    if (a.dim() != g.dim_) throw DomainError("generator dimension mismatch");
  }
  g.gens_ = std::move(generators);

  const int n = g.dim_;
  auto key_of = [n](const Mat& a, const Vec& b) {
    std::vector<long long> key;
    key.reserve(static_cast<size_t>(n * n + n));
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) key.push_back(std::llround(a(i, j) * 1e7));
      key.push_back(std::llround(b(i) * 1e7));
    }
    return key;
  };
  std::map<std::vector<long long>, int> index;
  g.table_.push_back({Mat::Identity(n, n), Vec::Zero(n), {}});
  index[key_of(g.table_[0].a, g.table_[0].b)] = 0;
  constexpr size_t kMaxOrder = 5040;
  for (size_t head = 0; head < g.table_.size(); ++head) {
    for (size_t gi = 0; gi < g.gens_.size(); ++gi) {
      const auto& e = g.table_[head];
      const auto& s = g.gens_[gi];
      Mat a = e.a * s.matrix();
      Vec b = e.a * s.offset() + e.b;
      auto key = key_of(a, b);
      if (index.count(key)) continue;
      if (g.table_.size() >= kMaxOrder) throw DomainError("finite group closure exceeds 5040 elements");
      std::vector<int> w = e.word;
      w.push_back(static_cast<int>(gi));
      index[key] = static_cast<int>(g.table_.size());
      g.table_.push_back({a, b, std::move(w)});
    }
  }
  const size_t order = g.table_.size();
  g.mult_.assign(order, std::vector<int>(order, 0));
  g.inv_.assign(order, 0);
  for (size_t i = 0; i < order; ++i) {
    for (size_t j = 0; j < order; ++j) {
      Mat a = g.table_[i].a * g.table_[j].a;
      Vec b = g.table_[i].a * g.table_[j].b + g.table_[i].b;
      auto it = index.find(key_of(a, b));
      if (it == index.end()) throw DomainError("finite group table is not closed");
      g.mult_[i][j] = it->second;
      if (it->second == 0) g.inv_[i] = static_cast<int>(j);
    }
  }
  return g;
}

GroupModel GroupModel::translation_line(Vec direction) {
  if (direction.norm() == 0.0) throw DomainError("translation direction must be nonzero");
  GroupModel g;
  g.kind_ = GroupKind::TranslationLine;
  g.dim_ = static_cast<int>(direction.size());
  g.direction_ = std::move(direction);
  return g;
}

const char* GroupModel::haar() const { return discrete() ? "counting" : "lebesgue"; }

GroupElt GroupModel::identity() const {
  GroupElt e;
  if (kind_ == GroupKind::FreeAbelian) e.exps.assign(gens_.size(), 0);
  return e;
}

GroupElt GroupModel::generator(int i) const {
  GroupElt e = identity();
  switch (kind_) {
    case GroupKind::FreeAbelian: e.exps.at(static_cast<size_t>(i)) = 1; break;
    case GroupKind::Finite: {
      const auto& a = gens_.at(static_cast<size_t>(i));
      for (size_t k = 0; k < table_.size(); ++k) {
        if ((table_[k].a - a.matrix()).cwiseAbs().maxCoeff() < 1e-9 &&
            (table_[k].b - a.offset()).cwiseAbs().maxCoeff() < 1e-9) {
          e.index = static_cast<int>(k);
          break;
        }
      }
      break;
    }
    case GroupKind::TranslationLine: e.s = 1.0; break;
    case GroupKind::Trivial: break;
  }
  return e;
}

GroupElt GroupModel::compose(const GroupElt& a, const GroupElt& b) const {
  GroupElt r = identity();
  switch (kind_) {
    case GroupKind::FreeAbelian:
      for (size_t i = 0; i < r.exps.size(); ++i) r.exps[i] = a.exps[i] + b.exps[i];
      break;
    case GroupKind::Finite: r.index = mult_[static_cast<size_t>(a.index)][static_cast<size_t>(b.index)]; break;
    case GroupKind::TranslationLine: r.s = a.s + b.s; break;
    case GroupKind::Trivial: break;
  }
  return r;
}

GroupElt GroupModel::inverse(const GroupElt& a) const {
  GroupElt r = identity();
  switch (kind_) {
    case GroupKind::FreeAbelian:
      for (size_t i = 0; i < r.exps.size(); ++i) r.exps[i] = -a.exps[i];
      break;
    case GroupKind::Finite: r.index = inv_[static_cast<size_t>(a.index)]; break;
    case GroupKind::TranslationLine: r.s = -a.s; break;
    case GroupKind::Trivial: break;
  }
  return r;
}

bool GroupModel::is_identity(const GroupElt& a) const {
  switch (kind_) {
    case GroupKind::FreeAbelian:
      return std::all_of(a.exps.begin(), a.exps.end(), [](long v) { return v == 0; });
    case GroupKind::Finite: return a.index == 0;
    case GroupKind::TranslationLine: return a.s == 0.0;
    case GroupKind::Trivial: return true;
  }
  return true;
}

long GroupModel::order(const GroupElt& a) const {
  if (is_identity(a)) return 1;
  if (kind_ != GroupKind::Finite) return 0;
  GroupElt p = a;
  for (long k = 1; k <= static_cast<long>(table_.size()); ++k) {
    if (p.index == 0) return k;
    p = compose(p, a);
  }
  return 0;
}

long GroupModel::word_length(const GroupElt& a) const {
  switch (kind_) {
    case GroupKind::FreeAbelian: {
      long s = 0;
      for (long v : a.exps) s += std::abs(v);
      return s;
    }
    case GroupKind::Finite: return static_cast<long>(table_[static_cast<size_t>(a.index)].word.size());
    case GroupKind::TranslationLine: return static_cast<long>(std::ceil(std::abs(a.s)));
    case GroupKind::Trivial: return 0;
  }
  return 0;
}

std::vector<WordStep> GroupModel::word(const GroupElt& a) const {
  std::vector<WordStep> steps;
  if (kind_ == GroupKind::FreeAbelian) {
    for (size_t i = a.exps.size(); i-- > 0;) {
      const int sign = a.exps[i] > 0 ? 1 : -1;
      for (long k = 0; k < std::abs(a.exps[i]); ++k) steps.push_back({static_cast<int>(i), sign});
    }
  } else if (kind_ == GroupKind::Finite) {
    const auto& w = table_[static_cast<size_t>(a.index)].word;
    for (size_t i = w.size(); i-- > 0;) steps.push_back({w[i], 1});
  }
  return steps;
}

Point GroupModel::act(const GroupElt& a, const Point& m) const {
  switch (kind_) {
    case GroupKind::Trivial: return m;
    case GroupKind::TranslationLine: return m + a.s * direction_;
    case GroupKind::Finite: {
      const auto& e = table_[static_cast<size_t>(a.index)];
      return e.a * m + e.b;
    }
    case GroupKind::FreeAbelian: {
      Point p = m;
      for (const auto& st : word(a)) {
        const auto& g = gens_[static_cast<size_t>(st.gen)];
        p = st.sign > 0 ? g.apply(p) : g.apply_inverse(p);
      }
      return p;
    }
  }
  return m;
}

Mat GroupModel::act_jacobian(const GroupElt& a, const Point& m) const {
  const int n = static_cast<int>(m.size());
  switch (kind_) {
    case GroupKind::Trivial:
    case GroupKind::TranslationLine: return Mat::Identity(n, n);
    case GroupKind::Finite: return table_[static_cast<size_t>(a.index)].a;
    case GroupKind::FreeAbelian: {
      Point p = m;
      Mat j = Mat::Identity(n, n);
      for (const auto& st : word(a)) {
        const auto& g = gens_[static_cast<size_t>(st.gen)];
        if (st.sign > 0) {
          j = g.jacobian(p) * j;
          p = g.apply(p);
        } else {
          j = g.inverse_jacobian(p) * j;
          p = g.apply_inverse(p);
        }
      }
      return j;
    }
  }
  return Mat::Identity(n, n);
}

std::string GroupModel::format(const GroupElt& a) const {
  switch (kind_) {
    case GroupKind::Trivial: return "e";
    case GroupKind::TranslationLine: return fmt_double(a.s);
    case GroupKind::Finite: {
      const auto& w = table_[static_cast<size_t>(a.index)].word;
      if (w.empty()) return "e";
      std::string out;
      for (size_t i = 0; i < w.size(); ++i) {
        if (i) out += "*";
        out += "g" + std::to_string(w[i] + 1);
      }
      return out;
    }
    case GroupKind::FreeAbelian: {
      if (a.exps.size() == 1) return std::to_string(a.exps[0]);
      std::string out = "(";
      for (size_t i = 0; i < a.exps.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(a.exps[i]);
      }
      return out + ")";
    }
  }
  return "?";
}

GroupElt GroupModel::parse(const std::string& raw) const {
  std::string text = trim(raw);
  auto bad = [&](const std::string& why) -> DomainError {
    return DomainError("cannot parse group element '" + raw + "': " + why);
  };
  if (text == "e" || text.empty()) return identity();
  switch (kind_) {
    case GroupKind::Trivial: throw bad("the trivial group only has 'e'");
    case GroupKind::TranslationLine: {
      try {
        size_t used = 0;
        double v = std::stod(text, &used);
        if (trim(text.substr(used)).size()) throw bad("trailing characters");
        GroupElt e;
        e.s = v;
        return e;
      } catch (const std::logic_error&) {
        throw bad("expected a real number");
      }
    }
    case GroupKind::FreeAbelian: {
      if (text.front() == '(' && text.back() == ')') text = text.substr(1, text.size() - 2);
      GroupElt e = identity();
      std::stringstream ss(text);
      std::string tok;
      size_t i = 0;
      while (std::getline(ss, tok, ',')) {
        if (i >= e.exps.size()) throw bad("too many components");
        try {
          size_t used = 0;
          e.exps[i++] = std::stol(trim(tok), &used);
        } catch (const std::logic_error&) {
          throw bad("expected integers");
        }
      }
      if (i != e.exps.size()) throw bad("expected " + std::to_string(e.exps.size()) + " components");
      return e;
    }
    case GroupKind::Finite: {
      GroupElt e = identity();
      std::stringstream ss(text);
      std::string tok;
      while (std::getline(ss, tok, '*')) {
        tok = trim(tok);
        if (tok.size() < 2 || tok[0] != 'g') throw bad("expected generator tokens gN or gN^k");
        long power = 1;
        size_t caret = tok.find('^');
        std::string num = tok.substr(1, caret == std::string::npos ? std::string::npos : caret - 1);
        int gi = 0;
        try {
          gi = std::stoi(num) - 1;
          if (caret != std::string::npos) power = std::stol(tok.substr(caret + 1));
        } catch (const std::logic_error&) {
          throw bad("malformed token '" + tok + "'");
        }
        if (gi < 0 || gi >= static_cast<int>(gens_.size())) throw bad("no generator g" + num);
        GroupElt s = generator(gi);
        if (power < 0) {
          s = inverse(s);
          power = -power;
        }
        for (long k = 0; k < power; ++k) e = compose(e, s);
      }
      return e;
    }
  }
  return identity();
}

std::vector<GroupElt> GroupModel::shell(long radius) const {
  std::vector<GroupElt> out;
  switch (kind_) {
    case GroupKind::Trivial:
    case GroupKind::TranslationLine:
      if (radius == 0) out.push_back(identity());
      break;
    case GroupKind::Finite:
      for (size_t i = 0; i < table_.size(); ++i) {
        if (static_cast<long>(table_[i].word.size()) == radius) {
          GroupElt e;
          e.index = static_cast<int>(i);
          out.push_back(e);
        }
      }
      break;
    case GroupKind::FreeAbelian: {
      const size_t k = gens_.size();
      GroupElt cur = identity();
      std::function<void(size_t, long)> rec = [&](size_t i, long left) {
        if (i + 1 == k) {
          if (left == 0) {
            cur.exps[i] = 0;
            out.push_back(cur);
          } else {
            cur.exps[i] = -left;
            out.push_back(cur);
            cur.exps[i] = left;
            out.push_back(cur);
          }
          return;
        }
        for (long v = -left; v <= left; ++v) {
          cur.exps[i] = v;
          rec(i + 1, left - std::abs(v));
        }
      };
      rec(0, radius);
      std::sort(out.begin(), out.end());
      break;
    }
  }
  return out;
}

std::vector<GroupElt> GroupModel::ball(long radius) const {
  std::vector<GroupElt> out;
  long top = radius;
  if (kind_ == GroupKind::Finite) {
    long maxw = 0;
    for (const auto& e : table_) maxw = std::max(maxw, static_cast<long>(e.word.size()));
    top = std::min(radius, maxw);
  }
  for (long r = 0; r <= top; ++r) {
    auto s = shell(r);
    out.insert(out.end(), s.begin(), s.end());
  }
  return out;
}

std::vector<GroupElt> GroupModel::coset_representatives(const GroupElt& g, long /*radius*/) const {
  if (kind_ != GroupKind::Finite) return {identity()};
  const size_t order = table_.size();
  std::vector<int> centralizer;
  for (size_t z = 0; z < order; ++z) {
    if (mult_[z][static_cast<size_t>(g.index)] == mult_[static_cast<size_t>(g.index)][z]) {
      centralizer.push_back(static_cast<int>(z));
    }
  }
  std::vector<bool> covered(order, false);
  std::vector<GroupElt> reps;
  for (size_t h = 0; h < order; ++h) {
    if (covered[h]) continue;
    GroupElt e;
    e.index = static_cast<int>(h);
    reps.push_back(e);
    for (int z : centralizer) covered[static_cast<size_t>(mult_[h][static_cast<size_t>(z)])] = true;
  }
  return reps;
}

// ---------------------------------------------------------------------------
// Quotient

Quotient Quotient::none(int dim) {
  Quotient q;
  q.dim_ = dim;
  return q;
}

Quotient Quotient::mapping_torus_linear(Mat l) {
  Quotient q;
  q.active_ = true;
  q.fiber_ = Fiber::Linear;
  q.dim_ = static_cast<int>(l.rows()) + 1;
  if (l.rows() != l.cols()) throw DomainError("fiber matrix must be square");
  for (Eigen::Index i = 0; i < l.size(); ++i) {
    if (l.data()[i] != std::round(l.data()[i])) throw DomainError("fiber matrix must be integral");
  }
  if (l.rows() > 0) {
    const double det = l.determinant();
    if (std::abs(std::abs(det) - 1.0) > 1e-12) throw DomainError("fiber matrix must be unimodular");
    q.l_inv_ = l.inverse();
    for (Eigen::Index i = 0; i < q.l_inv_.size(); ++i) q.l_inv_.data()[i] = std::round(q.l_inv_.data()[i]);
  } else {
    q.l_inv_ = l;
  }
  q.l_ = std::move(l);
  return q;
}

Quotient Quotient::mapping_torus_circle(int fiber_dim, double kappa) {
  if (std::abs(kappa) * kTwoPi >= 1.0) throw DomainError("circle lift needs |kappa| < 1/(2 pi)");
  Quotient q;
  q.active_ = true;
  q.fiber_ = Fiber::CircleLift;
  q.dim_ = fiber_dim + 1;
  q.kappa_ = kappa;
  q.l_ = Mat::Identity(fiber_dim, fiber_dim);
  q.l_inv_ = q.l_;
  return q;
}

Mat Quotient::lattice_power(long j) const {
  const int d = fiber_dim();
  Mat p = Mat::Identity(d, d);
  const Mat& step = j >= 0 ? l_ : l_inv_;
  for (long i = 0; i < std::abs(j); ++i) p = step * p;
  return p;
}

Vec Quotient::fiber_map(const Vec& v, long j) const {
  if (fiber_ == Fiber::Linear) return lattice_power(j) * v;
  Vec out = v;
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    double x = out(i);
    if (j >= 0) {
      for (long k = 0; k < j; ++k) x = circle_lift(x, kappa_);
    } else {
      for (long k = 0; k < -j; ++k) x = circle_lift_inverse(x, kappa_);
    }
    out(i) = x;
  }
  return out;
}

Mat Quotient::fiber_jacobian(const Vec& v, long j) const {
  if (fiber_ == Fiber::Linear) return lattice_power(j);
  const int d = fiber_dim();
  Mat jac = Mat::Identity(d, d);
  for (int i = 0; i < d; ++i) {
    double x = v(i);
    double der = 1.0;
    if (j >= 0) {
      for (long k = 0; k < j; ++k) {
        der *= circle_lift_derivative(x, kappa_);
        x = circle_lift(x, kappa_);
      }
    } else {
      for (long k = 0; k < -j; ++k) {
        x = circle_lift_inverse(x, kappa_);
        der /= circle_lift_derivative(x, kappa_);
      }
    }
    jac(i, i) = der;
  }
  return jac;
}

DeckElt Quotient::identity() const {
  DeckElt d;
  d.k = Vec::Zero(std::max(0, fiber_dim()));
  return d;
}

Point Quotient::apply(const DeckElt& d, const Point& m) const {
  if (!active_) return m;
  const int fd = fiber_dim();
  Point out(dim_);
  out.head(fd) = fiber_map(m.head(fd), d.j) + d.k;
  out(fd) = m(fd) - static_cast<double>(d.j);
  return out;
}

Point Quotient::apply_inverse(const DeckElt& d, const Point& m) const {
  if (!active_) return m;
  const int fd = fiber_dim();
  Point out(dim_);
  out.head(fd) = fiber_map(m.head(fd) - d.k, -d.j);
  out(fd) = m(fd) + static_cast<double>(d.j);
  return out;
}

Mat Quotient::inverse_jacobian(const DeckElt& d, const Point& m) const {
  Mat j = Mat::Identity(dim_, dim_);
  if (!active_) return j;
  const int fd = fiber_dim();
  j.topLeftCorner(fd, fd) = fiber_jacobian(m.head(fd) - d.k, -d.j);
  return j;
}

DeckElt Quotient::nearest(const Point& q, const Point& p) const {
  DeckElt d = identity();
  if (!active_) return d;
  const int fd = fiber_dim();
  d.j = std::lround(p(fd) - q(fd));
  Vec r = (fiber_map(q.head(fd), -d.j) - p.head(fd)).array().round().matrix();
  d.k = lattice_power(d.j) * r;
  return d;
}

double Quotient::distance(const Point& q, const Point& p) const {
  if (!active_) return (q - p).norm();
  return (apply_inverse(nearest(q, p), q) - p).norm();
}

Point Quotient::reduce(const Point& m) const {
  if (!active_) return m;
  const int fd = fiber_dim();
  DeckElt d = identity();
  d.j = -static_cast<long>(std::floor(m(fd)));
  Vec kk = fiber_map(m.head(fd), -d.j).array().floor().matrix();
  d.k = lattice_power(d.j) * kk;
  Point r = apply_inverse(d, m);
  // Rounding can leave a coordinate at exactly 1.
  for (int i = 0; i < dim_; ++i) {
    if (r(i) >= 1.0) r(i) -= 1.0;
    if (r(i) < 0.0 && r(i) > -1e-15) r(i) = 0.0;
  }
  return r;
}

std::vector<DeckElt> Quotient::generators() const {
  std::vector<DeckElt> gens;
  if (!active_) return gens;
  for (int i = 0; i < fiber_dim(); ++i) {
    DeckElt d = identity();
    d.k(i) = 1.0;
    gens.push_back(d);
  }
  DeckElt s = identity();
  s.j = 1;
  gens.push_back(s);
  return gens;
}

// ---------------------------------------------------------------------------
// Cutoff

double bump_profile(double r2) { return r2 < 1.0 ? std::exp(-1.0 / (1.0 - r2)) : 0.0; }

std::vector<Point> sample_grid(const Box& box, int per_dim) {
  const int n = box.dim();
  std::vector<int> counts(static_cast<size_t>(n));
  size_t total = 1;
  for (int i = 0; i < n; ++i) {
    counts[static_cast<size_t>(i)] = box.hi(i) > box.lo(i) ? per_dim : 1;
    total *= static_cast<size_t>(counts[static_cast<size_t>(i)]);
  }
  std::vector<Point> pts;
  pts.reserve(total);
  std::vector<int> idx(static_cast<size_t>(n), 0);
  for (size_t t = 0; t < total; ++t) {
    Point p(n);
    for (int i = 0; i < n; ++i) {
      const int c = counts[static_cast<size_t>(i)];
      p(i) = c == 1 ? 0.5 * (box.lo(i) + box.hi(i))
                    : box.lo(i) + (idx[static_cast<size_t>(i)] + 0.5) * (box.hi(i) - box.lo(i)) / c;
    }
    pts.push_back(p);
    for (int i = n - 1; i >= 0; --i) {
      if (++idx[static_cast<size_t>(i)] < counts[static_cast<size_t>(i)]) break;
      idx[static_cast<size_t>(i)] = 0;
    }
  }
  return pts;
}

double CutoffFunction::window(const Point& m) const {
  switch (spec_.kind) {
    case WindowSpec::Kind::Constant: return 1.0;
    case WindowSpec::Kind::Bump: {
      const double r2 = (m - spec_.center).squaredNorm() / (spec_.radius * spec_.radius);
      return bump_profile(r2);
    }
    case WindowSpec::Kind::Suspension: {
      const int fd = quotient_.fiber_dim();
      const double s = m(fd);
      const double rho = spec_.radius;
      double sum = 0.0;
      for (long j = static_cast<long>(std::ceil(s - rho)); j <= static_cast<long>(std::floor(s + rho)); ++j) {
        const double x = (s - static_cast<double>(j)) / rho;
        const double b = bump_profile(x * x);
        if (b == 0.0) continue;
        Point q = m;
        q.head(fd) = quotient_.fiber_map(m.head(fd), j);
        q(fd) = 0.0;
        sum += b * spec_.profile.eval(q.data());
      }
      return sum;
    }
  }
  return 0.0;
}

namespace {

// The window vanishes to all orders at the chord ends, where tanh-sinh
// converges double exponentially.
template <typename F>
double chord_integral(F f, double a, double b) {
  thread_local boost::math::quadrature::tanh_sinh<double> rule;
  return rule.integrate(f, a, b, 1e-12);
}

}  // namespace

double CutoffFunction::mass_with(const Point& m, const std::vector<GroupElt>& elts) const {
  double sum = 0.0;
  for (const auto& x : elts) sum += window(group_.act(x, m));
  return sum;
}

double CutoffFunction::mass(const Point& m) const {
  switch (group_.kind()) {
    case GroupKind::Trivial: return window(m);
    case GroupKind::Finite:
    case GroupKind::FreeAbelian: return mass_with(m, overlap_);
    case GroupKind::TranslationLine: {
      // Integral of w along m + s v over the chord through the bump ball.
      const Vec& v = group_.direction();
      const Vec d = m - spec_.center;
      const double a = v.squaredNorm();
      const double b = v.dot(d);
      const double c = d.squaredNorm() - spec_.radius * spec_.radius;
      const double disc = b * b - a * c;
      if (disc <= 0.0) return 0.0;
      const double root = std::sqrt(disc);
      const double s1 = (-b - root) / a;
      const double s2 = (-b + root) / a;
      auto f = [&](double s) { return window(m + s * v); };
      return chord_integral(f, s1, s2);
    }
  }
  return 0.0;
}

double CutoffFunction::operator()(const Point& m) const {
  const double w = window(m);
  if (w == 0.0) return 0.0;
  if (group_.kind() == GroupKind::Trivial) return 1.0;
  return w / mass(m);
}

namespace {

int per_dim_for(int n, double total) {
  return std::max(2, static_cast<int>(std::floor(std::pow(total, 1.0 / n) + 1e-9)));
}

// Discrete elements x for which x maps some sample of `from` into the bump
// ball. Shells are scanned until three consecutive shells add nothing.
std::vector<GroupElt> elements_meeting_ball(const GroupModel& group, const Box& from,
                                            const WindowSpec& spec) {
  const int n = from.dim();
  const int per = std::min(33, per_dim_for(n, 4000.0));
  std::vector<Point> samples = sample_grid(from, per);
  double spacing = 0.0;
  for (int i = 0; i < n; ++i) spacing = std::max(spacing, (from.hi(i) - from.lo(i)) / per);
  const double half_diag = 0.5 * spacing * std::sqrt(static_cast<double>(n));

  std::vector<GroupElt> hits;
  long last_hit = -1;
  constexpr long kMaxRadius = 40;
  for (long r = 0; r <= kMaxRadius; ++r) {
    auto sh = group.shell(r);
    if (sh.empty()) break;
    bool any = false;
    for (const auto& x : sh) {
      for (const auto& p : samples) {
        // Per-coordinate Lipschitz bounds; the norm bound blows up for
        // expanding generators even when one coordinate is a pure shift.
        const Point q = group.act(x, p);
        const Mat jac = group.act_jacobian(x, p);
        bool near = true;
        for (int i = 0; i < n && near; ++i) {
          near = std::abs(q(i) - spec.center(i)) < spec.radius + jac.row(i).norm() * half_diag;
        }
        if (near) {
          hits.push_back(x);
          any = true;
          break;
        }
      }
    }
    if (any) last_hit = r;
    if (r - last_hit >= 3) return hits;
  }
  if (group.kind() == GroupKind::Finite) return hits;
  throw CoverageFailure("overlap search did not terminate within word length 40; the action may not be proper");
}

}  // namespace

CutoffFunction build_cutoff(const WindowSpec& window, const GroupModel& group, const Quotient& quotient,
                            const Box& domain) {
  CutoffFunction chi;
  chi.spec_ = window;
  chi.group_ = group;
  chi.quotient_ = quotient;
  const int n = domain.dim();

  if (window.kind == WindowSpec::Kind::Bump) {
    if (window.center.size() != n) throw DomainError("window center has wrong dimension");
    if (!(window.radius > 0.0)) throw DomainError("window radius must be positive");
  }
  if (window.kind != WindowSpec::Kind::Bump &&
      (group.kind() == GroupKind::FreeAbelian || group.kind() == GroupKind::TranslationLine)) {
    throw DomainError("noncompact groups need a compactly supported bump window");
  }
  if (window.kind == WindowSpec::Kind::Suspension) {
    if (!quotient.active()) throw DomainError("suspension window needs a mapping-torus quotient");
    if (!window.profile.derivative(quotient.fiber_dim()).is_constant() ||
        window.profile.derivative(quotient.fiber_dim()).constant_value() != 0.0) {
      throw DomainError("suspension window profile must not depend on the suspension coordinate");
    }
    if (!(window.radius > 0.5)) throw DomainError("suspension window radius must exceed 0.5");
  }

  if (window.kind == WindowSpec::Kind::Bump) {
    chi.support_.lo = window.center.array() - window.radius;
    chi.support_.hi = window.center.array() + window.radius;
  } else {
    chi.support_ = domain;
  }

  std::vector<GroupElt> domain_set;
  switch (group.kind()) {
    case GroupKind::Trivial:
    case GroupKind::TranslationLine: domain_set = {group.identity()}; break;
    case GroupKind::Finite:
      domain_set = group.ball(1 << 20);
      chi.overlap_ = domain_set;
      break;
    case GroupKind::FreeAbelian:
      chi.overlap_ = elements_meeting_ball(group, chi.support_, window);
      domain_set = elements_meeting_ball(group, domain, window);
      break;
  }

  // Deck invariance of windows on compact quotients.
  if (quotient.active() && window.kind == WindowSpec::Kind::Suspension) {
    for (const auto& p : sample_grid(domain, per_dim_for(n, 200.0))) {
      const double w0 = chi.window(p);
      for (const auto& d : quotient.generators()) {
        const double w1 = chi.window(quotient.apply(d, p));
        if (std::abs(w1 - w0) > 1e-10 * std::max(1.0, std::abs(w0))) {
          throw DomainError("suspension window profile is not invariant under deck translations");
        }
      }
    }
  }

  const auto grid = sample_grid(domain, per_dim_for(n, 1000.0));
  double min_mass = std::numeric_limits<double>::infinity();
  double worst = 0.0;
  for (const auto& m : grid) {
    double mass = 0.0;
    double part = 0.0;
    if (group.kind() == GroupKind::TranslationLine) {
      mass = chi.mass(m);
      if (mass >= 1e-8) {
        // Integral of chi along the orbit; mass is constant along it.
        const Vec& v = group.direction();
        const Vec d = m - window.center;
        const double a = v.squaredNorm();
        const double b = v.dot(d);
        const double c = d.squaredNorm() - window.radius * window.radius;
        const double root = std::sqrt(std::max(0.0, b * b - a * c));
        auto f = [&](double s) { return chi(m + s * v); };
        part = chord_integral(f, (-b - root) / a, (-b + root) / a);
      }
    } else if (group.kind() == GroupKind::Trivial) {
      mass = chi.window(m);
      part = mass > 0.0 ? 1.0 : 0.0;
    } else {
      mass = chi.mass_with(m, domain_set);
      for (const auto& x : domain_set) part += chi(group.act(x, m));
    }
    min_mass = std::min(min_mass, mass);
    if (mass < 1e-8) {
      std::ostringstream os;
      os.precision(17);
      os << "window translates do not cover the point (";
      for (int i = 0; i < n; ++i) os << (i ? ", " : "") << m(i);
      os << "): mass " << mass;
      throw CoverageFailure(os.str());
    }
    worst = std::max(worst, std::abs(part - 1.0));
  }
  chi.partition_residual_ = worst;
  chi.min_mass_ = min_mass;
  return chi;
}

}  // namespace equitrace

#include "equitrace/expr.hpp"

#include <array>
#include <cctype>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <spdlog/fmt/fmt.h>

namespace equitrace {

namespace {

enum Op : int {
  kConst,
  kVar,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kPow,
  kNeg,
  kSin,
  kCos,
  kTan,
  kExp,
  kLog,
  kSqrt,
  kSinh,
  kCosh,
  kTanh,
};

bool is_unary_fn(int op) { return op >= kNeg; }

const char* fn_name(int op) {
  switch (op) {
    case kSin: return "sin";
    case kCos: return "cos";
    case kTan: return "tan";
    case kExp: return "exp";
    case kLog: return "log";
    case kSqrt: return "sqrt";
    case kSinh: return "sinh";
    case kCosh: return "cosh";
    case kTanh: return "tanh";
    default: return "?";
  }
}

}  // namespace

struct Expr::Node {
  int op = kConst;
  double value = 0.0;
  int var = -1;
  std::string name;
  std::shared_ptr<const Node> a;
  std::shared_ptr<const Node> b;
};

namespace {

using NodePtr = std::shared_ptr<const Expr::Node>;

NodePtr mk_const(double v) {
  auto n = std::make_shared<Expr::Node>();
  n->op = kConst;
  n->value = v;
  return n;
}

NodePtr mk_var(int index, std::string name) {
  auto n = std::make_shared<Expr::Node>();
  n->op = kVar;
  n->var = index;
  n->name = std::move(name);
  return n;
}

bool is_const(const NodePtr& n, double v) { return n->op == kConst && n->value == v; }

double apply_unary(int op, double x) {
  switch (op) {
    case kNeg: return -x;
    case kSin: return std::sin(x);
    case kCos: return std::cos(x);
    case kTan: return std::tan(x);
    case kExp: return std::exp(x);
    case kLog: return std::log(x);
    case kSqrt: return std::sqrt(x);
    case kSinh: return std::sinh(x);
    case kCosh: return std::cosh(x);
    case kTanh: return std::tanh(x);
    default: throw std::logic_error("bad unary op");
  }
}

double apply_binary(int op, double x, double y) {
  switch (op) {
    case kAdd: return x + y;
    case kSub: return x - y;
    case kMul: return x * y;
    case kDiv: return x / y;
    case kPow: return std::pow(x, y);
    default: throw std::logic_error("bad binary op");
  }
}

NodePtr mk_unary(int op, NodePtr a) {
  if (a->op == kConst) return mk_const(apply_unary(op, a->value));
  if (op == kNeg && a->op == kNeg) return a->a;
  auto n = std::make_shared<Expr::Node>();
  n->op = op;
  n->a = std::move(a);
  return n;
}

NodePtr mk_binary(int op, NodePtr a, NodePtr b) {
  if (a->op == kConst && b->op == kConst) return mk_const(apply_binary(op, a->value, b->value));
  switch (op) {
    case kAdd:
      if (is_const(a, 0.0)) return b;
      if (is_const(b, 0.0)) return a;
      break;
    case kSub:
      if (is_const(b, 0.0)) return a;
      if (is_const(a, 0.0)) return mk_unary(kNeg, b);
      break;
    case kMul:
      if (is_const(a, 0.0) || is_const(b, 0.0)) return mk_const(0.0);
      if (is_const(a, 1.0)) return b;
      if (is_const(b, 1.0)) return a;
      break;
    case kDiv:
      if (is_const(a, 0.0)) return mk_const(0.0);
      if (is_const(b, 1.0)) return a;
      break;
    case kPow:
      if (is_const(b, 0.0)) return mk_const(1.0);
      if (is_const(b, 1.0)) return a;
      break;
    default:
      break;
  }
  auto n = std::make_shared<Expr::Node>();
  n->op = op;
  n->a = std::move(a);
  n->b = std::move(b);
  return n;
}

NodePtr differentiate(const NodePtr& n, int var) {
  switch (n->op) {
    case kConst: return mk_const(0.0);
    case kVar: return mk_const(n->var == var ? 1.0 : 0.0);
    case kAdd: return mk_binary(kAdd, differentiate(n->a, var), differentiate(n->b, var));
    case kSub: return mk_binary(kSub, differentiate(n->a, var), differentiate(n->b, var));
    case kMul:
      return mk_binary(kAdd, mk_binary(kMul, differentiate(n->a, var), n->b),
                       mk_binary(kMul, n->a, differentiate(n->b, var)));
    case kDiv: {
      auto num = mk_binary(kSub, mk_binary(kMul, differentiate(n->a, var), n->b),
                           mk_binary(kMul, n->a, differentiate(n->b, var)));
      return mk_binary(kDiv, num, mk_binary(kMul, n->b, n->b));
    }
    case kPow: {
      auto da = differentiate(n->a, var);
      auto db = differentiate(n->b, var);
      if (db->op == kConst && db->value == 0.0) {
        // d(a^c) = c a^(c-1) a'
        auto c = n->b;
        auto power = mk_binary(kPow, n->a, mk_binary(kSub, c, mk_const(1.0)));
        return mk_binary(kMul, mk_binary(kMul, c, power), da);
      }
      // d(a^b) = a^b (b' log a + b a'/a)
      auto t1 = mk_binary(kMul, db, mk_unary(kLog, n->a));
      auto t2 = mk_binary(kDiv, mk_binary(kMul, n->b, da), n->a);
      return mk_binary(kMul, n, mk_binary(kAdd, t1, t2));
    }
    case kNeg: return mk_unary(kNeg, differentiate(n->a, var));
    default: break;
  }
  auto da = differentiate(n->a, var);
  if (da->op == kConst && da->value == 0.0) return da;
  NodePtr outer;
  switch (n->op) {
    case kSin: outer = mk_unary(kCos, n->a); break;
    case kCos: outer = mk_unary(kNeg, mk_unary(kSin, n->a)); break;
    case kTan: {
      auto c = mk_unary(kCos, n->a);
      outer = mk_binary(kDiv, mk_const(1.0), mk_binary(kMul, c, c));
      break;
    }
    case kExp: outer = n; break;
    case kLog: outer = mk_binary(kDiv, mk_const(1.0), n->a); break;
    case kSqrt: outer = mk_binary(kDiv, mk_const(0.5), n); break;
    case kSinh: outer = mk_unary(kCosh, n->a); break;
    case kCosh: outer = mk_unary(kSinh, n->a); break;
    case kTanh: {
      auto c = mk_unary(kCosh, n->a);
      outer = mk_binary(kDiv, mk_const(1.0), mk_binary(kMul, c, c));
      break;
    }
    default: throw std::logic_error("unknown op in derivative");
  }
  return mk_binary(kMul, outer, da);
}

void to_string(const NodePtr& n, std::ostringstream& os) {
  switch (n->op) {
    case kConst: {
      const std::string text = fmt::format("{}", n->value);
      if (n->value < 0) {
        os << '(' << text << ')';
      } else {
        os << text;
      }
      return;
    }
    case kVar: os << n->name; return;
    case kAdd:
    case kSub:
    case kMul:
    case kDiv:
    case kPow: {
      static constexpr char sym[] = {'+', '-', '*', '/', '^'};
      os << '(';
      to_string(n->a, os);
      os << ' ' << sym[n->op - kAdd] << ' ';
      to_string(n->b, os);
      os << ')';
      return;
    }
    case kNeg:
      os << "(-";
      to_string(n->a, os);
      os << ')';
      return;
    default:
      os << fn_name(n->op) << '(';
      to_string(n->a, os);
      os << ')';
  }
}

class Parser {
 public:
  Parser(std::string_view text, const std::vector<std::string>& vars) : s_(text), vars_(vars) {}

  NodePtr parse() {
    auto n = parse_sum();
    skip_ws();
    if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
    return n;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw std::invalid_argument("expression '" + std::string(s_) + "': " + msg + " at column " +
                                std::to_string(pos_ + 1));
  }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  NodePtr parse_sum() {
    auto lhs = parse_product();
    for (;;) {
      if (accept('+')) {
        lhs = mk_binary(kAdd, lhs, parse_product());
      } else if (accept('-')) {
        lhs = mk_binary(kSub, lhs, parse_product());
      } else {
        return lhs;
      }
    }
  }

  NodePtr parse_product() {
    auto lhs = parse_unary();
    for (;;) {
      if (accept('*')) {
        lhs = mk_binary(kMul, lhs, parse_unary());
      } else if (accept('/')) {
        lhs = mk_binary(kDiv, lhs, parse_unary());
      } else {
        return lhs;
      }
    }
  }

  NodePtr parse_unary() {
    if (accept('-')) return mk_unary(kNeg, parse_unary());
    if (accept('+')) return parse_unary();
    return parse_power();
  }

  NodePtr parse_power() {
    auto base = parse_primary();
    if (accept('^')) return mk_binary(kPow, base, parse_unary());
    return base;
  }

  NodePtr parse_primary() {
    skip_ws();
    if (pos_ >= s_.size()) fail("unexpected end");
    char c = s_[pos_];
    if (accept('(')) {
      auto inner = parse_sum();
      if (!accept(')')) fail("expected ')'");
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      size_t start = pos_;
      while (pos_ < s_.size() &&
             (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) {
        ++pos_;
      }
      std::string ident(s_.substr(start, pos_ - start));
      for (size_t i = 0; i < vars_.size(); ++i) {
        if (vars_[i] == ident) return mk_var(static_cast<int>(i), ident);
      }
      if (ident == "pi") return mk_const(std::numbers::pi);
      if (ident == "e") return mk_const(std::numbers::e);
      static const std::pair<const char*, int> fns[] = {
          {"sin", kSin},   {"cos", kCos},   {"tan", kTan},   {"exp", kExp},   {"log", kLog},
          {"sqrt", kSqrt}, {"sinh", kSinh}, {"cosh", kCosh}, {"tanh", kTanh},
      };
      for (const auto& [name, op] : fns) {
        if (ident == name) {
          if (!accept('(')) fail("expected '(' after " + ident);
          auto arg = parse_sum();
          if (!accept(')')) fail("expected ')'");
          return mk_unary(op, arg);
        }
      }
      fail("unknown identifier '" + ident + "'");
    }
    fail("unexpected '" + std::string(1, c) + "'");
  }

  NodePtr parse_number() {
    size_t start = pos_;
    while (pos_ < s_.size() && (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.')) {
      ++pos_;
    }
    if (pos_ < s_.size() && (s_[pos_] == 'e' || s_[pos_] == 'E')) {
      size_t save = pos_;
      ++pos_;
      if (pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) ++pos_;
      if (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
        while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      } else {
        pos_ = save;
      }
    }
    std::string tok(s_.substr(start, pos_ - start));
    try {
      size_t used = 0;
      double v = std::stod(tok, &used);
      if (used != tok.size()) fail("bad number '" + tok + "'");
      return mk_const(v);
    } catch (const std::logic_error&) {
      fail("bad number '" + tok + "'");
    }
  }

  std::string_view s_;
  const std::vector<std::string>& vars_;
  size_t pos_ = 0;
};

int emit(const NodePtr& n, std::vector<int>& ops, std::vector<int>& vars, std::vector<double>& vals) {
  int depth = 1;
  if (n->op == kConst || n->op == kVar) {
    ops.push_back(n->op);
    vars.push_back(n->var);
    vals.push_back(n->value);
    return 1;
  }
  if (is_unary_fn(n->op)) {
    depth = emit(n->a, ops, vars, vals);
  } else {
    int da = emit(n->a, ops, vars, vals);
    int db = emit(n->b, ops, vars, vals);
    depth = std::max(da, db + 1);
  }
  ops.push_back(n->op);
  vars.push_back(-1);
  vals.push_back(0.0);
  return depth;
}

}  // namespace

Expr::Expr() : Expr(mk_const(0.0)) {}

Expr::Expr(std::shared_ptr<const Node> root) : root_(std::move(root)) { compile(); }

Expr Expr::parse(std::string_view text, const std::vector<std::string>& variables) {
  return Expr(Parser(text, variables).parse());
}

Expr Expr::constant(double value) { return Expr(mk_const(value)); }

Expr Expr::variable(int index, std::string name) { return Expr(mk_var(index, std::move(name))); }

void Expr::compile() {
  std::vector<int> ops;
  std::vector<int> vars;
  std::vector<double> vals;
  max_depth_ = emit(root_, ops, vars, vals);
  if (max_depth_ > 64) throw std::invalid_argument("expression nests too deeply");
  program_.clear();
  program_.reserve(ops.size());
  for (size_t i = 0; i < ops.size(); ++i) program_.push_back({ops[i], vars[i], vals[i]});
}

double Expr::eval(std::span<const double> vars) const { return eval(vars.data()); }

double Expr::eval(const double* vars) const {
  std::array<double, 64> stack;
  int top = 0;
  for (const Instr& in : program_) {
    switch (in.op) {
      case kConst: stack[top++] = in.value; break;
      case kVar: stack[top++] = vars[in.var]; break;
      case kAdd: --top; stack[top - 1] += stack[top]; break;
      case kSub: --top; stack[top - 1] -= stack[top]; break;
      case kMul: --top; stack[top - 1] *= stack[top]; break;
      case kDiv: --top; stack[top - 1] /= stack[top]; break;
      case kPow: --top; stack[top - 1] = std::pow(stack[top - 1], stack[top]); break;
      default: stack[top - 1] = apply_unary(in.op, stack[top - 1]); break;
    }
  }
  return stack[0];
}

Expr Expr::derivative(int var) const { return Expr(differentiate(root_, var)); }

bool Expr::is_constant() const { return root_->op == kConst; }

double Expr::constant_value() const { return root_->value; }

std::string Expr::str() const {
  std::ostringstream os;
  to_string(root_, os);
  return os.str();
}

ExprMatrix ExprMatrix::identity(int n) {
  ExprMatrix m = zeros(n, n);
  for (int i = 0; i < n; ++i) m.at(i, i) = Expr::constant(1.0);
  return m;
}

ExprMatrix ExprMatrix::zeros(int r, int c) {
  ExprMatrix m;
  m.rows = r;
  m.cols = c;
  m.entries.assign(static_cast<size_t>(r * c), Expr::constant(0.0));
  return m;
}

bool ExprMatrix::is_constant() const {
  for (const auto& e : entries) {
    if (!e.is_constant()) return false;
  }
  return true;
}

}  // namespace equitrace

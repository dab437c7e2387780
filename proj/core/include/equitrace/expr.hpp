#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace equitrace {

/// Closed-form scalar expression over the chart coordinates.
///
/// Grammar: numbers, coordinate names, the constants `pi` and `e`, the
/// binary operators `+ - * / ^`, unary minus, and the functions
/// `sin cos tan exp log sqrt sinh cosh tanh`. Expressions are immutable and
/// cheap to copy; evaluation runs a compiled postfix program.
class Expr {
 public:
  Expr();  // the constant 0

  static Expr parse(std::string_view text, const std::vector<std::string>& variables);
  static Expr constant(double value);
  static Expr variable(int index, std::string name);

  double eval(std::span<const double> vars) const;
  double eval(const double* vars) const;

  /// Symbolic partial derivative with constant folding.
  Expr derivative(int var) const;

  bool is_constant() const;
  double constant_value() const;  // only valid when is_constant()
  std::string str() const;

  struct Node;

 private:
  explicit Expr(std::shared_ptr<const Node> root);
  void compile();

  struct Instr {
    int op;
    int var;
    double value;
  };

  std::shared_ptr<const Node> root_;
  std::vector<Instr> program_;
  int max_depth_ = 1;
};

/// Row-major matrix of expressions.
struct ExprMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<Expr> entries;

  static ExprMatrix identity(int n);
  static ExprMatrix zeros(int r, int c);
  const Expr& at(int i, int j) const { return entries[static_cast<size_t>(i * cols + j)]; }
  Expr& at(int i, int j) { return entries[static_cast<size_t>(i * cols + j)]; }
  bool is_constant() const;
};

}  // namespace equitrace

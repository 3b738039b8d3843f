#pragma once

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "invberge/grid.hpp"
#include "invberge/parallel.hpp"

namespace invberge {

/// Parse failure with the byte offset of the offending token.
struct ExprError : std::runtime_error {
  std::size_t position;
  ExprError(const std::string& msg, std::size_t pos)
      : std::runtime_error(msg + " at offset " + std::to_string(pos)), position(pos) {}
};

/// Evaluation left the payoff's domain (vanishing divisor, non-finite result).
struct ExprDomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

/// Node of the minimal arithmetic/predicate grammar:
///   + - * / ^ min max abs, coordinates x1..xn, comparisons and && ||.
struct Expr {
  enum class Op {
    constant, coord,
    add, sub, mul, div, pow, neg,
    min2, max2, abs1,
    lt, le, gt, ge, eq, ne,
    and2, or2,
  };
  Op op = Op::constant;
  double value = 0.0;
  int coord = -1;
  ExprPtr a, b;
};

namespace detail {

struct Token {
  enum class Kind { number, ident, op, end };
  Kind kind = Kind::end;
  double number = 0.0;
  std::string text;
  std::size_t pos = 0;
};

class Lexer {
 public:
  explicit Lexer(std::string_view s) : s_(s) { advance(); }
  const Token& peek() const { return tok_; }
  Token take() {
    Token t = tok_;
    advance();
    return t;
  }

 private:
  void advance() {
    while (i_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[i_]))) ++i_;
    tok_ = Token{};
    tok_.pos = i_;
    if (i_ >= s_.size()) {
      tok_.kind = Token::Kind::end;
      return;
    }
    const char c = s_[i_];
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '.' && i_ + 1 < s_.size() && std::isdigit(static_cast<unsigned char>(s_[i_ + 1])))) {
      const char* begin = s_.data() + i_;
      char* end = nullptr;
      tok_.number = std::strtod(begin, &end);
      tok_.kind = Token::Kind::number;
      i_ += static_cast<std::size_t>(end - begin);
      return;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t j = i_;
      while (j < s_.size() &&
             (std::isalnum(static_cast<unsigned char>(s_[j])) || s_[j] == '_'))
        ++j;
      tok_.kind = Token::Kind::ident;
      tok_.text = std::string(s_.substr(i_, j - i_));
      i_ = j;
      return;
    }
    static const char* two[] = {"<=", ">=", "==", "!=", "&&", "||"};
    for (const char* t : two) {
      if (s_.substr(i_, 2) == t) {
        tok_.kind = Token::Kind::op;
        tok_.text = t;
        i_ += 2;
        return;
      }
    }
    if (std::string_view("+-*/^(),<>").find(c) != std::string_view::npos) {
      tok_.kind = Token::Kind::op;
      tok_.text = std::string(1, c);
      ++i_;
      return;
    }
    throw ExprError("unexpected character '" + std::string(1, c) + "'", i_);
  }

  std::string_view s_;
  std::size_t i_ = 0;
  Token tok_;
};

inline ExprPtr node(Expr::Op op, ExprPtr a = nullptr, ExprPtr b = nullptr) {
  auto e = std::make_shared<Expr>();
  e->op = op;
  e->a = std::move(a);
  e->b = std::move(b);
  return e;
}

class Parser {
 public:
  Parser(std::string_view text, int n_coords) : lex_(text), n_(n_coords) {}

  ExprPtr parse() {
    ExprPtr e = parse_or();
    const Token& t = lex_.peek();
    if (t.kind != Token::Kind::end)
      throw ExprError("unexpected trailing token '" + describe(t) + "'", t.pos);
    return e;
  }

 private:
  static std::string describe(const Token& t) {
    if (t.kind == Token::Kind::number) return "number";
    return t.text;
  }

  bool accept_op(const char* s) {
    const Token& t = lex_.peek();
    if (t.kind == Token::Kind::op && t.text == s) {
      lex_.take();
      return true;
    }
    return false;
  }

  void expect_op(const char* s) {
    const Token& t = lex_.peek();
    if (t.kind != Token::Kind::op || t.text != s)
      throw ExprError("expected '" + std::string(s) + "'", t.pos);
    lex_.take();
  }

  ExprPtr parse_or() {
    ExprPtr e = parse_and();
    while (accept_op("||")) e = node(Expr::Op::or2, e, parse_and());
    return e;
  }

  ExprPtr parse_and() {
    ExprPtr e = parse_cmp();
    while (accept_op("&&")) e = node(Expr::Op::and2, e, parse_cmp());
    return e;
  }

  ExprPtr parse_cmp() {
    ExprPtr e = parse_sum();
    const Token& t = lex_.peek();
    if (t.kind == Token::Kind::op) {
      Expr::Op op;
      if (t.text == "<=") op = Expr::Op::le;
      else if (t.text == "<") op = Expr::Op::lt;
      else if (t.text == ">=") op = Expr::Op::ge;
      else if (t.text == ">") op = Expr::Op::gt;
      else if (t.text == "==") op = Expr::Op::eq;
      else if (t.text == "!=") op = Expr::Op::ne;
      else return e;
      lex_.take();
      return node(op, e, parse_sum());
    }
    return e;
  }

  ExprPtr parse_sum() {
    ExprPtr e = parse_term();
    while (true) {
      if (accept_op("+")) e = node(Expr::Op::add, e, parse_term());
      else if (accept_op("-")) e = node(Expr::Op::sub, e, parse_term());
      else return e;
    }
  }

  ExprPtr parse_term() {
    ExprPtr e = parse_unary();
    while (true) {
      if (accept_op("*")) e = node(Expr::Op::mul, e, parse_unary());
      else if (accept_op("/")) e = node(Expr::Op::div, e, parse_unary());
      else return e;
    }
  }

  ExprPtr parse_unary() {
    if (accept_op("-")) return node(Expr::Op::neg, parse_unary());
    return parse_power();
  }

  ExprPtr parse_power() {
    ExprPtr base = parse_atom();
    if (accept_op("^")) return node(Expr::Op::pow, base, parse_unary());  // right-assoc
    return base;
  }

  ExprPtr parse_atom() {
    const Token t = lex_.take();
    if (t.kind == Token::Kind::number) {
      auto e = std::make_shared<Expr>();
      e->op = Expr::Op::constant;
      e->value = t.number;
      return e;
    }
    if (t.kind == Token::Kind::ident) {
      if (t.text == "min" || t.text == "max") {
        expect_op("(");
        ExprPtr a = parse_or();
        expect_op(",");
        ExprPtr b = parse_or();
        expect_op(")");
        return node(t.text == "min" ? Expr::Op::min2 : Expr::Op::max2, a, b);
      }
      if (t.text == "abs") {
        expect_op("(");
        ExprPtr a = parse_or();
        expect_op(")");
        return node(Expr::Op::abs1, a);
      }
      if (t.text.size() >= 2 && t.text[0] == 'x') {
        bool digits = true;
        for (std::size_t i = 1; i < t.text.size(); ++i)
          digits = digits && std::isdigit(static_cast<unsigned char>(t.text[i]));
        if (digits) {
          const int k = std::atoi(t.text.c_str() + 1);
          if (k < 1 || k > n_)
            throw ExprError("coordinate " + t.text + " outside x1..x" + std::to_string(n_), t.pos);
          auto e = std::make_shared<Expr>();
          e->op = Expr::Op::coord;
          e->coord = k - 1;
          return e;
        }
      }
      throw ExprError("unknown identifier '" + t.text + "'", t.pos);
    }
    if (t.kind == Token::Kind::op && t.text == "(") {
      ExprPtr e = parse_or();
      expect_op(")");
      return e;
    }
    throw ExprError("expected a value", t.pos);
  }

  Lexer lex_;
  int n_;
};

}  // namespace detail

/// Compile an expression over coordinates x1..x<n_coords>.
inline ExprPtr parse_expression(std::string_view text, int n_coords) {
  return detail::Parser(text, n_coords).parse();
}

inline double eval_expr(const Expr& e, std::span<const double> x) {
  switch (e.op) {
    case Expr::Op::constant: return e.value;
    case Expr::Op::coord: return x[static_cast<std::size_t>(e.coord)];
    case Expr::Op::add: return eval_expr(*e.a, x) + eval_expr(*e.b, x);
    case Expr::Op::sub: return eval_expr(*e.a, x) - eval_expr(*e.b, x);
    case Expr::Op::mul: return eval_expr(*e.a, x) * eval_expr(*e.b, x);
    case Expr::Op::div: {
      const double d = eval_expr(*e.b, x);
      if (std::abs(d) < 1e-300)
        throw ExprDomainError("division by a vanishing value");
      return eval_expr(*e.a, x) / d;
    }
    case Expr::Op::pow: {
      const double r = std::pow(eval_expr(*e.a, x), eval_expr(*e.b, x));
      if (!std::isfinite(r)) throw ExprDomainError("non-finite power");
      return r;
    }
    case Expr::Op::neg: return -eval_expr(*e.a, x);
    case Expr::Op::min2: return std::min(eval_expr(*e.a, x), eval_expr(*e.b, x));
    case Expr::Op::max2: return std::max(eval_expr(*e.a, x), eval_expr(*e.b, x));
    case Expr::Op::abs1: return std::abs(eval_expr(*e.a, x));
    case Expr::Op::lt: return eval_expr(*e.a, x) < eval_expr(*e.b, x) ? 1.0 : 0.0;
    case Expr::Op::le: return eval_expr(*e.a, x) <= eval_expr(*e.b, x) ? 1.0 : 0.0;
    case Expr::Op::gt: return eval_expr(*e.a, x) > eval_expr(*e.b, x) ? 1.0 : 0.0;
    case Expr::Op::ge: return eval_expr(*e.a, x) >= eval_expr(*e.b, x) ? 1.0 : 0.0;
    case Expr::Op::eq: return eval_expr(*e.a, x) == eval_expr(*e.b, x) ? 1.0 : 0.0;
    case Expr::Op::ne: return eval_expr(*e.a, x) != eval_expr(*e.b, x) ? 1.0 : 0.0;
    case Expr::Op::and2:
      return (eval_expr(*e.a, x) != 0.0 && eval_expr(*e.b, x) != 0.0) ? 1.0 : 0.0;
    case Expr::Op::or2:
      return (eval_expr(*e.a, x) != 0.0 || eval_expr(*e.b, x) != 0.0) ? 1.0 : 0.0;
  }
  throw std::logic_error("eval_expr: bad node");
}

/// Evaluate on every grid point. Domain errors surface with the lowest
/// offending linear index regardless of thread count.
inline ScalarField tabulate_expression(const Expr& e, const ProductGrid& grid, int threads = 1) {
  ScalarField out = make_field(grid);
  const int workers = std::max(1, threads);
  std::vector<std::int64_t> bad((std::size_t)workers, -1);
  std::vector<std::string> err((std::size_t)workers);
  std::vector<std::int64_t> chunk_of((std::size_t)workers, 0);
  const std::int64_t n = grid.size();
  const std::int64_t chunk = (n + workers - 1) / workers;
  parallel_for(n, workers, [&](std::int64_t lo, std::int64_t hi) {
    const std::size_t w = static_cast<std::size_t>(lo / std::max<std::int64_t>(1, chunk));
    std::vector<double> p(static_cast<std::size_t>(grid.dim()));
    for (std::int64_t i = lo; i < hi; ++i) {
      grid.point(i, p);
      try {
        const double v = eval_expr(e, p);
        if (!std::isfinite(v)) throw ExprDomainError("non-finite value");
        out.values[static_cast<std::size_t>(i)] = v;
      } catch (const ExprDomainError& ex) {
        if (bad[w] < 0) {
          bad[w] = i;
          err[w] = ex.what();
        }
        out.values[static_cast<std::size_t>(i)] = 0.0;
      }
    }
  });
  std::int64_t first = -1;
  std::string msg;
  for (std::size_t w = 0; w < bad.size(); ++w)
    if (bad[w] >= 0 && (first < 0 || bad[w] < first)) {
      first = bad[w];
      msg = err[w];
    }
  if (first >= 0)
    throw ExprDomainError(msg + " at grid point " + grid.describe_point(first));
  return out;
}

/// Materialize a predicate as a mask (nonzero means member).
inline CellMask mask_of_expression(const Expr& e, const ProductGrid& grid, int threads = 1) {
  const ScalarField f = tabulate_expression(e, grid, threads);
  CellMask m = make_mask(grid);
  for (std::size_t i = 0; i < m.bits.size(); ++i) m.bits[i] = f.values[i] != 0.0;
  return m;
}

}  // namespace invberge

#pragma once

// Tiny recursive-descent expression language for user-defined SDE
// coefficients. Grammar:
//   expr   := term (('+'|'-') term)*
//   term   := factor (('*'|'/') factor)*
//   factor := base ('^' factor)?            -- '^' right-associative
//   base   := number | ident | func '(' args ')' | '(' expr ')' | '-' base
// Precedence: ^ above unary minus above * / above + -.
// Functions: abs sgn exp tanh sin cos min max sqrt.

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace hyposde {

struct ExprError : std::runtime_error {
  std::size_t offset;
  ExprError(const std::string& msg, std::size_t off)
      : std::runtime_error(msg + " (at byte " + std::to_string(off) + ")"),
        offset(off) {}
};

class CoeffExpr {
 public:
  enum class Kind { Number, Var, Unary, Binary, Call };

  Kind kind;
  double number = 0;
  int var_index = -1;
  std::string name;  // operator symbol or function name
  std::vector<CoeffExpr> args;

  double eval(const Eigen::VectorXd& z) const {
    switch (kind) {
      case Kind::Number:
        return number;
      case Kind::Var:
        return z[var_index];
      case Kind::Unary:
        return -args[0].eval(z);
      case Kind::Binary: {
        double a = args[0].eval(z);
        double b = args[1].eval(z);
        if (name == "+") return a + b;
        if (name == "-") return a - b;
        if (name == "*") return a * b;
        if (name == "/") {
          if (b == 0.0) throw std::domain_error("division by zero in expression");
          return a / b;
        }
        return std::pow(a, b);  // "^"
      }
      case Kind::Call: {
        if (name == "min") return std::min(args[0].eval(z), args[1].eval(z));
        if (name == "max") return std::max(args[0].eval(z), args[1].eval(z));
        double a = args[0].eval(z);
        if (name == "abs") return std::abs(a);
        if (name == "sgn") return a > 0 ? 1.0 : (a < 0 ? -1.0 : 0.0);
        if (name == "exp") return std::exp(a);
        if (name == "tanh") return std::tanh(a);
        if (name == "sin") return std::sin(a);
        if (name == "cos") return std::cos(a);
        // sqrt
        if (a < 0) throw std::domain_error("sqrt of negative value in expression");
        return std::sqrt(a);
      }
    }
    return 0;  // unreachable
  }

  std::string print() const {
    switch (kind) {
      case Kind::Number: {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.17g", number);
        return buf;
      }
      case Kind::Var:
        return name;
      case Kind::Unary:
        return "(-" + args[0].print() + ")";
      case Kind::Binary:
        return "(" + args[0].print() + " " + name + " " + args[1].print() + ")";
      case Kind::Call: {
        std::string s = name + "(" + args[0].print();
        for (std::size_t i = 1; i < args.size(); ++i) s += ", " + args[i].print();
        return s + ")";
      }
    }
    return "";
  }
};

namespace detail {

class ExprParser {
 public:
  ExprParser(const std::string& src, const std::vector<std::string>& vars)
      : src_(src), vars_(vars) {}

  CoeffExpr parse() {
    skip_ws();
    if (pos_ >= src_.size()) throw ExprError("empty expression", 0);
    CoeffExpr e = parse_expr();
    skip_ws();
    if (pos_ < src_.size())
      throw ExprError("unexpected trailing input '" + src_.substr(pos_) + "'", pos_);
    return e;
  }

 private:
  const std::string& src_;
  const std::vector<std::string>& vars_;
  std::size_t pos_ = 0;

  void skip_ws() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_])))
      ++pos_;
  }
  bool peek(char c) {
    skip_ws();
    return pos_ < src_.size() && src_[pos_] == c;
  }
  bool accept(char c) {
    if (peek(c)) {
      ++pos_;
      return true;
    }
    return false;
  }
  void expect(char c) {
    if (!accept(c))
      throw ExprError(std::string("expected '") + c + "'", pos_);
  }

  CoeffExpr parse_expr() {
    CoeffExpr lhs = parse_term();
    for (;;) {
      char op;
      if (accept('+')) op = '+';
      else if (accept('-')) op = '-';
      else break;
      CoeffExpr node;
      node.kind = CoeffExpr::Kind::Binary;
      node.name = std::string(1, op);
      node.args = {std::move(lhs), parse_term()};
      lhs = std::move(node);
    }
    return lhs;
  }

  CoeffExpr parse_term() {
    CoeffExpr lhs = parse_factor();
    for (;;) {
      char op;
      if (accept('*')) op = '*';
      else if (accept('/')) op = '/';
      else break;
      CoeffExpr node;
      node.kind = CoeffExpr::Kind::Binary;
      node.name = std::string(1, op);
      node.args = {std::move(lhs), parse_factor()};
      lhs = std::move(node);
    }
    return lhs;
  }

  CoeffExpr parse_factor() {
    CoeffExpr base = parse_base();
    if (accept('^')) {
      CoeffExpr node;
      node.kind = CoeffExpr::Kind::Binary;
      node.name = "^";
      node.args = {std::move(base), parse_factor()};  // right-associative
      return node;
    }
    return base;
  }

  CoeffExpr parse_base() {
    skip_ws();
    if (pos_ >= src_.size())
      throw ExprError("expected number, identifier, '(' or '-'", pos_);
    char c = src_[pos_];
    if (c == '-') {
      ++pos_;
      CoeffExpr node;
      node.kind = CoeffExpr::Kind::Unary;
      node.name = "-";
      node.args = {parse_base()};
      // '^' binds tighter than unary minus: -x^2 parses as -(x^2), so a
      // power immediately following the operand binds to the operand.
      if (accept('^')) {
        CoeffExpr pw;
        pw.kind = CoeffExpr::Kind::Binary;
        pw.name = "^";
        pw.args = {std::move(node.args[0]), parse_factor()};
        node.args[0] = std::move(pw);
      }
      return node;
    }
    if (c == '(') {
      ++pos_;
      CoeffExpr e = parse_expr();
      expect(')');
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_ident();
    throw ExprError(std::string("unexpected character '") + c +
                        "'; expected number, identifier, '(' or '-'",
                    pos_);
  }

  CoeffExpr parse_number() {
    std::size_t start = pos_;
    while (pos_ < src_.size() &&
           (std::isdigit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '.' ||
            src_[pos_] == 'e' || src_[pos_] == 'E' ||
            ((src_[pos_] == '+' || src_[pos_] == '-') && pos_ > start &&
             (src_[pos_ - 1] == 'e' || src_[pos_ - 1] == 'E'))))
      ++pos_;
    CoeffExpr node;
    node.kind = CoeffExpr::Kind::Number;
    try {
      node.number = std::stod(src_.substr(start, pos_ - start));
    } catch (const std::exception&) {
      throw ExprError("malformed number '" + src_.substr(start, pos_ - start) + "'",
                      start);
    }
    return node;
  }

  CoeffExpr parse_ident() {
    std::size_t start = pos_;
    while (pos_ < src_.size() &&
           (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
      ++pos_;
    std::string name = src_.substr(start, pos_ - start);
    static const std::vector<std::pair<std::string, int>> kFuncs = {
        {"abs", 1}, {"sgn", 1}, {"exp", 1},  {"tanh", 1}, {"sin", 1},
        {"cos", 1}, {"min", 2}, {"max", 2},  {"sqrt", 1}};
    for (const auto& [fname, arity] : kFuncs) {
      if (name == fname) {
        expect('(');
        CoeffExpr node;
        node.kind = CoeffExpr::Kind::Call;
        node.name = name;
        node.args.push_back(parse_expr());
        for (int i = 1; i < arity; ++i) {
          expect(',');
          node.args.push_back(parse_expr());
        }
        expect(')');
        return node;
      }
    }
    for (std::size_t i = 0; i < vars_.size(); ++i) {
      if (name == vars_[i]) {
        CoeffExpr node;
        node.kind = CoeffExpr::Kind::Var;
        node.name = name;
        node.var_index = static_cast<int>(i);
        return node;
      }
    }
    std::string valid;
    for (const auto& v : vars_) valid += (valid.empty() ? "" : ", ") + v;
    throw ExprError("unknown identifier '" + name + "'; valid variables: " + valid,
                    start);
  }
};

}  // namespace detail

inline CoeffExpr parse_coeff_expr(const std::string& src,
                                  const std::vector<std::string>& vars) {
  if (src.empty()) throw ExprError("empty expression", 0);
  return detail::ExprParser(src, vars).parse();
}

}  // namespace hyposde

#include "semrom/expression.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <numbers>

#include "semrom/error.hpp"

namespace semrom {

struct Expression::Node {
  enum class Kind { number, mu, x, y, t, neg, add, sub, mul, div, pow, call };
  Kind kind;
  double value = 0.0;
  int index = 0;  // mu index or function id
  int lhs = -1;
  int rhs = -1;
};

namespace {

using Node = Expression::Node;
using Kind = Node::Kind;

constexpr std::string_view kFunctions[] = {"sin", "cos", "tan", "exp",
                                           "log", "sqrt", "abs", "tanh"};

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  int parse_all() {
    const int root = parse_sum();
    skip_space();
    if (pos_ != text_.size()) fail("unexpected character");
    return root;
  }

  std::vector<Node> nodes;
  int parameter_count = 0;

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError("expression '" + std::string(text_) + "': " + what +
                         " at position " + std::to_string(pos_),
                     pos_);
  }

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) {
      ++pos_;
    }
  }

  bool accept(char c) {
    skip_space();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  int add(Node n) {
    nodes.push_back(n);
    return static_cast<int>(nodes.size()) - 1;
  }

  int parse_sum() {
    int lhs = parse_product();
    for (;;) {
      if (accept('+')) {
        lhs = add({Kind::add, 0.0, 0, lhs, parse_product()});
      } else if (accept('-')) {
        lhs = add({Kind::sub, 0.0, 0, lhs, parse_product()});
      } else {
        return lhs;
      }
    }
  }

  int parse_product() {
    int lhs = parse_unary();
    for (;;) {
      if (accept('*')) {
        lhs = add({Kind::mul, 0.0, 0, lhs, parse_unary()});
      } else if (accept('/')) {
        lhs = add({Kind::div, 0.0, 0, lhs, parse_unary()});
      } else {
        return lhs;
      }
    }
  }

  int parse_unary() {
    if (accept('-')) return add({Kind::neg, 0.0, 0, parse_unary(), -1});
    if (accept('+')) return parse_unary();
    return parse_power();
  }

  int parse_power() {
    const int base = parse_primary();
    if (accept('^')) return add({Kind::pow, 0.0, 0, base, parse_unary()});
    return base;
  }

  int parse_primary() {
    skip_space();
    if (pos_ >= text_.size()) fail("unexpected end of input");
    const char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      const int inner = parse_sum();
      if (!accept(')')) fail("expected ')'");
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      const std::string rest(text_.substr(pos_));
      char* end = nullptr;
      const double v = std::strtod(rest.c_str(), &end);
      if (end == rest.c_str()) fail("malformed number");
      pos_ += static_cast<std::size_t>(end - rest.c_str());
      return add({Kind::number, v});
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      const std::size_t start = pos_;
      while (pos_ < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
        ++pos_;
      }
      const std::string_view name = text_.substr(start, pos_ - start);
      if (name == "x") return add({Kind::x});
      if (name == "y") return add({Kind::y});
      if (name == "t") return add({Kind::t});
      if (name == "pi") return add({Kind::number, std::numbers::pi});
      if (name == "nu") return mu(0);
      if (name.size() > 2 && name.substr(0, 2) == "mu") {
        int index = 0;
        for (char d : name.substr(2)) {
          if (!std::isdigit(static_cast<unsigned char>(d))) {
            pos_ = start;
            fail("unknown identifier '" + std::string(name) + "'");
          }
          index = index * 10 + (d - '0');
        }
        return mu(index);
      }
      for (int f = 0; f < static_cast<int>(std::size(kFunctions)); ++f) {
        if (name != kFunctions[f]) continue;
        if (!accept('(')) fail("expected '(' after " + std::string(name));
        const int arg = parse_sum();
        if (!accept(')')) fail("expected ')'");
        return add({Kind::call, 0.0, f, arg, -1});
      }
      pos_ = start;
      fail("unknown identifier '" + std::string(name) + "'");
    }
    fail(std::string("unexpected character '") + c + "'");
  }

  int mu(int index) {
    parameter_count = std::max(parameter_count, index + 1);
    return add({Kind::mu, 0.0, index});
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

double eval(const std::vector<Node>& nodes, int i, const ExpressionScope& s) {
  const Node& n = nodes[i];
  switch (n.kind) {
    case Kind::number: return n.value;
    case Kind::mu:
      if (n.index >= static_cast<int>(s.mu.size())) {
        throw InvalidArgument("expression refers to mu" + std::to_string(n.index) +
                              " but only " + std::to_string(s.mu.size()) +
                              " parameter components were given");
      }
      return s.mu[n.index];
    case Kind::x: return s.x;
    case Kind::y: return s.y;
    case Kind::t: return s.t;
    case Kind::neg: return -eval(nodes, n.lhs, s);
    case Kind::add: return eval(nodes, n.lhs, s) + eval(nodes, n.rhs, s);
    case Kind::sub: return eval(nodes, n.lhs, s) - eval(nodes, n.rhs, s);
    case Kind::mul: return eval(nodes, n.lhs, s) * eval(nodes, n.rhs, s);
    case Kind::div: return eval(nodes, n.lhs, s) / eval(nodes, n.rhs, s);
    case Kind::pow: return std::pow(eval(nodes, n.lhs, s), eval(nodes, n.rhs, s));
    case Kind::call: {
      const double a = eval(nodes, n.lhs, s);
      switch (n.index) {
        case 0: return std::sin(a);
        case 1: return std::cos(a);
        case 2: return std::tan(a);
        case 3: return std::exp(a);
        case 4: return std::log(a);
        case 5: return std::sqrt(a);
        case 6: return std::abs(a);
        default: return std::tanh(a);
      }
    }
  }
  return 0.0;
}

}  // namespace

Expression Expression::parse(std::string_view text) {
  Parser parser(text);
  Expression expr;
  expr.root_ = parser.parse_all();
  expr.text_ = std::string(text);
  expr.parameter_count_ = parser.parameter_count;
  expr.nodes_ = std::make_shared<const std::vector<Node>>(std::move(parser.nodes));
  return expr;
}

double Expression::evaluate(const ExpressionScope& scope) const {
  if (!nodes_) throw InvalidArgument("evaluating an empty expression");
  return eval(*nodes_, root_, scope);
}

}  // namespace semrom

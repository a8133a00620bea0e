#pragma once

// Calculation trees for system functions.
//
// Grammar (whitespace-insensitive):
//
//   document := { NAME "=" node ";" } node
//   node     := INPUT | NAME
//             | "min(" nodes ")" | "max(" nodes ")" | "sum(" nodes ")"
//             | "kofn(" INT ";" nodes ")"
//             | "ind(" node ("<" | ">") (REAL | NAME) ")"
//             | "cmp(" node ("<" | ">") node ")"
//   nodes    := node { "," node }
//   INPUT    := "x" INT | "z" INT
//
// x1..xm are the sampled arguments, z1..zv are arguments with a known
// distribution. A NAME in threshold position is looked up in the parameter
// map; elsewhere it refers to an earlier definition, which is inlined.
//
// Node ids follow the calculation-tree numbering: arguments x1..xm are nodes
// 1..m, known arguments z1..zv are nodes m+1..m+v, and operator nodes follow
// in post-order so the root has the largest id.

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "resamplekit/error.hpp"

namespace resamplekit {

using NodeId = std::size_t;

enum class Op { input, known, min, max, sum, k_of_n, threshold, compare };

/// Strict comparison direction. Equality never satisfies either direction.
enum class Direction { less, greater };

struct Node {
  Op op = Op::input;
  std::vector<NodeId> children;
  std::size_t index = 0;  // 1-based argument index for input/known leaves
  std::size_t k = 0;      // k-of-n threshold
  double threshold = 0.0;
  Direction direction = Direction::less;
  std::vector<std::size_t> leaves;  // sampled arguments below this node (1-based, sorted)
};

/// Applies a single operator to already-evaluated child values.
inline double apply_op(const Node& node, std::span<const double> child) {
  switch (node.op) {
    case Op::min: return *std::min_element(child.begin(), child.end());
    case Op::max: return *std::max_element(child.begin(), child.end());
    case Op::sum: {
      double s = 0.0;
      for (double v : child) s += v;
      return s;
    }
    case Op::k_of_n: {
      std::size_t up = 0;
      for (double v : child) up += v > 0.0 ? 1 : 0;
      return up >= node.k ? 1.0 : 0.0;
    }
    case Op::threshold:
      return (node.direction == Direction::less ? child[0] < node.threshold : child[0] > node.threshold) ? 1.0 : 0.0;
    case Op::compare:
      return (node.direction == Direction::less ? child[0] < child[1] : child[0] > child[1]) ? 1.0 : 0.0;
    case Op::input:
    case Op::known: break;
  }
  fail(ErrorCode::invalid_argument, "apply_op called on a leaf");
}

class SystemSpec {
 public:
  /// Number of sampled arguments m.
  std::size_t arguments() const { return arguments_; }
  /// Number of known-distribution arguments.
  std::size_t known_arguments() const { return known_; }
  std::size_t node_count() const { return nodes_.size(); }
  NodeId root() const { return nodes_.size(); }

  const Node& node(NodeId id) const {
    require(id >= 1 && id <= nodes_.size(), ErrorCode::unknown_node, "unknown node " + std::to_string(id));
    return nodes_[id - 1];
  }

  bool is_leaf(NodeId id) const {
    const auto op = node(id).op;
    return op == Op::input || op == Op::known;
  }

  /// Set of sampled arguments the node depends upon (1-based, sorted).
  const std::vector<std::size_t>& leaf_dependencies(NodeId id) const { return node(id).leaves; }

  /// Operator nodes ordered by height (leaves have height 0), then by id.
  std::vector<std::vector<NodeId>> levels() const {
    std::vector<std::size_t> height(nodes_.size() + 1, 0);
    std::size_t top = 0;
    for (NodeId id = 1; id <= nodes_.size(); ++id) {
      for (NodeId c : nodes_[id - 1].children) height[id] = std::max(height[id], height[c] + 1);
      top = std::max(top, height[id]);
    }
    std::vector<std::vector<NodeId>> out(top);
    for (NodeId id = 1; id <= nodes_.size(); ++id)
      if (height[id] > 0) out[height[id] - 1].push_back(id);
    return out;
  }

  /// True when every value the root can produce lies in {0, 1}.
  bool indicator_rooted() const {
    const auto op = node(root()).op;
    return op == Op::threshold || op == Op::compare || op == Op::k_of_n;
  }

  double evaluate(std::span<const double> x, std::span<const double> z = {}) const {
    require(x.size() == arguments_, ErrorCode::arity_mismatch,
            "expected " + std::to_string(arguments_) + " arguments, got " + std::to_string(x.size()));
    require(z.size() == known_, ErrorCode::arity_mismatch,
            "expected " + std::to_string(known_) + " known arguments, got " + std::to_string(z.size()));
    return eval(root(), x, z);
  }

  /// Re-assembles an expression equivalent to this tree.
  std::string to_string(NodeId id) const;
  std::string to_string() const { return to_string(root()); }

 private:
  friend class SystemBuilder;

  double eval(NodeId id, std::span<const double> x, std::span<const double> z) const {
    const Node& n = nodes_[id - 1];
    switch (n.op) {
      case Op::input: return x[n.index - 1];
      case Op::known: return z[n.index - 1];
      case Op::threshold: {
        const double v = eval(n.children[0], x, z);
        return (n.direction == Direction::less ? v < n.threshold : v > n.threshold) ? 1.0 : 0.0;
      }
      case Op::compare: {
        const double a = eval(n.children[0], x, z);
        const double b = eval(n.children[1], x, z);
        return (n.direction == Direction::less ? a < b : a > b) ? 1.0 : 0.0;
      }
      case Op::min: {
        double v = std::numeric_limits<double>::infinity();
        for (NodeId c : n.children) v = std::min(v, eval(c, x, z));
        return v;
      }
      case Op::max: {
        double v = -std::numeric_limits<double>::infinity();
        for (NodeId c : n.children) v = std::max(v, eval(c, x, z));
        return v;
      }
      case Op::sum: {
        double v = 0.0;
        for (NodeId c : n.children) v += eval(c, x, z);
        return v;
      }
      case Op::k_of_n: {
        std::size_t up = 0;
        for (NodeId c : n.children) up += eval(c, x, z) > 0.0 ? 1 : 0;
        return up >= n.k ? 1.0 : 0.0;
      }
    }
    return 0.0;
  }

  std::vector<Node> nodes_;
  std::size_t arguments_ = 0;
  std::size_t known_ = 0;
};

inline std::string SystemSpec::to_string(NodeId id) const {
  const Node& n = node(id);
  auto list = [&](std::string head) {
    for (std::size_t i = 0; i < n.children.size(); ++i)
      head += (i ? ", " : "") + to_string(n.children[i]);
    return head + ")";
  };
  const char* dir = n.direction == Direction::less ? " < " : " > ";
  switch (n.op) {
    case Op::input: return "x" + std::to_string(n.index);
    case Op::known: return "z" + std::to_string(n.index);
    case Op::min: return list("min(");
    case Op::max: return list("max(");
    case Op::sum: return list("sum(");
    case Op::k_of_n: return list("kofn(" + std::to_string(n.k) + "; ");
    case Op::threshold: {
      std::string t = std::to_string(n.threshold);
      return "ind(" + to_string(n.children[0]) + dir + t + ")";
    }
    case Op::compare: return "cmp(" + to_string(n.children[0]) + dir + to_string(n.children[1]) + ")";
  }
  return {};
}

/// Expression tree produced by the parser before node numbering.
struct Expr {
  Op op = Op::input;
  std::size_t index = 0;
  std::size_t k = 0;
  double threshold = 0.0;
  Direction direction = Direction::less;
  std::vector<Expr> children;
};

/// Numbers an expression tree and validates the structural invariants.
class SystemBuilder {
 public:
  static SystemSpec build(const Expr& root) {
    std::map<std::size_t, int> x_seen, z_seen;
    collect(root, x_seen, z_seen);
    auto contiguous = [](const std::map<std::size_t, int>& seen, char name) {
      std::size_t expect = 1;
      for (const auto& [idx, count] : seen) {
        require(idx == expect, ErrorCode::unknown_input,
                std::string("arguments must be numbered ") + name + "1.." + name + "m without gaps; missing " +
                    name + std::to_string(expect));
        require(count == 1, ErrorCode::invalid_argument,
                std::string(1, name) + std::to_string(idx) +
                    " appears more than once; sibling dependency sets must be disjoint");
        ++expect;
      }
      return seen.size();
    };
    SystemSpec spec;
    spec.arguments_ = contiguous(x_seen, 'x');
    spec.known_ = contiguous(z_seen, 'z');
    require(spec.arguments_ + spec.known_ > 0, ErrorCode::invalid_argument, "system has no inputs");
    spec.nodes_.resize(spec.arguments_ + spec.known_);
    for (std::size_t i = 1; i <= spec.arguments_; ++i) {
      Node& n = spec.nodes_[i - 1];
      n.op = Op::input;
      n.index = i;
      n.leaves = {i};
    }
    for (std::size_t i = 1; i <= spec.known_; ++i) {
      Node& n = spec.nodes_[spec.arguments_ + i - 1];
      n.op = Op::known;
      n.index = i;
    }
    // A bare leaf is its own root only when it is the sole node.
    number(root, spec);
    return spec;
  }

 private:
  static void collect(const Expr& e, std::map<std::size_t, int>& xs, std::map<std::size_t, int>& zs) {
    if (e.op == Op::input) ++xs[e.index];
    if (e.op == Op::known) ++zs[e.index];
    for (const auto& c : e.children) collect(c, xs, zs);
  }

  static NodeId number(const Expr& e, SystemSpec& spec) {
    if (e.op == Op::input) return e.index;
    if (e.op == Op::known) return spec.arguments_ + e.index;
    Node n;
    n.op = e.op;
    n.k = e.k;
    n.threshold = e.threshold;
    n.direction = e.direction;
    for (const auto& c : e.children) {
      const NodeId id = number(c, spec);
      n.children.push_back(id);
      const auto& sub = spec.nodes_[id - 1].leaves;
      n.leaves.insert(n.leaves.end(), sub.begin(), sub.end());
    }
    std::sort(n.leaves.begin(), n.leaves.end());
    spec.nodes_.push_back(std::move(n));
    return spec.nodes_.size();
  }
};

namespace detail {

class Parser {
 public:
  Parser(std::string_view text, const std::map<std::string, double>& params) : text_(text), params_(params) {}

  Expr document() {
    for (;;) {
      skip();
      const std::size_t save = pos_;
      if (std::isalpha(peek()) || peek() == '_') {
        std::string name = identifier();
        skip();
        if (peek() == '=' && !is_reserved(name)) {
          ++pos_;
          require_not_defined(name, save);
          definitions_[name] = {pos_, false};
          Expr ignored = node();  // syntax check now; expanded on use
          (void)ignored;
          skip();
          expect(';');
          continue;
        }
      }
      pos_ = save;
      break;
    }
    Expr root = node();
    skip();
    if (pos_ != text_.size()) error("unexpected trailing input");
    return root;
  }

 private:
  struct Definition {
    std::size_t start;
    bool expanding;
  };

  static bool is_reserved(const std::string& name) {
    if (name == "min" || name == "max" || name == "sum" || name == "kofn" || name == "ind" || name == "cmp")
      return true;
    return input_index(name).has_value();
  }

  static std::optional<std::size_t> input_index(const std::string& name) {
    if (name.size() < 2 || (name[0] != 'x' && name[0] != 'z')) return std::nullopt;
    for (std::size_t i = 1; i < name.size(); ++i)
      if (!std::isdigit(static_cast<unsigned char>(name[i]))) return std::nullopt;
    const std::size_t v = std::stoul(name.substr(1));
    if (v == 0) return std::nullopt;
    return v;
  }

  [[noreturn]] void error(const std::string& what) const {
    fail(ErrorCode::syntax, "syntax error at offset " + std::to_string(pos_) + ": " + what);
  }

  void require_not_defined(const std::string& name, std::size_t at) {
    if (definitions_.count(name)) {
      pos_ = at;
      error("'" + name + "' defined twice");
    }
  }

  int peek() const { return pos_ < text_.size() ? static_cast<unsigned char>(text_[pos_]) : -1; }

  void skip() {
    while (pos_ < text_.size()) {
      if (std::isspace(static_cast<unsigned char>(text_[pos_]))) {
        ++pos_;
      } else if (text_[pos_] == '#') {
        while (pos_ < text_.size() && text_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  void expect(char c) {
    skip();
    if (peek() != c) error(std::string("expected '") + c + "'");
    ++pos_;
  }

  std::string identifier() {
    skip();
    const std::size_t start = pos_;
    while (std::isalnum(peek()) || peek() == '_') ++pos_;
    if (start == pos_) error("expected identifier");
    return std::string(text_.substr(start, pos_ - start));
  }

  double number() {
    skip();
    const std::size_t start = pos_;
    while (std::isdigit(peek()) || peek() == '.' || peek() == '-' || peek() == '+' || peek() == 'e' ||
           peek() == 'E')
      ++pos_;
    const std::string token(text_.substr(start, pos_ - start));
    if (token.empty()) error("expected number");
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(token, &used);
    } catch (const std::exception&) {
      pos_ = start;
      error("malformed number '" + token + "'");
    }
    if (used != token.size()) {
      pos_ = start;
      error("malformed number '" + token + "'");
    }
    return v;
  }

  Direction direction() {
    skip();
    if (peek() == '<') {
      ++pos_;
      return Direction::less;
    }
    if (peek() == '>') {
      ++pos_;
      return Direction::greater;
    }
    error("expected '<' or '>'");
  }

  std::vector<Expr> list() {
    std::vector<Expr> out;
    out.push_back(node());
    for (;;) {
      skip();
      if (peek() != ',') break;
      ++pos_;
      out.push_back(node());
    }
    expect(')');
    return out;
  }

  Expr node() {
    skip();
    const std::size_t start = pos_;
    const std::string name = identifier();
    if (auto idx = input_index(name)) {
      Expr e;
      e.op = name[0] == 'x' ? Op::input : Op::known;
      e.index = *idx;
      return e;
    }
    skip();
    if (peek() != '(') {
      auto it = definitions_.find(name);
      if (it == definitions_.end()) {
        pos_ = start;
        fail(ErrorCode::unknown_input,
             "unknown input name '" + name + "' at offset " + std::to_string(start));
      }
      if (it->second.expanding) {
        fail(ErrorCode::cyclic_reference,
             "cyclic reference through '" + name + "' at offset " + std::to_string(start));
      }
      it->second.expanding = true;
      const std::size_t resume = pos_;
      pos_ = it->second.start;
      Expr e = node();
      pos_ = resume;
      it->second.expanding = false;
      return e;
    }
    ++pos_;
    Expr e;
    if (name == "min" || name == "max" || name == "sum") {
      e.op = name == "min" ? Op::min : name == "max" ? Op::max : Op::sum;
      e.children = list();
    } else if (name == "kofn") {
      e.op = Op::k_of_n;
      const double k = number();
      if (k < 1 || k != static_cast<double>(static_cast<std::size_t>(k))) error("k must be a positive integer");
      e.k = static_cast<std::size_t>(k);
      expect(';');
      e.children = list();
      if (e.k > e.children.size()) {
        fail(ErrorCode::invalid_argument, "kofn with k=" + std::to_string(e.k) + " > n=" +
                                              std::to_string(e.children.size()) + " at offset " +
                                              std::to_string(start));
      }
    } else if (name == "ind") {
      e.op = Op::threshold;
      e.children.push_back(node());
      e.direction = direction();
      skip();
      if (std::isalpha(peek()) || peek() == '_') {
        const std::size_t at = pos_;
        const std::string param = identifier();
        auto it = params_.find(param);
        if (it == params_.end()) {
          pos_ = at;
          fail(ErrorCode::unknown_input, "unknown parameter '" + param + "' at offset " + std::to_string(at));
        }
        e.threshold = it->second;
      } else {
        e.threshold = number();
      }
      expect(')');
    } else if (name == "cmp") {
      e.op = Op::compare;
      e.children.push_back(node());
      e.direction = direction();
      e.children.push_back(node());
      expect(')');
    } else {
      pos_ = start;
      error("unknown operator '" + name + "'");
    }
    return e;
  }

  std::string_view text_;
  const std::map<std::string, double>& params_;
  std::size_t pos_ = 0;
  std::map<std::string, Definition> definitions_;
};

}  // namespace detail

/// Parses a system document into a validated calculation tree.
inline SystemSpec parse_system(std::string_view text, const std::map<std::string, double>& params = {}) {
  detail::Parser parser(text, params);
  return SystemBuilder::build(parser.document());
}

/// Sampled arguments reachable from node v.
inline const std::vector<std::size_t>& leaf_dependencies(const SystemSpec& spec, NodeId v) {
  return spec.leaf_dependencies(v);
}

inline double evaluate(const SystemSpec& spec, std::span<const double> x, std::span<const double> z = {}) {
  return spec.evaluate(x, z);
}

}  // namespace resamplekit

#pragma once

#include <algorithm>
#include <cctype>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "msou/error.hpp"

namespace msou {

using Letter = std::string;

inline const Letter kOmega = "omega";
inline const Letter kNd = "nd";
inline const Letter kQuery = "?";
inline const Letter kCut = "#cut";

inline bool is_reserved(const Letter& a) {
  return a == kOmega || a == kNd || a == kQuery || a == kCut;
}

/// Throws unless `a` may appear in a user-declared alphabet.
inline void check_user_letter(const Letter& a) {
  if (a.empty()) throw input_error("empty letter");
  if (is_reserved(a)) throw input_error("letter '" + a + "' is reserved");
  if (a.find('*') != std::string::npos) throw input_error("letter '" + a + "' contains the wildcard '*'");
}

// ---------------------------------------------------------------------------
// Processed letters
//
// A layer appends its output to the letter it read: "a|0112" is the letter a with the
// value list 0,1,1,2 (one digit per state, in state order). Repeated layers nest:
// "a|01|100". A pattern may use "*" for a whole component and, after the first
// component, "?" for a single digit.

inline std::vector<std::string> letter_components(const Letter& a) {
  std::vector<std::string> out;
  size_t start = 0;
  for (;;) {
    size_t bar = a.find('|', start);
    out.push_back(a.substr(start, bar == std::string::npos ? std::string::npos : bar - start));
    if (bar == std::string::npos) return out;
    start = bar + 1;
  }
}

inline Letter join_components(const std::vector<std::string>& cs) {
  Letter out;
  for (size_t i = 0; i < cs.size(); ++i) out += (i ? "|" : "") + cs[i];
  return out;
}

inline bool is_pattern(const Letter& p) {
  if (p.find('*') != std::string::npos) return true;
  size_t bar = p.find('|');
  return bar != std::string::npos && p.find('?', bar) != std::string::npos;
}

inline bool letter_matches(const Letter& pattern, const Letter& a) {
  if (!is_pattern(pattern)) return pattern == a;
  auto ps = letter_components(pattern), as = letter_components(a);
  if (ps.size() != as.size()) return false;
  for (size_t i = 0; i < ps.size(); ++i) {
    if (ps[i] == "*") continue;
    if (i == 0 || ps[i].size() != as[i].size()) {
      if (ps[i] != as[i]) return false;
      continue;
    }
    for (size_t k = 0; k < ps[i].size(); ++k)
      if (ps[i][k] != '?' && ps[i][k] != as[i][k]) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Node paths

using NodePath = std::vector<int>;

inline std::string path_to_string(const NodePath& u) {
  if (u.empty()) return "e";
  std::string s;
  for (size_t i = 0; i < u.size(); ++i) {
    if (i) s += '.';
    s += std::to_string(u[i]);
  }
  return s;
}

inline NodePath concat(const NodePath& u, const NodePath& v) {
  NodePath w = u;
  w.insert(w.end(), v.begin(), v.end());
  return w;
}

inline bool is_prefix(const NodePath& u, const NodePath& w) {
  return u.size() <= w.size() && std::equal(u.begin(), u.end(), w.begin());
}

// ---------------------------------------------------------------------------
// Finite trees

struct FiniteTree {
  Letter label;
  std::vector<FiniteTree> children;

  FiniteTree() = default;
  explicit FiniteTree(Letter l, std::vector<FiniteTree> cs = {})
      : label(std::move(l)), children(std::move(cs)) {}

  size_t arity() const { return children.size(); }
  bool operator==(const FiniteTree&) const = default;
  auto operator<=>(const FiniteTree& o) const {
    if (auto c = label <=> o.label; c != 0) return c;
    return std::lexicographical_compare_three_way(children.begin(), children.end(),
                                                  o.children.begin(), o.children.end());
  }
};

inline size_t tree_size(const FiniteTree& t) {
  size_t n = 1;
  for (const auto& c : t.children) n += tree_size(c);
  return n;
}

inline size_t tree_height(const FiniteTree& t) {
  size_t h = 0;
  for (const auto& c : t.children) h = std::max(h, 1 + tree_height(c));
  return h;
}

inline size_t max_arity(const FiniteTree& t) {
  size_t m = t.children.size();
  for (const auto& c : t.children) m = std::max(m, max_arity(c));
  return m;
}

/// All nodes in preorder.
inline std::vector<NodePath> nodes_of(const FiniteTree& t) {
  std::vector<NodePath> out;
  std::function<void(const FiniteTree&, NodePath&)> go = [&](const FiniteTree& s, NodePath& u) {
    out.push_back(u);
    for (size_t i = 0; i < s.children.size(); ++i) {
      u.push_back(static_cast<int>(i + 1));
      go(s.children[i], u);
      u.pop_back();
    }
  };
  NodePath root;
  go(t, root);
  return out;
}

inline bool has_node(const FiniteTree& t, const NodePath& u) {
  const FiniteTree* cur = &t;
  for (int i : u) {
    if (i < 1 || static_cast<size_t>(i) > cur->children.size()) return false;
    cur = &cur->children[i - 1];
  }
  return true;
}

inline const FiniteTree& node_at(const FiniteTree& t, const NodePath& u) {
  const FiniteTree* cur = &t;
  for (size_t k = 0; k < u.size(); ++k) {
    int i = u[k];
    if (i < 1 || static_cast<size_t>(i) > cur->children.size()) {
      NodePath valid(u.begin(), u.begin() + static_cast<long>(k));
      throw input_error("path " + path_to_string(u) + " not present; longest valid prefix " +
                        path_to_string(valid));
    }
    cur = &cur->children[i - 1];
  }
  return *cur;
}

inline FiniteTree subtree(const FiniteTree& t, const NodePath& u) { return node_at(t, u); }

inline bool same_shape(const FiniteTree& t, const FiniteTree& t2) {
  if (t.children.size() != t2.children.size()) return false;
  for (size_t i = 0; i < t.children.size(); ++i)
    if (!same_shape(t.children[i], t2.children[i])) return false;
  return true;
}

inline std::set<Letter> labels_of(const FiniteTree& t) {
  std::set<Letter> out;
  std::function<void(const FiniteTree&)> go = [&](const FiniteTree& s) {
    out.insert(s.label);
    for (const auto& c : s.children) go(c);
  };
  go(t);
  return out;
}

// ---------------------------------------------------------------------------
// Term syntax

namespace detail {

inline bool is_token_char(char c) {
  return !std::isspace(static_cast<unsigned char>(c)) && c != '[' && c != ']' && c != ',';
}

struct TreeLexer {
  const std::string& s;
  size_t pos = 0;

  void skip_ws() {
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
  }
  bool at_end() {
    skip_ws();
    return pos >= s.size();
  }
  char peek() {
    skip_ws();
    return pos < s.size() ? s[pos] : '\0';
  }
  void expect(char c) {
    if (peek() != c)
      throw input_error(std::string("expected '") + c + "' at offset " + std::to_string(pos) +
                        " in '" + s + "'");
    ++pos;
  }
  std::string token() {
    skip_ws();
    size_t start = pos;
    while (pos < s.size() && is_token_char(s[pos])) ++pos;
    if (start == pos)
      throw input_error("expected a letter at offset " + std::to_string(pos) + " in '" + s + "'");
    return s.substr(start, pos - start);
  }
};

inline FiniteTree parse_tree_rec(TreeLexer& lx) {
  FiniteTree t(lx.token());
  if (lx.peek() == '[') {
    lx.expect('[');
    if (lx.peek() == ']') {
      lx.expect(']');
      return t;
    }
    for (;;) {
      t.children.push_back(parse_tree_rec(lx));
      if (lx.peek() == ',') {
        lx.expect(',');
        continue;
      }
      lx.expect(']');
      break;
    }
  }
  return t;
}

}  // namespace detail

inline FiniteTree parse_tree(const std::string& text) {
  detail::TreeLexer lx{text};
  FiniteTree t = detail::parse_tree_rec(lx);
  if (!lx.at_end()) throw input_error("trailing input after tree: '" + text.substr(lx.pos) + "'");
  return t;
}

inline void print_tree(std::ostream& os, const FiniteTree& t) {
  os << t.label;
  if (t.children.empty()) return;
  os << '[';
  for (size_t i = 0; i < t.children.size(); ++i) {
    if (i) os << ", ";
    print_tree(os, t.children[i]);
  }
  os << ']';
}

inline std::string to_string(const FiniteTree& t) {
  std::ostringstream os;
  print_tree(os, t);
  return os.str();
}

// ---------------------------------------------------------------------------
// Regular trees

using ClassId = std::string;

struct RegularRule {
  Letter label;
  std::vector<ClassId> children;
  bool operator==(const RegularRule&) const = default;
};

struct RegularTree {
  std::map<ClassId, RegularRule> rules;
  ClassId root;

  const RegularRule& rule(const ClassId& w) const {
    auto it = rules.find(w);
    if (it == rules.end()) throw input_error("dangling class '" + w + "'");
    return it->second;
  }
  bool operator==(const RegularTree&) const = default;
};

struct ValidationReport {
  std::vector<std::string> warnings;
};

/// Checks the class graph. Unreachable classes only produce warnings.
inline ValidationReport validate_regular(const RegularTree& r, size_t arity_bound = SIZE_MAX) {
  ValidationReport rep;
  if (!r.rules.count(r.root)) throw input_error("dangling class '" + r.root + "' (root)");
  for (const auto& [w, rule] : r.rules) {
    if (rule.label.empty()) throw input_error("class '" + w + "' has an empty label");
    if (rule.children.size() > arity_bound)
      throw input_error("arity error: class '" + w + "' has " +
                        std::to_string(rule.children.size()) + " children, bound is " +
                        std::to_string(arity_bound));
    for (const auto& c : rule.children)
      if (!r.rules.count(c))
        throw input_error("dangling class '" + c + "' referenced from '" + w + "'");
  }
  std::set<ClassId> seen{r.root};
  std::vector<ClassId> stack{r.root};
  while (!stack.empty()) {
    ClassId w = stack.back();
    stack.pop_back();
    for (const auto& c : r.rules.at(w).children)
      if (seen.insert(c).second) stack.push_back(c);
  }
  for (const auto& [w, rule] : r.rules)
    if (!seen.count(w)) rep.warnings.push_back("class '" + w + "' is unreachable from root");
  return rep;
}

inline std::set<ClassId> reachable_classes(const RegularTree& r) {
  std::set<ClassId> seen{r.root};
  std::vector<ClassId> stack{r.root};
  while (!stack.empty()) {
    ClassId w = stack.back();
    stack.pop_back();
    for (const auto& c : r.rule(w).children)
      if (seen.insert(c).second) stack.push_back(c);
  }
  return seen;
}

inline FiniteTree unfold_class(const RegularTree& r, const ClassId& w, size_t depth) {
  const RegularRule& rule = r.rule(w);
  FiniteTree t(rule.label);
  if (rule.children.empty()) return t;
  if (depth == 0) return FiniteTree(kCut);
  for (const auto& c : rule.children) t.children.push_back(unfold_class(r, c, depth - 1));
  return t;
}

/// Depth-limited unfolding. Inner nodes at depth `depth` become `#cut` leaves;
/// leaves at that depth are kept since nothing below them is lost.
inline FiniteTree unfold(const RegularTree& r, size_t depth) {
  return unfold_class(r, r.root, depth);
}

/// The subtree rooted at class `w`, as its own regular tree.
inline RegularTree rooted_at(const RegularTree& r, const ClassId& w) {
  RegularTree s = r;
  s.root = w;
  return s;
}

/// Regular presentation of a finite tree, one class per node.
inline RegularTree regular_of(const FiniteTree& t) {
  RegularTree r;
  std::function<ClassId(const FiniteTree&, const NodePath&)> go = [&](const FiniteTree& s,
                                                                       const NodePath& u) {
    ClassId id = "n" + (u.empty() ? std::string("") : path_to_string(u));
    RegularRule rule{s.label, {}};
    for (size_t i = 0; i < s.children.size(); ++i) {
      NodePath v = u;
      v.push_back(static_cast<int>(i + 1));
      rule.children.push_back(go(s.children[i], v));
    }
    r.rules[id] = rule;
    return id;
  };
  r.root = go(t, {});
  return r;
}

/// The denoted tree if it is finite (no cycle reachable from root).
inline bool regular_is_finite(const RegularTree& r) {
  std::map<ClassId, int> color;
  std::function<bool(const ClassId&)> acyclic = [&](const ClassId& w) {
    int& c = color[w];
    if (c == 1) return false;
    if (c == 2) return true;
    c = 1;
    for (const auto& ch : r.rule(w).children)
      if (!acyclic(ch)) return false;
    color[w] = 2;
    return true;
  };
  return acyclic(r.root);
}

inline RegularTree parse_regular(const std::string& text) {
  RegularTree r;
  bool have_root = false;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find("//");
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ls(line);
    std::string kw;
    if (!(ls >> kw)) continue;
    auto where = " on line " + std::to_string(lineno);
    if (kw == "root") {
      if (!(ls >> r.root)) throw input_error("missing root class" + where);
      have_root = true;
      continue;
    }
    if (kw != "class") throw input_error("expected 'class' or 'root'" + where);
    std::string name, eq;
    if (!(ls >> name)) throw input_error("missing class name" + where);
    auto eqpos = name.find('=');
    std::string rest;
    if (eqpos != std::string::npos) {
      rest = name.substr(eqpos + 1);
      name = name.substr(0, eqpos);
    } else {
      if (!(ls >> eq) || eq[0] != '=') throw input_error("expected '='" + where);
      rest = eq.substr(1);
    }
    std::string tail;
    std::getline(ls, tail);
    rest += tail;
    FiniteTree body = parse_tree(rest);
    RegularRule rule{body.label, {}};
    for (const auto& c : body.children) {
      if (!c.children.empty()) throw input_error("class body must be a[w1,...,wr]" + where);
      rule.children.push_back(c.label);
    }
    if (r.rules.count(name)) throw input_error("class '" + name + "' defined twice" + where);
    r.rules[name] = rule;
  }
  if (!have_root) throw input_error("regular tree has no 'root' line");
  validate_regular(r);
  return r;
}

inline std::string to_string(const RegularTree& r) {
  std::ostringstream os;
  for (const auto& [w, rule] : r.rules) {
    os << "class " << w << " = " << rule.label;
    if (!rule.children.empty()) {
      os << '[';
      for (size_t i = 0; i < rule.children.size(); ++i) os << (i ? ", " : "") << rule.children[i];
      os << ']';
    }
    os << '\n';
  }
  os << "root " << r.root << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Lazy sources

/// Deterministic producer of a possibly infinite tree.
class LazyTreeSource {
 public:
  virtual ~LazyTreeSource() = default;
  virtual Letter label() const = 0;
  virtual size_t arity() const = 0;
  /// i is 1-based.
  virtual std::shared_ptr<const LazyTreeSource> child(size_t i) const = 0;
};

using SourcePtr = std::shared_ptr<const LazyTreeSource>;

class RegularSource : public LazyTreeSource {
 public:
  RegularSource(std::shared_ptr<const RegularTree> r, ClassId w) : r_(std::move(r)), w_(std::move(w)) {}
  Letter label() const override { return r_->rule(w_).label; }
  size_t arity() const override { return r_->rule(w_).children.size(); }
  SourcePtr child(size_t i) const override {
    return std::make_shared<RegularSource>(r_, r_->rule(w_).children.at(i - 1));
  }

 private:
  std::shared_ptr<const RegularTree> r_;
  ClassId w_;
};

class FiniteSource : public LazyTreeSource {
 public:
  FiniteSource(std::shared_ptr<const FiniteTree> root, NodePath u) : root_(std::move(root)), u_(std::move(u)) {}
  Letter label() const override { return node_at(*root_, u_).label; }
  size_t arity() const override { return node_at(*root_, u_).children.size(); }
  SourcePtr child(size_t i) const override {
    NodePath v = u_;
    v.push_back(static_cast<int>(i));
    return std::make_shared<FiniteSource>(root_, v);
  }

 private:
  std::shared_ptr<const FiniteTree> root_;
  NodePath u_;
};

inline SourcePtr source_of(const RegularTree& r) {
  return std::make_shared<RegularSource>(std::make_shared<RegularTree>(r), r.root);
}
inline SourcePtr source_of(const FiniteTree& t) {
  return std::make_shared<FiniteSource>(std::make_shared<FiniteTree>(t), NodePath{});
}

inline FiniteTree unfold_source(const LazyTreeSource& s, size_t depth) {
  size_t r = s.arity();
  if (depth == 0 && r > 0) return FiniteTree(kCut);
  FiniteTree t(s.label());
  for (size_t i = 1; i <= r; ++i) t.children.push_back(unfold_source(*s.child(i), depth - 1));
  return t;
}

}  // namespace msou

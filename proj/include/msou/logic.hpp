#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "msou/error.hpp"
#include "msou/tree.hpp"

namespace msou {

enum class VarKind { Fin, Inf };

inline std::string to_string(VarKind k) { return k == VarKind::Fin ? "fin" : "inf"; }

enum class FKind { Label, Child, Sub, And, Not, Exists, ExistsFin, U };

struct FormulaNode;
using Formula = std::shared_ptr<const FormulaNode>;

struct FormulaNode {
  FKind kind;
  Letter letter;      // Label
  int index = 0;      // Child
  std::string x, y;   // atom variables; x is the bound variable of a quantifier
  VarKind bound_kind = VarKind::Inf;
  Formula a, b;       // operands
  std::vector<std::string> free;  // sorted, cached at construction
  size_t height = 0;  // nesting of connectives and quantifiers
};

using VarKinds = std::map<std::string, VarKind>;

namespace detail {

inline Formula make_formula(FormulaNode n) {
  std::set<std::string> fv;
  switch (n.kind) {
    case FKind::Label:
      fv.insert(n.x);
      break;
    case FKind::Child:
    case FKind::Sub:
      fv.insert(n.x);
      fv.insert(n.y);
      break;
    case FKind::And:
      fv.insert(n.a->free.begin(), n.a->free.end());
      fv.insert(n.b->free.begin(), n.b->free.end());
      n.height = 1 + std::max(n.a->height, n.b->height);
      break;
    case FKind::Not:
      fv.insert(n.a->free.begin(), n.a->free.end());
      n.height = 1 + n.a->height;
      break;
    default:
      fv.insert(n.a->free.begin(), n.a->free.end());
      fv.erase(n.x);
      n.height = 1 + n.a->height;
      break;
  }
  n.free.assign(fv.begin(), fv.end());
  return std::make_shared<FormulaNode>(std::move(n));
}

}  // namespace detail

inline Formula f_label(const Letter& a, const std::string& x) {
  FormulaNode n{FKind::Label};
  n.letter = a;
  n.x = x;
  return detail::make_formula(std::move(n));
}
inline Formula f_child(const std::string& x, int i, const std::string& y) {
  if (i < 1) throw input_error("child index must be >= 1");
  FormulaNode n{FKind::Child};
  n.index = i;
  n.x = x;
  n.y = y;
  return detail::make_formula(std::move(n));
}
inline Formula f_sub(const std::string& x, const std::string& y) {
  FormulaNode n{FKind::Sub};
  n.x = x;
  n.y = y;
  return detail::make_formula(std::move(n));
}
inline Formula f_and(Formula a, Formula b) {
  FormulaNode n{FKind::And};
  n.a = std::move(a);
  n.b = std::move(b);
  return detail::make_formula(std::move(n));
}
inline Formula f_not(Formula a) {
  FormulaNode n{FKind::Not};
  n.a = std::move(a);
  return detail::make_formula(std::move(n));
}
inline Formula f_quant(FKind k, const std::string& x, Formula body, VarKind vk) {
  FormulaNode n{k};
  n.x = x;
  n.bound_kind = vk;
  n.a = std::move(body);
  return detail::make_formula(std::move(n));
}
inline Formula f_exists(const std::string& z, Formula body) {
  return f_quant(FKind::Exists, z, std::move(body), VarKind::Inf);
}
inline Formula f_existsfin(const std::string& f, Formula body) {
  return f_quant(FKind::ExistsFin, f, std::move(body), VarKind::Fin);
}
inline Formula f_u(const std::string& f, Formula body) {
  return f_quant(FKind::U, f, std::move(body), VarKind::Fin);
}

inline bool is_quantifier(FKind k) { return k == FKind::Exists || k == FKind::ExistsFin || k == FKind::U; }

inline bool formula_eq(const Formula& p, const Formula& q) {
  if (p == q) return true;
  if (p->kind != q->kind || p->letter != q->letter || p->index != q->index || p->x != q->x ||
      p->y != q->y || p->bound_kind != q->bound_kind)
    return false;
  if (p->a && !formula_eq(p->a, q->a)) return false;
  if (p->b && !formula_eq(p->b, q->b)) return false;
  return true;
}

inline std::string to_string(const Formula& f) {
  switch (f->kind) {
    case FKind::Label:
      return f->letter + "(" + f->x + ")";
    case FKind::Child:
      return f->x + " child_" + std::to_string(f->index) + " " + f->y;
    case FKind::Sub:
      return f->x + " sub " + f->y;
    case FKind::And:
      return "(" + to_string(f->a) + " /\\ " + to_string(f->b) + ")";
    case FKind::Not: {
      std::string s = to_string(f->a);
      if (f->a->kind == FKind::Child || f->a->kind == FKind::Sub) s = "(" + s + ")";
      return "~" + s;
    }
    case FKind::Exists:
      return "(exists " + f->x + (f->bound_kind == VarKind::Fin ? ":fin" : "") + ". " + to_string(f->a) + ")";
    case FKind::ExistsFin:
      return "(existsfin " + f->x + (f->bound_kind == VarKind::Inf ? ":inf" : "") + ". " + to_string(f->a) + ")";
    case FKind::U:
      return "(U " + f->x + (f->bound_kind == VarKind::Inf ? ":inf" : "") + ". " + to_string(f->a) + ")";
  }
  return "";
}

/// Variables occurring anywhere (free or bound).
inline std::set<std::string> all_variables(const Formula& f) {
  std::set<std::string> out;
  std::unordered_set<const FormulaNode*> seen;
  std::function<void(const Formula&)> go = [&](const Formula& g) {
    if (!seen.insert(g.get()).second) return;
    if (!g->x.empty()) out.insert(g->x);
    if (!g->y.empty()) out.insert(g->y);
    if (g->a) go(g->a);
    if (g->b) go(g->b);
  };
  go(f);
  return out;
}

inline std::set<Letter> letters_of(const Formula& f) {
  std::set<Letter> out;
  std::unordered_set<const FormulaNode*> seen;
  std::function<void(const Formula&)> go = [&](const Formula& g) {
    if (!seen.insert(g.get()).second) return;
    if (g->kind == FKind::Label) out.insert(g->letter);
    if (g->a) go(g->a);
    if (g->b) go(g->b);
  };
  go(f);
  return out;
}

inline int max_child_index(const Formula& f) {
  int m = 0;
  std::unordered_set<const FormulaNode*> seen;
  std::function<void(const Formula&)> go = [&](const Formula& g) {
    if (!seen.insert(g.get()).second) return;
    if (g->kind == FKind::Child) m = std::max(m, g->index);
    if (g->a) go(g->a);
    if (g->b) go(g->b);
  };
  go(f);
  return m;
}

/// Produces names not clashing with a growing set of used names.
class FreshNames {
 public:
  FreshNames() = default;
  explicit FreshNames(std::set<std::string> used) : used_(std::move(used)) {}
  void reserve(const Formula& f) {
    auto v = all_variables(f);
    used_.insert(v.begin(), v.end());
  }
  void reserve(const std::string& s) { used_.insert(s); }
  std::string operator()(const std::string& base) {
    for (int i = 0;; ++i) {
      std::string n = base + "_" + std::to_string(i);
      if (used_.insert(n).second) return n;
    }
  }

 private:
  std::set<std::string> used_;
};

// ---------------------------------------------------------------------------
// Well-formedness

/// Checks binder kinds, scoping and the U restriction. `free_kinds` declares free variables.
inline void check_wf(const Formula& f, const VarKinds& free_kinds = {}) {
  // shared subformulas are checked once per scope
  std::set<std::pair<const FormulaNode*, std::string>> done;
  auto signature = [](const VarKinds& scope) {
    std::string out;
    for (const auto& [v, k] : scope) out += v + (k == VarKind::Fin ? ":f," : ":i,");
    return out;
  };
  std::function<void(const Formula&, VarKinds&)> go = [&](const Formula& g, VarKinds& scope) {
    if (g->kind != FKind::Label && g->kind != FKind::Child && g->kind != FKind::Sub &&
        !done.insert({g.get(), signature(scope)}).second)
      return;
    auto need = [&](const std::string& v) {
      if (!scope.count(v)) throw input_error("variable '" + v + "' is neither bound nor declared free");
    };
    switch (g->kind) {
      case FKind::Label:
        need(g->x);
        return;
      case FKind::Child:
      case FKind::Sub:
        need(g->x);
        need(g->y);
        return;
      case FKind::And:
        go(g->a, scope);
        go(g->b, scope);
        return;
      case FKind::Not:
        go(g->a, scope);
        return;
      default:
        break;
    }
    const char* binder = g->kind == FKind::Exists ? "exists" : g->kind == FKind::ExistsFin ? "existsfin" : "U";
    VarKind want = g->kind == FKind::Exists ? VarKind::Inf : VarKind::Fin;
    if (g->bound_kind != want)
      throw input_error(std::string("binder-kind error: ") + binder + " binds " + to_string(want) +
                        " variables, '" + g->x + "' is " + to_string(g->bound_kind));
    if (scope.count(g->x)) throw input_error("variable '" + g->x + "' is already bound in this scope");
    if (g->kind == FKind::U) {
      for (const auto& v : g->a->free) {
        if (v == g->x) continue;
        auto it = scope.find(v);
        if (it != scope.end() && it->second == VarKind::Inf)
          throw input_error("U restriction violated: free variable '" + v + "' of the body of U " + g->x +
                            " is not a finite-set variable");
      }
    }
    scope[g->x] = g->bound_kind;
    go(g->a, scope);
    scope.erase(g->x);
  };
  VarKinds scope = free_kinds;
  go(f, scope);
}

inline Formula f_or(Formula a, Formula b) { return f_not(f_and(f_not(std::move(a)), f_not(std::move(b)))); }
inline Formula f_implies(Formula a, Formula b) { return f_not(f_and(std::move(a), f_not(std::move(b)))); }
inline Formula f_forall(const std::string& y, Formula body) { return f_not(f_exists(y, f_not(std::move(body)))); }
inline Formula f_forallfin(const std::string& y, Formula body) {
  return f_not(f_existsfin(y, f_not(std::move(body))));
}

inline Formula f_and_all(const std::vector<Formula>& fs, const Formula& if_empty) {
  if (fs.empty()) return if_empty;
  Formula r = fs[0];
  for (size_t i = 1; i < fs.size(); ++i) r = f_and(r, fs[i]);
  return r;
}

inline Formula f_or_all(const std::vector<Formula>& fs, const Formula& if_empty) {
  if (fs.empty()) return if_empty;
  Formula r = fs[0];
  for (size_t i = 1; i < fs.size(); ++i) r = f_or(r, fs[i]);
  return r;
}

/// Context for the macros that need two distinct letters or an arity bound.
struct DerivedContext {
  Letter e1 = "a", e2 = "b";
  size_t max_arity = 8;

  static DerivedContext from_alphabet(const std::set<Letter>& sigma, size_t max_arity = 8) {
    if (sigma.size() < 2) throw input_error("empty/big/sing need an alphabet with at least two letters");
    auto it = sigma.begin();
    DerivedContext c;
    c.e1 = *it++;
    c.e2 = *it;
    c.max_arity = max_arity;
    return c;
  }
};

inline Formula f_empty(const std::string& x, const DerivedContext& c) {
  if (c.e1 == c.e2) throw input_error("empty() needs two different letters");
  return f_and(f_label(c.e1, x), f_label(c.e2, x));
}

inline Formula f_big(const std::string& x, const DerivedContext& c, FreshNames& fresh) {
  // a witness can always be taken to be a singleton, so a finite-set binder suffices
  std::string y = fresh("Y");
  return f_existsfin(y, f_and(f_and(f_sub(y, x), f_not(f_sub(x, y))), f_not(f_empty(y, c))));
}

inline Formula f_sing(const std::string& x, const DerivedContext& c, FreshNames& fresh) {
  return f_and(f_not(f_empty(x, c)), f_not(f_big(x, c, fresh)));
}

// ---------------------------------------------------------------------------
// Concrete syntax

struct FormulaFile {
  VarKinds free;
  Formula body;
};

namespace detail {

struct FormulaLexer {
  std::string s;
  size_t pos = 0;

  void skip() {
    for (;;) {
      while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
      if (pos + 1 < s.size() && s[pos] == '/' && s[pos + 1] == '/') {
        while (pos < s.size() && s[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
  }
  bool eof() {
    skip();
    return pos >= s.size();
  }
  static bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '#' || c == '?' || c == '*'; }
  static bool ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '\'' || c == '#' || c == '?' || c == '|' || c == '*';
  }
  bool peek_ident() {
    skip();
    return pos < s.size() && ident_start(s[pos]);
  }
  std::string peek_word() {
    skip();
    size_t p = pos;
    while (p < s.size() && ident_char(s[p])) ++p;
    return s.substr(pos, p - pos);
  }
  bool peek(const std::string& sym) {
    skip();
    return s.compare(pos, sym.size(), sym) == 0;
  }
  bool accept(const std::string& sym) {
    if (!peek(sym)) return false;
    pos += sym.size();
    return true;
  }
  [[noreturn]] void fail(const std::string& msg) {
    throw input_error("formula syntax error at offset " + std::to_string(pos) + ": " + msg);
  }
  void expect(const std::string& sym) {
    if (!accept(sym)) fail("expected '" + sym + "'");
  }
  std::string ident() {
    if (!peek_ident()) fail("expected an identifier");
    size_t st = pos;
    while (pos < s.size() && ident_char(s[pos])) ++pos;
    return s.substr(st, pos - st);
  }
};

inline bool is_keyword(const std::string& w) {
  return w == "exists" || w == "existsfin" || w == "U" || w == "forall" || w == "forallfin" || w == "free" ||
         w == "sub";
}

struct FormulaParser {
  FormulaLexer& lx;
  DerivedContext ctx;
  FreshNames fresh;
  std::set<Letter> letters;  // letters of explicit label atoms

  Formula formula() {
    Formula l = disj();
    if (lx.accept("->")) {
      Formula r = formula();
      return f_not(f_and(l, f_not(r)));
    }
    return l;
  }
  Formula disj() {
    Formula l = conj();
    while (lx.accept("\\/")) {
      Formula r = conj();
      l = f_not(f_and(f_not(l), f_not(r)));
    }
    return l;
  }
  Formula conj() {
    Formula l = unary();
    while (lx.accept("/\\")) l = f_and(l, unary());
    return l;
  }
  Formula unary() {
    if (lx.accept("~")) return f_not(unary());
    std::string w = lx.peek_word();
    if (w == "exists" || w == "existsfin" || w == "U" || w == "forall" || w == "forallfin") return quant();
    return primary();
  }
  Formula quant() {
    std::string q = lx.ident();
    std::string v = lx.ident();
    VarKind k = (q == "exists" || q == "forall") ? VarKind::Inf : VarKind::Fin;
    if (lx.accept(":")) {
      std::string ks = lx.ident();
      if (ks == "fin") k = VarKind::Fin;
      else if (ks == "inf") k = VarKind::Inf;
      else lx.fail("unknown variable kind '" + ks + "'");
    }
    lx.expect(".");
    Formula body = formula();
    if (q == "exists") return f_quant(FKind::Exists, v, body, k);
    if (q == "existsfin") return f_quant(FKind::ExistsFin, v, body, k);
    if (q == "U") return f_quant(FKind::U, v, body, k);
    if (q == "forall") return f_not(f_quant(FKind::Exists, v, f_not(body), k));
    return f_not(f_quant(FKind::ExistsFin, v, f_not(body), k));
  }
  Formula primary() {
    if (lx.accept("(")) {
      Formula f = formula();
      lx.expect(")");
      return f;
    }
    std::string id = lx.ident();
    if (lx.accept("(")) {
      std::string x = lx.ident();
      lx.expect(")");
      if (id == "empty") return f_empty(x, ctx);
      if (id == "sing") return f_sing(x, ctx, fresh);
      if (id == "big") return f_big(x, ctx, fresh);
      letters.insert(id);
      return f_label(id, x);
    }
    std::string op = lx.ident();
    if (op == "sub") return f_sub(id, lx.ident());
    if (op.rfind("child_", 0) == 0) {
      std::string num = op.substr(6);
      if (num.empty() || !std::all_of(num.begin(), num.end(), ::isdigit)) lx.fail("bad child index in '" + op + "'");
      int i = std::stoi(num);
      return f_child(id, i, lx.ident());
    }
    lx.fail("expected 'sub' or 'child_i' after '" + id + "'");
  }
};

}  // namespace detail

/// Parses an optional `free X:inf, F:fin;` header followed by a formula.
/// empty(X), sing(X) and big(X) are the derived predicates, not label atoms.
inline FormulaFile parse_formula_file(const std::string& text) {
  auto pass = [&](const DerivedContext& ctx, std::set<Letter>* letters) {
    detail::FormulaLexer lx{text};
    FormulaFile out;
    while (lx.peek_word() == "free") {
      lx.ident();
      do {
        std::string v = lx.ident();
        lx.expect(":");
        std::string k = lx.ident();
        if (k == "fin") out.free[v] = VarKind::Fin;
        else if (k == "inf") out.free[v] = VarKind::Inf;
        else lx.fail("unknown variable kind '" + k + "'");
      } while (lx.accept(","));
      lx.expect(";");
    }
    detail::FormulaParser p{lx, ctx, {}, {}};
    // every word of the input is kept away from macro-bound names
    for (size_t i = 0; i < text.size();) {
      if (!detail::FormulaLexer::ident_char(text[i])) {
        ++i;
        continue;
      }
      size_t j = i;
      while (j < text.size() && detail::FormulaLexer::ident_char(text[j])) ++j;
      p.fresh.reserve(text.substr(i, j - i));
      i = j;
    }
    out.body = p.formula();
    if (!lx.eof()) lx.fail("trailing input");
    if (letters) *letters = p.letters;
    return out;
  };
  // the macros need two distinct letters; prefer ones the formula already mentions
  std::set<Letter> used;
  FormulaFile out = pass(DerivedContext{}, &used);
  DerivedContext ctx;
  auto it = used.begin();
  if (used.size() >= 2) {
    ctx.e1 = *it++;
    ctx.e2 = *it;
  } else if (used.size() == 1) {
    ctx.e1 = *it;
    ctx.e2 = *it == "a" ? "b" : "a";
  }
  if (ctx.e1 != "a" || ctx.e2 != "b") out = pass(ctx, nullptr);
  // Free variables without a header entry default to arbitrary-set kind.
  for (const auto& v : out.body->free)
    if (!out.free.count(v)) out.free[v] = VarKind::Inf;
  check_wf(out.body, out.free);
  return out;
}

inline Formula parse_formula(const std::string& text) { return parse_formula_file(text).body; }

inline std::string to_string(const FormulaFile& ff) {
  std::string s;
  if (!ff.free.empty()) {
    s = "free ";
    bool first = true;
    for (const auto& [v, k] : ff.free) {
      s += (first ? "" : ", ") + v + ":" + to_string(k);
      first = false;
    }
    s += ";\n";
  }
  return s + to_string(ff.body) + "\n";
}

// ---------------------------------------------------------------------------
// Derived formulas

inline Formula f_child_any(const std::string& x, const std::string& y, size_t max_arity) {
  if (max_arity == 0) throw input_error("child-any needs max arity >= 1");
  std::vector<Formula> ds;
  for (size_t i = 1; i <= max_arity; ++i) ds.push_back(f_child(x, static_cast<int>(i), y));
  return f_or_all(ds, nullptr);
}

inline Formula f_labels_in(const std::string& x, const std::set<Letter>& a, const DerivedContext& c,
                           FreshNames& fresh) {
  std::string y = fresh("Y");
  std::vector<Formula> ds;
  for (const auto& l : a) ds.push_back(f_label(l, y));
  Formula rhs = ds.empty() ? f_empty(y, c) : f_or_all(ds, nullptr);
  return f_forallfin(y, f_implies(f_and(f_sing(y, c, fresh), f_sub(y, x)), rhs));
}

/// Always-true / always-false formulas over a variable that must be in scope.
inline Formula f_true(const std::string& x) { return f_sub(x, x); }
inline Formula f_false(const std::string& x) { return f_not(f_sub(x, x)); }

/// eta(X, Y): every node of Y is a descendant of the node(s) of X.
inline Formula f_below(const std::string& x, const std::string& y, size_t max_arity, FreshNames& fresh) {
  std::string d = fresh("D"), p = fresh("P"), q = fresh("C");
  Formula closed = f_forall(p, f_forall(q, f_implies(f_and(f_sub(p, d), f_child_any(p, q, max_arity)), f_sub(q, d))));
  return f_forall(d, f_implies(f_and(f_sub(x, d), closed), f_sub(y, d)));
}

/// Closed always-true / always-false sentences.
inline Formula f_tt(FreshNames& fresh) {
  std::string z = fresh("Z");
  return f_existsfin(z, f_sub(z, z));
}
inline Formula f_ff(FreshNames& fresh) { return f_not(f_tt(fresh)); }

/// root(X): X is the singleton holding the root.
inline Formula f_root(const std::string& x, const DerivedContext& c, FreshNames& fresh) {
  std::string p = fresh("P");
  return f_and(f_sing(x, c, fresh), f_not(f_existsfin(p, f_child_any(p, x, c.max_arity))));
}

/// Replaces every label atom a(X) by sub(a, X), or keeps it when sub returns null.
/// Shared subformulas are rewritten once.
inline Formula substitute_labels(const Formula& f,
                                 const std::function<Formula(const Letter&, const std::string&)>& sub) {
  std::unordered_map<const FormulaNode*, Formula> memo;
  std::function<Formula(const Formula&)> go = [&](const Formula& g) -> Formula {
    auto it = memo.find(g.get());
    if (it != memo.end()) return it->second;
    Formula out;
    switch (g->kind) {
      case FKind::Label: {
        out = sub(g->letter, g->x);
        if (!out) out = g;
        break;
      }
      case FKind::Child:
      case FKind::Sub:
        out = g;
        break;
      case FKind::And: {
        auto a = go(g->a), b = go(g->b);
        out = a == g->a && b == g->b ? g : f_and(a, b);
        break;
      }
      case FKind::Not: {
        auto a = go(g->a);
        out = a == g->a ? g : f_not(a);
        break;
      }
      default: {
        auto a = go(g->a);
        out = a == g->a ? g : f_quant(g->kind, g->x, a, g->bound_kind);
      }
    }
    return memo[g.get()] = out;
  };
  return go(f);
}

/// Renames bound variables so that no binder shadows a variable in scope.
/// A shared subformula is renamed once per assignment of its free variables.
inline Formula rename_apart(const Formula& f) {
  FreshNames fresh;
  fresh.reserve(f);
  auto stem = [](const std::string& x) {
    size_t e = x.size();
    for (;;) {
      size_t u = x.rfind('_', e - 1);
      if (u == std::string::npos || u == 0 || u + 1 >= e) break;
      bool digits = std::all_of(x.begin() + static_cast<long>(u) + 1, x.begin() + static_cast<long>(e),
                                [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
      if (!digits) break;
      e = u;
    }
    return x.substr(0, e);
  };
  std::map<std::pair<const FormulaNode*, std::vector<std::string>>, Formula> memo;
  using Env = std::map<std::string, std::string>;
  std::function<Formula(const Formula&, const Env&)> go = [&](const Formula& g, const Env& env) -> Formula {
    auto look = [&](const std::string& v) {
      auto it = env.find(v);
      return it == env.end() ? v : it->second;
    };
    std::vector<std::string> key;
    for (const auto& v : g->free) key.push_back(look(v));
    auto mk = std::make_pair(g.get(), key);
    auto it = memo.find(mk);
    if (it != memo.end()) return it->second;
    Formula out;
    switch (g->kind) {
      case FKind::Label:
        out = f_label(g->letter, look(g->x));
        break;
      case FKind::Child:
        out = f_child(look(g->x), g->index, look(g->y));
        break;
      case FKind::Sub:
        out = f_sub(look(g->x), look(g->y));
        break;
      case FKind::And:
        out = f_and(go(g->a, env), go(g->b, env));
        break;
      case FKind::Not:
        out = f_not(go(g->a, env));
        break;
      default: {
        Env inner = env;
        std::string x = fresh(stem(g->x));
        inner[g->x] = x;
        out = f_quant(g->kind, x, go(g->a, inner), g->bound_kind);
      }
    }
    return memo[mk] = out;
  };
  return go(f, {});
}

namespace detail {

inline Formula relativize_quantifiers(const Formula& f, const std::string& x, size_t max_arity,
                                      FreshNames& fresh) {
  switch (f->kind) {
    case FKind::Label:
    case FKind::Child:
    case FKind::Sub:
      return f;
    case FKind::And:
      return f_and(relativize_quantifiers(f->a, x, max_arity, fresh),
                   relativize_quantifiers(f->b, x, max_arity, fresh));
    case FKind::Not:
      return f_not(relativize_quantifiers(f->a, x, max_arity, fresh));
    default: {
      Formula body = relativize_quantifiers(f->a, x, max_arity, fresh);
      return f_quant(f->kind, f->x, f_and(f_below(x, f->x, max_arity, fresh), body), f->bound_kind);
    }
  }
}

}  // namespace detail

/// phi-hat(X): phi holds in the subtree at every node of X.
inline Formula relativize(const Formula& phi, size_t max_arity, const DerivedContext& ctx_in = {},
                          const std::string& x = "X") {
  if (!phi->free.empty()) throw input_error("relativize needs a sentence; '" + phi->free[0] + "' is free");
  DerivedContext ctx = ctx_in;
  ctx.max_arity = max_arity;
  FreshNames fresh;
  fresh.reserve(phi);
  fresh.reserve(x);
  std::string xp = fresh("Xs");
  Formula inner = detail::relativize_quantifiers(phi, xp, max_arity, fresh);
  return f_forallfin(xp, f_implies(f_and(f_sing(xp, ctx, fresh), f_sub(xp, x)), inner));
}

// ---------------------------------------------------------------------------
// Valuations

using NodeSet = std::set<NodePath>;
using Valuation = std::map<std::string, NodeSet>;

inline Valuation restrict_valuation(const Valuation& v, const NodePath& u) {
  Valuation out;
  for (const auto& [x, s] : v) {
    NodeSet r;
    for (const auto& w : s)
      if (is_prefix(u, w)) r.insert(NodePath(w.begin() + static_cast<long>(u.size()), w.end()));
    out[x] = r;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Direct semantics on finite trees

/// Indexed finite tree: nodes in preorder, sets as bitmasks.
struct TreeIndex {
  std::vector<NodePath> nodes;
  std::vector<Letter> labels;
  std::vector<std::vector<int>> children;  // node -> child node ids
  std::map<NodePath, int> id;

  explicit TreeIndex(const FiniteTree& t) {
    nodes = nodes_of(t);
    for (size_t i = 0; i < nodes.size(); ++i) id[nodes[i]] = static_cast<int>(i);
    labels.resize(nodes.size());
    children.resize(nodes.size());
    for (size_t i = 0; i < nodes.size(); ++i) {
      const FiniteTree& s = node_at(t, nodes[i]);
      labels[i] = s.label;
      for (size_t k = 0; k < s.children.size(); ++k) {
        NodePath c = nodes[i];
        c.push_back(static_cast<int>(k + 1));
        children[i].push_back(id.at(c));
      }
    }
  }
  size_t size() const { return nodes.size(); }

  uint64_t mask_of(const NodeSet& s) const {
    uint64_t m = 0;
    for (const auto& u : s) {
      auto it = id.find(u);
      if (it == id.end()) throw input_error("valuation contains non-node " + path_to_string(u));
      m |= uint64_t{1} << it->second;
    }
    return m;
  }
  NodeSet set_of(uint64_t m) const {
    NodeSet s;
    for (size_t i = 0; i < nodes.size(); ++i)
      if (m >> i & 1) s.insert(nodes[i]);
    return s;
  }
};

inline constexpr size_t kDirectNodeCap = 16;

/// Brute-force evaluator with memoization on (subformula, values of its free variables).
class DirectEvaluator {
 public:
  explicit DirectEvaluator(const FiniteTree& t) : idx_(t) {
    if (idx_.size() > 64) throw resource_error("tree too large for direct evaluation");
  }

  const TreeIndex& index() const { return idx_; }

  bool eval(const Formula& f, const Valuation& v) {
    std::map<std::string, uint64_t> env;
    for (const auto& [x, s] : v) env[x] = idx_.mask_of(s);
    return eval(f, env);
  }

  bool eval(const Formula& f, std::map<std::string, uint64_t>& env) {
    for (const auto& x : f->free)
      if (!env.count(x)) throw input_error("unbound free variable '" + x + "'");
    return go(f, env);
  }

 private:
  static bool singleton(uint64_t m) { return m != 0 && (m & (m - 1)) == 0; }
  static int bit(uint64_t m) { return __builtin_ctzll(m); }

  bool go(const Formula& f, std::map<std::string, uint64_t>& env) {
    switch (f->kind) {
      case FKind::Label: {
        uint64_t m = env.at(f->x);
        for (size_t i = 0; i < idx_.size(); ++i)
          if ((m >> i & 1) && !letter_matches(f->letter, idx_.labels[i])) return false;
        return true;
      }
      case FKind::Child: {
        uint64_t mx = env.at(f->x), my = env.at(f->y);
        if (!singleton(mx) || !singleton(my)) return false;
        const auto& cs = idx_.children[static_cast<size_t>(bit(mx))];
        return static_cast<size_t>(f->index) <= cs.size() && cs[static_cast<size_t>(f->index - 1)] == bit(my);
      }
      case FKind::Sub:
        return (env.at(f->x) & ~env.at(f->y)) == 0;
      case FKind::And:
        return go(f->a, env) && go(f->b, env);
      case FKind::Not:
        return !go(f->a, env);
      case FKind::U:
        // Node sets of a finite tree have bounded cardinality.
        return false;
      default:
        break;
    }
    std::vector<uint64_t> key;
    key.reserve(f->free.size());
    for (const auto& x : f->free) key.push_back(env.at(x));
    auto [mit, fresh_node] = memo_.try_emplace(f.get());
    if (fresh_node) keep_.push_back(f);
    auto& memo = mit->second;
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    if (idx_.size() > kDirectNodeCap)
      throw resource_error("direct evaluation of quantifiers is capped at " + std::to_string(kDirectNodeCap) +
                           " nodes; tree has " + std::to_string(idx_.size()));
    auto saved = env.find(f->x) != env.end() ? std::optional<uint64_t>(env[f->x]) : std::nullopt;
    bool res = false;
    uint64_t all = idx_.size() == 64 ? ~uint64_t{0} : (uint64_t{1} << idx_.size()) - 1;
    // exists X. (X sub G /\ ...) only needs the subsets of G
    const Formula& body = f->a;
    if (body->kind == FKind::And && body->a->kind == FKind::Sub && body->a->x == f->x && body->a->y != f->x)
      if (auto g = env.find(body->a->y); g != env.end()) all &= g->second;
    for (uint64_t m = all;; m = (m - 1) & all) {
      env[f->x] = m;
      res = go(f->a, env);
      if (res || m == 0) break;
    }
    if (saved) env[f->x] = *saved;
    else env.erase(f->x);
    memo.emplace(std::move(key), res);
    return res;
  }

  struct KeyHash {
    size_t operator()(const std::vector<uint64_t>& k) const {
      size_t h = k.size();
      for (auto x : k) h = h * 1000003u ^ std::hash<uint64_t>{}(x);
      return h;
    }
  };

  TreeIndex idx_;
  std::vector<Formula> keep_;
  std::unordered_map<const FormulaNode*, std::unordered_map<std::vector<uint64_t>, bool, KeyHash>> memo_;
};

inline bool eval_direct(const Formula& f, const FiniteTree& t, const Valuation& v = {}) {
  DirectEvaluator ev(t);
  return ev.eval(f, v);
}

}  // namespace msou

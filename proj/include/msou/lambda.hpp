#pragma once

#include <cctype>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "msou/error.hpp"
#include "msou/tree.hpp"

namespace msou {

// ---------------------------------------------------------------------------
// Sorts

struct SortNode;
using Sort = std::shared_ptr<const SortNode>;

struct SortNode {
  Sort arg;  // null for the ground sort
  Sort res;
  bool ground() const { return !arg; }
};

inline Sort sort_o() {
  static const Sort o = std::make_shared<SortNode>();
  return o;
}

inline Sort arrow(Sort a, Sort r) { return std::make_shared<SortNode>(SortNode{std::move(a), std::move(r)}); }

inline bool sort_eq(const Sort& a, const Sort& b) {
  if (a->ground() || b->ground()) return a->ground() == b->ground();
  return sort_eq(a->arg, b->arg) && sort_eq(a->res, b->res);
}

inline std::string to_string(const Sort& s) {
  if (s->ground()) return "o";
  std::string l = to_string(s->arg);
  if (!s->arg->ground()) l = "(" + l + ")";
  return l + " -> " + to_string(s->res);
}

/// Number of arguments before reaching o.
inline size_t sort_arity(const Sort& s) { return s->ground() ? 0 : 1 + sort_arity(s->res); }

// ---------------------------------------------------------------------------
// Terms (de Bruijn indices; names kept for printing)

enum class TermKind { Con, Var, NT, App, Lam };

struct TermNode;
using Term = std::shared_ptr<const TermNode>;

struct TermNode {
  TermKind kind;
  std::string name;  // letter, nonterminal, or variable/binder name
  int index = 0;     // de Bruijn index for Var
  Sort sort;         // binder sort for Lam
  std::vector<Term> kids;
  size_t hash = 0;
  int free_bound = 0;  // 1 + largest free index, 0 if closed
  size_t size = 1;
};

namespace detail {

inline size_t mix(size_t h, size_t v) { return h ^ (v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2)); }

inline Term make_term(TermKind k, std::string name, int index, Sort sort, std::vector<Term> kids) {
  auto n = std::make_shared<TermNode>();
  n->kind = k;
  n->name = std::move(name);
  n->index = index;
  n->sort = std::move(sort);
  n->kids = std::move(kids);
  size_t h = static_cast<size_t>(k) * 1315423911u;
  if (k == TermKind::Con || k == TermKind::NT) h = mix(h, std::hash<std::string>{}(n->name));
  if (k == TermKind::Var) {
    h = mix(h, static_cast<size_t>(index));
    n->free_bound = index + 1;
  }
  for (const auto& c : n->kids) {
    h = mix(h, c->hash);
    n->size += c->size;
    int fb = c->free_bound;
    if (k == TermKind::Lam) fb = std::max(0, fb - 1);
    n->free_bound = std::max(n->free_bound, fb);
  }
  n->hash = h;
  return n;
}

}  // namespace detail

inline Term con(const Letter& a, std::vector<Term> kids = {}) {
  return detail::make_term(TermKind::Con, a, 0, nullptr, std::move(kids));
}
inline Term var(const std::string& name, int index) {
  return detail::make_term(TermKind::Var, name, index, nullptr, {});
}
inline Term nt(const std::string& name) { return detail::make_term(TermKind::NT, name, 0, nullptr, {}); }
inline Term app(Term f, Term a) {
  return detail::make_term(TermKind::App, "", 0, nullptr, {std::move(f), std::move(a)});
}
inline Term lam(const std::string& x, Sort s, Term body) {
  return detail::make_term(TermKind::Lam, x, 0, std::move(s), {std::move(body)});
}

/// Alpha-equivalence (names of bound variables are ignored).
inline bool term_eq(const Term& a, const Term& b) {
  if (a == b) return true;
  if (a->hash != b->hash || a->kind != b->kind || a->kids.size() != b->kids.size()) return false;
  switch (a->kind) {
    case TermKind::Con:
    case TermKind::NT:
      if (a->name != b->name) return false;
      break;
    case TermKind::Var:
      return a->index == b->index;
    default:
      break;
  }
  for (size_t i = 0; i < a->kids.size(); ++i)
    if (!term_eq(a->kids[i], b->kids[i])) return false;
  return true;
}

inline std::string to_string(const Term& t) {
  switch (t->kind) {
    case TermKind::Con: {
      std::string s = t->name;
      if (!t->kids.empty()) {
        s += "[";
        for (size_t i = 0; i < t->kids.size(); ++i) s += (i ? ", " : "") + to_string(t->kids[i]);
        s += "]";
      }
      return s;
    }
    case TermKind::Var:
    case TermKind::NT:
      return t->name;
    case TermKind::App: {
      std::string f = to_string(t->kids[0]);
      if (t->kids[0]->kind == TermKind::Lam) f = "(" + f + ")";
      std::string a = to_string(t->kids[1]);
      if (t->kids[1]->kind == TermKind::App || t->kids[1]->kind == TermKind::Lam) a = "(" + a + ")";
      return f + " " + a;
    }
    case TermKind::Lam:
      return "\\" + t->name + ":" + to_string(t->sort) + ". " + to_string(t->kids[0]);
  }
  return "";
}

// Shift free indices >= cutoff by d.
inline Term shift(const Term& t, int d, int cutoff = 0) {
  if (t->free_bound <= cutoff || d == 0) return t;
  switch (t->kind) {
    case TermKind::Var:
      return var(t->name, t->index + d);
    case TermKind::Lam:
      return lam(t->name, t->sort, shift(t->kids[0], d, cutoff + 1));
    case TermKind::App:
      return app(shift(t->kids[0], d, cutoff), shift(t->kids[1], d, cutoff));
    case TermKind::Con: {
      std::vector<Term> ks;
      for (const auto& k : t->kids) ks.push_back(shift(k, d, cutoff));
      return con(t->name, std::move(ks));
    }
    default:
      return t;
  }
}

// Replace index j by s (s lives in the context of depth j), lowering indices above j.
inline Term subst(const Term& t, int j, const Term& s) {
  if (t->free_bound <= j) return t;
  switch (t->kind) {
    case TermKind::Var:
      if (t->index == j) return shift(s, j);
      return t->index > j ? var(t->name, t->index - 1) : t;
    case TermKind::Lam:
      return lam(t->name, t->sort, subst(t->kids[0], j + 1, s));
    case TermKind::App:
      return app(subst(t->kids[0], j, s), subst(t->kids[1], j, s));
    case TermKind::Con: {
      std::vector<Term> ks;
      for (const auto& k : t->kids) ks.push_back(subst(k, j, s));
      return con(t->name, std::move(ks));
    }
    default:
      return t;
  }
}

/// body[0 := arg] for a lambda body.
inline Term beta(const Term& body, const Term& arg) { return subst(body, 0, arg); }

// ---------------------------------------------------------------------------
// Schemes

struct Scheme {
  std::vector<std::string> order;  // declaration order
  std::map<std::string, Sort> sorts;
  std::map<std::string, Term> rules;
  std::string start;

  bool is_nonterminal(const std::string& n) const { return sorts.count(n) > 0; }
};

namespace detail {

struct SortError {
  std::string msg;
};

inline Sort infer(const Scheme& g, const Term& t, std::vector<Sort>& env, std::vector<std::string>& path) {
  auto where = [&]() {
    std::string p;
    for (const auto& s : path) p += "/" + s;
    return p.empty() ? std::string("/") : p;
  };
  switch (t->kind) {
    case TermKind::Con:
      for (size_t i = 0; i < t->kids.size(); ++i) {
        path.push_back("child" + std::to_string(i + 1));
        Sort s = infer(g, t->kids[i], env, path);
        if (!s->ground())
          throw input_error("sort mismatch at " + where() + ": constructor child has sort " +
                            to_string(s) + ", expected o");
        path.pop_back();
      }
      return sort_o();
    case TermKind::Var:
      if (t->index < 0 || static_cast<size_t>(t->index) >= env.size())
        throw input_error("free variable '" + t->name + "' at " + where() + " is not a nonterminal");
      return env[env.size() - 1 - static_cast<size_t>(t->index)];
    case TermKind::NT: {
      auto it = g.sorts.find(t->name);
      if (it == g.sorts.end())
        throw input_error("free variable '" + t->name + "' at " + where() + " is not a nonterminal");
      return it->second;
    }
    case TermKind::App: {
      path.push_back("fun");
      Sort f = infer(g, t->kids[0], env, path);
      path.back() = "arg";
      Sort a = infer(g, t->kids[1], env, path);
      path.pop_back();
      if (f->ground())
        throw input_error("sort mismatch at " + where() + ": applying a term of sort o");
      if (!sort_eq(f->arg, a))
        throw input_error("sort mismatch at " + where() + ": function expects " + to_string(f->arg) +
                          ", argument has " + to_string(a));
      return f->res;
    }
    case TermKind::Lam: {
      env.push_back(t->sort);
      path.push_back("body");
      Sort b = infer(g, t->kids[0], env, path);
      path.pop_back();
      env.pop_back();
      return arrow(t->sort, b);
    }
  }
  throw internal_error("bad term");
}

}  // namespace detail

/// Sort of a closed term (nonterminals resolved through `g`).
inline Sort sort_of(const Scheme& g, const Term& t) {
  std::vector<Sort> env;
  std::vector<std::string> path;
  return detail::infer(g, t, env, path);
}

inline std::map<std::string, Sort> sort_check(const Scheme& g) {
  if (!g.is_nonterminal(g.start)) throw input_error("start symbol '" + g.start + "' is not declared");
  if (!g.sorts.at(g.start)->ground()) throw input_error("start symbol '" + g.start + "' must have sort o");
  for (const auto& [n, s] : g.sorts) {
    auto it = g.rules.find(n);
    if (it == g.rules.end()) throw input_error("nonterminal '" + n + "' has no rule");
    if (it->second->kind == TermKind::NT)
      throw input_error("rule for '" + n + "' is the bare nonterminal '" + it->second->name + "'");
    std::vector<Sort> env;
    std::vector<std::string> path{n};
    Sort b = detail::infer(g, it->second, env, path);
    if (!sort_eq(b, s))
      throw input_error("sort mismatch at /" + n + ": rule has sort " + to_string(b) + ", declared " +
                        to_string(s));
  }
  for (const auto& [n, r] : g.rules)
    if (!g.is_nonterminal(n)) throw input_error("rule for undeclared nonterminal '" + n + "'");
  for (const auto& [n, r] : g.rules) {
    std::function<void(const Term&)> letters = [&](const Term& t) {
      if (t->kind == TermKind::Con && is_reserved(t->name))
        throw input_error("letter '" + t->name + "' is reserved");
      for (const auto& k : t->kids) letters(k);
    };
    letters(r);
  }
  return g.sorts;
}

struct SchemeAlphabet {
  std::set<Letter> letters;  // includes omega
  size_t max_arity = 0;
};

inline SchemeAlphabet scheme_alphabet(const Scheme& g) {
  SchemeAlphabet out;
  out.letters.insert(kOmega);
  std::function<void(const Term&)> go = [&](const Term& t) {
    if (t->kind == TermKind::Con) {
      out.letters.insert(t->name);
      out.max_arity = std::max(out.max_arity, t->kids.size());
    }
    for (const auto& k : t->kids) go(k);
  };
  for (const auto& [n, r] : g.rules) go(r);
  return out;
}

// ---------------------------------------------------------------------------
// Scheme syntax

namespace detail {

struct SchemeLexer {
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
  bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
  bool is_ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '\'';
  }
  bool peek_ident() {
    skip();
    return pos < s.size() && is_ident_start(s[pos]);
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
    size_t line = 1 + static_cast<size_t>(std::count(s.begin(), s.begin() + static_cast<long>(std::min(pos, s.size())), '\n'));
    throw input_error("scheme syntax error on line " + std::to_string(line) + ": " + msg);
  }
  void expect(const std::string& sym) {
    if (!accept(sym)) fail("expected '" + sym + "'");
  }
  std::string ident() {
    if (!peek_ident()) fail("expected an identifier");
    size_t st = pos;
    while (pos < s.size() && is_ident_char(s[pos])) ++pos;
    return s.substr(st, pos - st);
  }
};

inline Sort parse_sort(SchemeLexer& lx);

inline Sort parse_sort_atom(SchemeLexer& lx) {
  if (lx.accept("(")) {
    Sort s = parse_sort(lx);
    lx.expect(")");
    return s;
  }
  std::string o = lx.ident();
  if (o != "o") lx.fail("unknown sort '" + o + "'");
  return sort_o();
}

inline Sort parse_sort(SchemeLexer& lx) {
  Sort a = parse_sort_atom(lx);
  if (lx.accept("->")) return arrow(a, parse_sort(lx));
  return a;
}

struct TermParser {
  SchemeLexer& lx;
  const std::set<std::string>& nts;
  std::vector<std::string> bound;

  bool starts_atom() { return lx.peek_ident() || lx.peek("(") || lx.peek("\\"); }

  Term term() {
    if (lx.accept("\\")) return lambda();
    Term head = atom(true);
    bool applied = false;
    while (starts_atom()) {
      Term a = lx.peek("\\") ? (lx.expect("\\"), lambda()) : atom(false);
      head = app(head, a);
      applied = true;
    }
    (void)applied;
    return head;
  }

  Term lambda() {
    std::string x = lx.ident();
    lx.expect(":");
    Sort s = parse_sort(lx);
    lx.expect(".");
    bound.push_back(x);
    Term b = term();
    bound.pop_back();
    return lam(x, s, b);
  }

  Term atom(bool head_position) {
    if (lx.accept("(")) {
      Term t = term();
      lx.expect(")");
      return t;
    }
    std::string id = lx.ident();
    if (lx.peek("[")) {
      lx.expect("[");
      std::vector<Term> kids;
      if (!lx.accept("]")) {
        do kids.push_back(term());
        while (lx.accept(","));
        lx.expect("]");
      }
      return con(id, std::move(kids));
    }
    for (size_t k = bound.size(); k-- > 0;)
      if (bound[k] == id) return var(id, static_cast<int>(bound.size() - 1 - k));
    if (nts.count(id)) return nt(id);
    // An unresolved identifier applied to arguments cannot be a nullary letter.
    if (head_position && starts_atom())
      lx.fail("free variable '" + id + "' is not a nonterminal");
    return con(id);
  }
};

}  // namespace detail

/// Parses `nonterminal N : sort = term;` declarations and `start N;`.
inline Scheme parse_scheme(const std::string& text) {
  Scheme g;
  detail::SchemeLexer lx{text};
  // Two passes: the first collects nonterminal names so bodies can refer forward.
  std::set<std::string> names;
  {
    detail::SchemeLexer scan{text};
    while (!scan.eof()) {
      if (scan.peek_ident()) {
        std::string w = scan.ident();
        if (w == "nonterminal" && scan.peek_ident()) names.insert(scan.ident());
      } else {
        ++scan.pos;
      }
    }
  }
  bool have_start = false;
  while (!lx.eof()) {
    std::string kw = lx.ident();
    if (kw == "start") {
      g.start = lx.ident();
      lx.expect(";");
      have_start = true;
    } else if (kw == "nonterminal") {
      std::string n = lx.ident();
      lx.expect(":");
      Sort s = detail::parse_sort(lx);
      lx.expect("=");
      detail::TermParser tp{lx, names, {}};
      Term body = tp.term();
      lx.expect(";");
      if (g.sorts.count(n)) lx.fail("nonterminal '" + n + "' declared twice");
      g.order.push_back(n);
      g.sorts[n] = s;
      g.rules[n] = body;
    } else {
      lx.fail("expected 'nonterminal' or 'start', got '" + kw + "'");
    }
  }
  if (!have_start) throw input_error("scheme has no 'start' declaration");
  return g;
}

inline std::string to_string(const Scheme& g) {
  std::ostringstream os;
  for (const auto& n : g.order)
    os << "nonterminal " << n << " : " << to_string(g.sorts.at(n)) << " = " << to_string(g.rules.at(n))
       << ";\n";
  os << "start " << g.start << ";\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Head normalization and Bohm trees

inline constexpr size_t kDefaultBudget = 100000;

enum class HeadStatus { Constructor, Diverges, Unproven };

struct HeadResult {
  HeadStatus status;
  Letter label;              // omega unless Constructor
  std::vector<Term> children;
  size_t steps = 0;
};

namespace detail {

// A reduction state h a1 ... an, with args stored in reverse (back() is a1).
struct HeadState {
  Term head;
  std::vector<Term> rargs;

  size_t hash() const {
    size_t h = head->hash;
    for (const auto& a : rargs) h = mix(h, a->hash);
    return h;
  }
  bool operator==(const HeadState& o) const {
    if (rargs.size() != o.rargs.size() || !term_eq(head, o.head)) return false;
    for (size_t i = 0; i < rargs.size(); ++i)
      if (!term_eq(rargs[i], o.rargs[i])) return false;
    return true;
  }
};

struct RepetitionLog {
  std::unordered_map<size_t, std::vector<HeadState>> seen;
  bool insert(const HeadState& s) {
    auto& bucket = seen[s.hash()];
    for (const auto& o : bucket)
      if (o == s) return false;
    bucket.push_back(s);
    return true;
  }
};

}  // namespace detail

/// Leftmost-outermost head reduction of a closed term of sort o.
inline HeadResult head_normalize(const Scheme& g, const Term& t, size_t budget) {
  detail::HeadState st{t, {}};
  detail::RepetitionLog log;
  size_t steps = 0;
  bool reduced_since_log = true;
  for (;;) {
    while (st.head->kind == TermKind::App) {
      st.rargs.push_back(st.head->kids[1]);
      st.head = st.head->kids[0];
    }
    if (reduced_since_log) {
      if (!log.insert(st)) return {HeadStatus::Diverges, kOmega, {}, steps};
      reduced_since_log = false;
    }
    switch (st.head->kind) {
      case TermKind::Con:
        if (!st.rargs.empty()) throw internal_error("constructor applied to arguments");
        return {HeadStatus::Constructor, st.head->name, st.head->kids, steps};
      case TermKind::NT:
        st.head = g.rules.at(st.head->name);
        break;
      case TermKind::Lam: {
        if (st.rargs.empty()) throw internal_error("lambda at sort o");
        Term a = st.rargs.back();
        st.rargs.pop_back();
        st.head = beta(st.head->kids[0], a);
        break;
      }
      default:
        throw internal_error("open term during head reduction");
    }
    ++steps;
    reduced_since_log = true;
    if (steps > budget) return {HeadStatus::Unproven, kOmega, {}, steps};
  }
}

/// Full beta-normal form without unfolding nonterminals.
inline Term beta_normal(const Term& t, size_t& steps, size_t budget) {
  switch (t->kind) {
    case TermKind::Con: {
      std::vector<Term> ks;
      for (const auto& k : t->kids) ks.push_back(beta_normal(k, steps, budget));
      return con(t->name, std::move(ks));
    }
    case TermKind::Lam:
      return lam(t->name, t->sort, beta_normal(t->kids[0], steps, budget));
    case TermKind::App: {
      Term f = beta_normal(t->kids[0], steps, budget);
      Term a = beta_normal(t->kids[1], steps, budget);
      if (f->kind == TermKind::Lam) {
        if (++steps > budget) return app(f, a);
        return beta_normal(beta(f->kids[0], a), steps, budget);
      }
      return app(f, a);
    }
    default:
      return t;
  }
}

/// Alternative strategy: normalize all redexes innermost-first, then unfold the head nonterminal.
inline HeadResult head_normalize_innermost(const Scheme& g, const Term& t, size_t budget) {
  size_t steps = 0;
  std::vector<Term> seen;
  std::unordered_map<size_t, std::vector<Term>> log;
  Term cur = t;
  for (;;) {
    cur = beta_normal(cur, steps, budget);
    if (steps > budget) return {HeadStatus::Unproven, kOmega, {}, steps};
    auto& bucket = log[cur->hash];
    for (const auto& o : bucket)
      if (term_eq(o, cur)) return {HeadStatus::Diverges, kOmega, {}, steps};
    bucket.push_back(cur);
    Term h = cur;
    std::vector<Term> rargs;
    while (h->kind == TermKind::App) {
      rargs.push_back(h->kids[1]);
      h = h->kids[0];
    }
    if (h->kind == TermKind::Con) return {HeadStatus::Constructor, h->name, h->kids, steps};
    if (h->kind != TermKind::NT) throw internal_error("unexpected head after normalization");
    Term u = g.rules.at(h->name);
    for (size_t i = rargs.size(); i-- > 0;) u = app(u, rargs[i]);
    cur = u;
    if (++steps > budget) return {HeadStatus::Unproven, kOmega, {}, steps};
  }
}

struct BoehmPrefix {
  FiniteTree tree;
  std::vector<NodePath> unproven;  // omega leaves without a divergence proof
};

/// Lazy Bohm tree. Children are computed once and cached.
class BoehmSource : public LazyTreeSource {
 public:
  using Strategy = HeadResult (*)(const Scheme&, const Term&, size_t);

  BoehmSource(std::shared_ptr<const Scheme> g, Term t, size_t budget, Strategy strat = &head_normalize)
      : g_(std::move(g)), t_(std::move(t)), budget_(budget), strat_(strat) {}

  Letter label() const override { return force().label; }
  size_t arity() const override { return force().children.size(); }
  bool unproven() const { return force().status == HeadStatus::Unproven; }
  SourcePtr child(size_t i) const override { return child_source(i); }

  std::shared_ptr<const BoehmSource> child_source(size_t i) const {
    const HeadResult& h = force();
    if (i < 1 || i > h.children.size()) throw input_error("child index out of range");
    if (!kids_[i - 1])
      kids_[i - 1] = std::make_shared<BoehmSource>(g_, h.children[i - 1], budget_, strat_);
    return kids_[i - 1];
  }

 private:
  const HeadResult& force() const {
    if (!result_) {
      result_ = strat_(*g_, t_, budget_);
      kids_.assign(result_->children.size(), nullptr);
    }
    return *result_;
  }

  std::shared_ptr<const Scheme> g_;
  Term t_;
  size_t budget_;
  Strategy strat_;
  mutable std::optional<HeadResult> result_;
  mutable std::vector<std::shared_ptr<const BoehmSource>> kids_;
};

inline std::shared_ptr<const BoehmSource> boehm_source(const Scheme& g, size_t budget = kDefaultBudget) {
  sort_check(g);
  return std::make_shared<BoehmSource>(std::make_shared<Scheme>(g), nt(g.start), budget);
}

inline BoehmPrefix materialize(const BoehmSource& s, size_t depth) {
  BoehmPrefix out;
  std::function<FiniteTree(const BoehmSource&, size_t, NodePath&)> go =
      [&](const BoehmSource& n, size_t d, NodePath& u) {
        size_t r = n.arity();
        if (d == 0 && r > 0) return FiniteTree(kCut);
        if (n.unproven()) out.unproven.push_back(u);
        FiniteTree t(n.label());
        for (size_t i = 1; i <= r; ++i) {
          u.push_back(static_cast<int>(i));
          t.children.push_back(go(*n.child_source(i), d - 1, u));
          u.pop_back();
        }
        return t;
      };
  NodePath root;
  out.tree = go(s, depth, root);
  return out;
}

/// Depth-truncated Bohm tree, cut with the same frontier rule as `unfold`.
inline BoehmPrefix boehm_prefix(const Scheme& g, size_t depth, size_t budget = kDefaultBudget) {
  return materialize(*boehm_source(g, budget), depth);
}

inline BoehmPrefix boehm_prefix_innermost(const Scheme& g, size_t depth, size_t budget = kDefaultBudget) {
  sort_check(g);
  BoehmSource s(std::make_shared<Scheme>(g), nt(g.start), budget, &head_normalize_innermost);
  return materialize(s, depth);
}

}  // namespace msou

#pragma once

// Top-down tree transducers, nd-choice languages and simultaneous unboundedness.
// Together they give a second way to compute U-prefix automaton values on
// regular trees: enumerate runs with a transducer, then ask SUP for letter 1.

#include <algorithm>
#include <functional>
#include <map>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "msou/automata.hpp"
#include "msou/error.hpp"
#include "msou/tree.hpp"

namespace msou {

// ---------------------------------------------------------------------------
// Transducers

/// Right-hand side: a node constructor, or the placeholder x_{arg,state} when arg > 0.
struct Rhs {
  Letter label;
  int arg = 0;
  std::string state;
  std::vector<Rhs> children;

  static Rhs var(int i, std::string p) { return Rhs{"", i, std::move(p), {}}; }
  static Rhs node(Letter a, std::vector<Rhs> cs = {}) { return Rhs{std::move(a), 0, "", std::move(cs)}; }
  bool is_var() const { return arg > 0; }
  bool operator==(const Rhs&) const = default;
};

inline size_t rhs_size(const Rhs& t) {
  size_t n = t.is_var() ? 0 : 1;
  for (const auto& c : t.children) n += rhs_size(c);
  return n;
}

inline void print_rhs(std::ostream& os, const Rhs& t) {
  if (t.is_var()) {
    os << '$' << t.arg << ':' << t.state;
    return;
  }
  os << t.label;
  if (t.children.empty()) return;
  os << '[';
  for (size_t i = 0; i < t.children.size(); ++i) {
    if (i) os << ", ";
    print_rhs(os, t.children[i]);
  }
  os << ']';
}

inline std::string to_string(const Rhs& t) {
  std::ostringstream os;
  print_rhs(os, t);
  return os.str();
}

/// Placeholders are written $i:p; everything else is tree syntax.
inline Rhs parse_rhs(const std::string& text) {
  std::function<Rhs(const FiniteTree&)> conv = [&](const FiniteTree& t) {
    if (!t.label.empty() && t.label[0] == '$') {
      auto colon = t.label.find(':');
      if (colon == std::string::npos || colon == 1 || colon + 1 == t.label.size() || !t.children.empty())
        throw input_error("bad placeholder '" + t.label + "', expected $i:state");
      int i = 0;
      try {
        i = std::stoi(t.label.substr(1, colon - 1));
      } catch (const std::exception&) {
        throw input_error("bad placeholder '" + t.label + "'");
      }
      if (i <= 0) throw input_error("placeholder index must be positive in '" + t.label + "'");
      return Rhs::var(i, t.label.substr(colon + 1));
    }
    Rhs r = Rhs::node(t.label);
    for (const auto& c : t.children) r.children.push_back(conv(c));
    return r;
  };
  return conv(parse_tree(text));
}

using TransducerKey = std::tuple<std::string, Letter, size_t>;

struct Transducer {
  std::vector<Letter> alphabet;
  size_t max_arity = 0;
  std::vector<std::string> states;
  std::string initial;
  std::map<TransducerKey, Rhs> delta;

  const Rhs& rule(const std::string& q, const Letter& a, size_t r) const {
    auto it = delta.find({q, a, r});
    if (it == delta.end())
      throw input_error("transducer has no rule for (" + q + ", " + a + ", " + std::to_string(r) + ")");
    return it->second;
  }

  size_t max_rhs_size() const {
    size_t n = 1;
    for (const auto& [k, t] : delta) n = std::max(n, rhs_size(t));
    return n;
  }

  void validate() const {
    std::set<std::string> qs(states.begin(), states.end());
    if (qs.size() != states.size()) throw input_error("duplicate transducer state");
    if (!qs.count(initial)) throw input_error("initial state '" + initial + "' is not a state");
    std::set<Letter> sigma(alphabet.begin(), alphabet.end());
    for (const auto& [key, t] : delta) {
      const auto& [q, a, r] = key;
      std::string where = " in rule (" + q + ", " + a + ", " + std::to_string(r) + ")";
      if (!qs.count(q)) throw input_error("unknown state" + where);
      if (!sigma.count(a)) throw input_error("letter not in the alphabet" + where);
      if (r > max_arity) throw input_error("arity above the maximum" + where);
      if (t.is_var()) throw input_error("right-hand side is a bare placeholder" + where);
      std::function<void(const Rhs&)> check = [&](const Rhs& s) {
        if (s.is_var()) {
          if (static_cast<size_t>(s.arg) > r) throw input_error("placeholder index above the arity" + where);
          if (!qs.count(s.state)) throw input_error("placeholder state '" + s.state + "' unknown" + where);
          return;
        }
        if (s.label.empty() || s.label[0] == '$') throw input_error("bad constructor label" + where);
        for (const auto& c : s.children) check(c);
      };
      check(t);
    }
  }
};

/// Table rows `(q, a, r) -> rhs`, preceded by header lines.
inline std::string to_string(const Transducer& tr) {
  std::ostringstream os;
  os << "states";
  for (const auto& q : tr.states) os << ' ' << q;
  os << "\ninitial " << tr.initial << "\nalphabet";
  for (const auto& a : tr.alphabet) os << ' ' << a;
  os << "\nmax-arity " << tr.max_arity << '\n';
  for (const auto& [key, t] : tr.delta)
    os << '(' << std::get<0>(key) << ", " << std::get<1>(key) << ", " << std::get<2>(key) << ") -> " << to_string(t)
       << '\n';
  return os.str();
}

inline Transducer parse_transducer(const std::string& text) {
  Transducer tr;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  static const std::regex row(R"(^\s*\(\s*([^,\s]+)\s*,\s*([^,\s]+)\s*,\s*(\d+)\s*\)\s*->\s*(.+)$)");
  bool have_initial = false;
  while (std::getline(in, line)) {
    ++lineno;
    auto cut = line.find("//");
    if (cut != std::string::npos) line = line.substr(0, cut);
    std::string where = " on line " + std::to_string(lineno);
    std::smatch m;
    if (std::regex_match(line, m, row)) {
      TransducerKey key{m[1], m[2], std::stoul(m[3])};
      if (tr.delta.count(key)) throw input_error("duplicate rule" + where);
      tr.delta[key] = parse_rhs(m[4]);
      continue;
    }
    std::istringstream ls(line);
    std::string kw;
    if (!(ls >> kw)) continue;
    if (kw == "states") {
      for (std::string q; ls >> q;) tr.states.push_back(q);
    } else if (kw == "alphabet") {
      for (std::string a; ls >> a;) tr.alphabet.push_back(a);
    } else if (kw == "initial") {
      if (!(ls >> tr.initial)) throw input_error("missing initial state" + where);
      have_initial = true;
    } else if (kw == "max-arity") {
      if (!(ls >> tr.max_arity)) throw input_error("missing arity" + where);
    } else {
      throw input_error("unrecognized line" + where);
    }
  }
  if (!have_initial) throw input_error("transducer has no 'initial' line");
  tr.validate();
  return tr;
}

/// T_q0(t). A `#cut` leaf is passed through unchanged.
inline FiniteTree apply_transducer_finite(const Transducer& tr, const FiniteTree& t) {
  std::function<FiniteTree(const std::string&, const FiniteTree&)> go = [&](const std::string& q,
                                                                            const FiniteTree& s) {
    if (s.label == kCut) return FiniteTree(kCut);
    if (s.children.size() > tr.max_arity)
      throw input_error("node '" + s.label + "' has arity above the transducer maximum");
    std::function<FiniteTree(const Rhs&)> inst = [&](const Rhs& h) {
      if (h.is_var()) return go(h.state, s.children[static_cast<size_t>(h.arg - 1)]);
      FiniteTree out(h.label);
      for (const auto& c : h.children) out.children.push_back(inst(c));
      return out;
    };
    return inst(tr.rule(q, s.label, s.children.size()));
  };
  return go(tr.initial, t);
}

/// Class product: (state, input class) pairs, plus one class per inner constructor of
/// each instantiated right-hand side.
inline RegularTree apply_transducer_regular(const Transducer& tr, const RegularTree& r) {
  validate_regular(r, tr.max_arity);
  RegularTree out;
  auto pair_id = [](const std::string& q, const ClassId& c) { return q + "@" + c; };
  std::vector<std::pair<std::string, ClassId>> todo{{tr.initial, r.root}};
  std::set<std::pair<std::string, ClassId>> seen{todo.front()};
  while (!todo.empty()) {
    auto [q, c] = todo.back();
    todo.pop_back();
    const RegularRule& rule = r.rule(c);
    const Rhs& h = tr.rule(q, rule.label, rule.children.size());
    std::string base = pair_id(q, c);
    std::function<ClassId(const Rhs&, const std::string&)> emit = [&](const Rhs& s, const std::string& id) {
      if (s.is_var()) {
        std::pair<std::string, ClassId> next{s.state, rule.children[static_cast<size_t>(s.arg - 1)]};
        if (seen.insert(next).second) todo.push_back(next);
        return pair_id(next.first, next.second);
      }
      RegularRule out_rule{s.label, {}};
      for (size_t i = 0; i < s.children.size(); ++i)
        out_rule.children.push_back(emit(s.children[i], id + "/" + std::to_string(i + 1)));
      if (!out.rules.emplace(id, out_rule).second)
        throw input_error("class name '" + id + "' clashes in the transducer image; avoid '@' and '/' in class names");
      return id;
    };
    emit(h, base);
  }
  out.root = pair_id(tr.initial, r.root);
  size_t bound = tr.states.size() * r.rules.size() * tr.max_rhs_size();
  if (out.rules.size() > bound) throw internal_error("transducer image exceeds its class bound");
  return out;
}

// ---------------------------------------------------------------------------
// The run-enumerating transducer

namespace detail {

inline std::string fresh_state(const std::vector<std::string>& used, std::string base) {
  while (std::find(used.begin(), used.end(), base) != used.end()) base += "'";
  return base;
}

}  // namespace detail

/// Below every input node with r children: the r transformed children, then one
/// ?-child per automaton state whose nd-subtree lists the runs from that state.
/// Run nodes are labeled 1 (important state) or 0, or by the state itself when
/// `mark_importance` is off; top-marked subtrees become a single leaf labeled T.
inline Transducer run_transducer_of(const UPrefixAutomaton& a, const std::vector<Letter>& sigma_in,
                                    size_t max_arity, bool mark_importance = true) {
  a.validate();
  if (!mark_importance)
    for (const auto& q : a.states)
      if (is_reserved(q) || q.find('$') == 0) throw input_error("state '" + q + "' cannot be used as a letter");
  Transducer tr;
  std::set<Letter> sigma(sigma_in.begin(), sigma_in.end());
  tr.alphabet.assign(sigma.begin(), sigma.end());
  tr.max_arity = max_arity;
  tr.states = a.states;
  tr.initial = detail::fresh_state(a.states, "q0");
  tr.states.push_back(tr.initial);
  tr.states.push_back(kTop);
  for (const auto& x : tr.alphabet)
    for (size_t r = 0; r <= max_arity; ++r) {
      std::map<std::string, Rhs> per_state;
      for (const auto& q : a.states) {
        std::set<std::vector<std::string>> rows;
        for (const auto& t : a.delta)
          if (t.state == q && t.children.size() == r && letter_matches(t.letter, x)) rows.insert(t.children);
        Rhs alt = Rhs::node(kNd);
        Letter mark = !mark_importance ? q : a.important.count(q) ? "1" : "0";
        for (const auto& kids : rows) {
          Rhs n = Rhs::node(mark);
          for (size_t i = 0; i < kids.size(); ++i) n.children.push_back(Rhs::var(static_cast<int>(i + 1), kids[i]));
          alt.children.push_back(std::move(n));
        }
        per_state[q] = alt;
        tr.delta[{q, x, r}] = alt;
      }
      Rhs top = Rhs::node(x);
      for (size_t i = 0; i < r; ++i) top.children.push_back(Rhs::var(static_cast<int>(i + 1), tr.initial));
      for (const auto& q : a.states) top.children.push_back(Rhs::node(kQuery, {per_state[q]}));
      tr.delta[{tr.initial, x, r}] = top;
      tr.delta[{kTop, x, r}] = Rhs::node(kTop);
    }
  tr.validate();
  return tr;
}

// ---------------------------------------------------------------------------
// nd-languages

/// A regular tree read as a grammar: nd classes choose one child, omega (and #cut)
/// classes derive nothing, other classes are a single constructor production.
struct NdGrammar {
  struct Production {
    Letter label;  // empty for an nd choice
    std::vector<size_t> children;
  };
  std::vector<ClassId> names;
  std::map<ClassId, size_t> index;
  std::vector<std::vector<Production>> prods;

  size_t size() const { return names.size(); }
};

inline NdGrammar nd_grammar(const RegularTree& r) {
  validate_regular(r);
  NdGrammar g;
  for (const auto& [c, rule] : r.rules) {
    g.index[c] = g.names.size();
    g.names.push_back(c);
  }
  g.prods.resize(g.names.size());
  for (const auto& [c, rule] : r.rules) {
    auto& ps = g.prods[g.index.at(c)];
    if (rule.label == kOmega || rule.label == kCut) continue;
    if (rule.label == kNd) {
      for (const auto& k : rule.children) ps.push_back({"", {g.index.at(k)}});
      continue;
    }
    NdGrammar::Production p{rule.label, {}};
    for (const auto& k : rule.children) p.children.push_back(g.index.at(k));
    ps.push_back(std::move(p));
  }
  return g;
}

inline std::string to_string(const NdGrammar& g) {
  std::ostringstream os;
  for (size_t x = 0; x < g.size(); ++x) {
    os << g.names[x] << " ->";
    if (g.prods[x].empty()) os << " (none)";
    for (size_t i = 0; i < g.prods[x].size(); ++i) {
      const auto& p = g.prods[x][i];
      os << (i ? " |" : "") << ' ';
      if (p.label.empty()) {
        os << g.names[p.children[0]];
        continue;
      }
      os << p.label;
      if (!p.children.empty()) {
        os << '[';
        for (size_t j = 0; j < p.children.size(); ++j) os << (j ? ", " : "") << g.names[p.children[j]];
        os << ']';
      }
    }
    os << '\n';
  }
  return os.str();
}

namespace detail {

inline std::vector<bool> nd_productive(const NdGrammar& g) {
  std::vector<bool> ok(g.size(), false);
  for (bool changed = true; changed;) {
    changed = false;
    for (size_t x = 0; x < g.size(); ++x) {
      if (ok[x]) continue;
      for (const auto& p : g.prods[x])
        if (std::all_of(p.children.begin(), p.children.end(), [&](size_t y) { return ok[y]; })) {
          ok[x] = changed = true;
          break;
        }
    }
  }
  return ok;
}

template <class T>
std::map<ClassId, T> by_name(const NdGrammar& g, const std::vector<T>& v) {
  std::map<ClassId, T> out;
  for (size_t x = 0; x < g.size(); ++x) out[g.names[x]] = v[x];
  return out;
}

/// Strongly connected components (iterative Tarjan); comp[x] and whether each
/// component carries an internal edge.
struct Sccs {
  std::vector<size_t> comp;
  size_t count = 0;
};

inline Sccs sccs(const std::vector<std::vector<size_t>>& adj) {
  size_t n = adj.size();
  Sccs out;
  out.comp.assign(n, SIZE_MAX);
  std::vector<size_t> idx(n, SIZE_MAX), low(n, 0), stack;
  std::vector<bool> on(n, false);
  size_t counter = 0;
  for (size_t s = 0; s < n; ++s) {
    if (idx[s] != SIZE_MAX) continue;
    std::vector<std::pair<size_t, size_t>> work{{s, 0}};
    idx[s] = low[s] = counter++;
    stack.push_back(s);
    on[s] = true;
    while (!work.empty()) {
      auto& [v, i] = work.back();
      if (i < adj[v].size()) {
        size_t w = adj[v][i++];
        if (idx[w] == SIZE_MAX) {
          idx[w] = low[w] = counter++;
          stack.push_back(w);
          on[w] = true;
          work.push_back({w, 0});
        } else if (on[w]) {
          low[v] = std::min(low[v], idx[w]);
        }
        continue;
      }
      if (low[v] == idx[v]) {
        for (;;) {
          size_t w = stack.back();
          stack.pop_back();
          on[w] = false;
          out.comp[w] = out.count;
          if (w == v) break;
        }
        ++out.count;
      }
      size_t done = v;
      work.pop_back();
      if (!work.empty()) low[work.back().first] = std::min(low[work.back().first], low[done]);
    }
  }
  return out;
}

/// Productive edges x -> child, one per child position of each production all of whose
/// children are productive.
struct LiveEdge {
  size_t from, to;
  const NdGrammar::Production* prod;
  size_t pos;
};

inline std::vector<LiveEdge> live_edges(const NdGrammar& g, const std::vector<bool>& ok) {
  std::vector<LiveEdge> out;
  for (size_t x = 0; x < g.size(); ++x)
    for (const auto& p : g.prods[x]) {
      if (!std::all_of(p.children.begin(), p.children.end(), [&](size_t y) { return ok[y]; })) continue;
      for (size_t j = 0; j < p.children.size(); ++j) out.push_back({x, p.children[j], &p, j});
    }
  return out;
}

/// SUP for one letter: reach, inside the productive part, a cycle that can add the letter.
inline std::vector<bool> sup_single(const NdGrammar& g, const Letter& a) {
  auto ok = nd_productive(g);
  std::vector<bool> occ(g.size(), false);
  for (bool changed = true; changed;) {
    changed = false;
    for (size_t x = 0; x < g.size(); ++x) {
      if (occ[x] || !ok[x]) continue;
      for (const auto& p : g.prods[x]) {
        if (!std::all_of(p.children.begin(), p.children.end(), [&](size_t y) { return ok[y]; })) continue;
        if (p.label == a || std::any_of(p.children.begin(), p.children.end(), [&](size_t y) { return occ[y]; })) {
          occ[x] = changed = true;
          break;
        }
      }
    }
  }
  auto edges = live_edges(g, ok);
  std::vector<std::vector<size_t>> adj(g.size()), radj(g.size());
  for (const auto& e : edges) {
    adj[e.from].push_back(e.to);
    radj[e.to].push_back(e.from);
  }
  auto s = sccs(adj);
  std::vector<bool> pump_comp(s.count, false);
  for (const auto& e : edges) {
    if (s.comp[e.from] != s.comp[e.to]) continue;
    bool gain = e.prod->label == a;
    for (size_t k = 0; k < e.prod->children.size() && !gain; ++k)
      if (k != e.pos && occ[e.prod->children[k]]) gain = true;
    if (gain) pump_comp[s.comp[e.from]] = true;
  }
  std::vector<bool> out(g.size(), false);
  std::vector<size_t> stack;
  for (size_t x = 0; x < g.size(); ++x)
    if (ok[x] && pump_comp[s.comp[x]]) {
      out[x] = true;
      stack.push_back(x);
    }
  while (!stack.empty()) {
    size_t y = stack.back();
    stack.pop_back();
    for (size_t x : radj[y])
      if (!out[x]) {
        out[x] = true;
        stack.push_back(x);
      }
  }
  return out;
}

/// SUP for a letter set, experimental: per class a downward-closed family of subsets of A
/// that can grow together. Combines children through constructor productions and closes
/// under the letters pumpable along cycles of the class's component.
inline std::vector<bool> sup_multi(const NdGrammar& g, const std::vector<Letter>& letters) {
  size_t k = letters.size();
  if (k > 10) throw resource_error("sup: more than 10 letters in the query set");
  size_t full = (size_t{1} << k) - 1;
  auto bit = [&](const Letter& a) -> size_t {
    for (size_t i = 0; i < k; ++i)
      if (letters[i] == a) return size_t{1} << i;
    return 0;
  };
  auto ok = nd_productive(g);
  std::vector<size_t> occ(g.size(), 0);
  for (bool changed = true; changed;) {
    changed = false;
    for (size_t x = 0; x < g.size(); ++x) {
      if (!ok[x]) continue;
      for (const auto& p : g.prods[x]) {
        if (!std::all_of(p.children.begin(), p.children.end(), [&](size_t y) { return ok[y]; })) continue;
        size_t m = occ[x] | bit(p.label);
        for (size_t y : p.children) m |= occ[y];
        if (m != occ[x]) {
          occ[x] = m;
          changed = true;
        }
      }
    }
  }
  auto edges = live_edges(g, ok);
  std::vector<std::vector<size_t>> adj(g.size());
  for (const auto& e : edges) adj[e.from].push_back(e.to);
  auto s = sccs(adj);
  std::vector<size_t> pump(s.count, 0);
  std::vector<bool> cyclic(s.count, false);
  for (const auto& e : edges) {
    if (s.comp[e.from] != s.comp[e.to]) continue;
    size_t c = s.comp[e.from];
    cyclic[c] = true;
    pump[c] |= bit(e.prod->label);
    for (size_t j = 0; j < e.prod->children.size(); ++j)
      if (j != e.pos) pump[c] |= occ[e.prod->children[j]];
  }
  // fam[x][m]: subset m can be made simultaneously large from x. Downward closed.
  std::vector<std::vector<bool>> fam(g.size(), std::vector<bool>(full + 1, false));
  auto close_down = [&](std::vector<bool>& f) {
    for (size_t m = full + 1; m-- > 0;)
      if (f[m])
        for (size_t i = 0; i < k; ++i)
          if (m >> i & 1) f[m & ~(size_t{1} << i)] = true;
  };
  for (bool changed = true; changed;) {
    changed = false;
    for (size_t x = 0; x < g.size(); ++x) {
      if (!ok[x]) continue;
      std::vector<bool> f = fam[x];
      for (const auto& p : g.prods[x]) {
        if (!std::all_of(p.children.begin(), p.children.end(), [&](size_t y) { return ok[y]; })) continue;
        std::vector<bool> acc(full + 1, false);
        acc[0] = true;
        for (size_t y : p.children) {
          std::vector<bool> next(full + 1, false);
          for (size_t m = 0; m <= full; ++m)
            if (acc[m])
              for (size_t n = 0; n <= full; ++n)
                if (fam[y][n]) next[m | n] = true;
          acc = std::move(next);
        }
        for (size_t m = 0; m <= full; ++m)
          if (acc[m]) f[m] = true;
      }
      if (cyclic[s.comp[x]])
        for (size_t m = 0; m <= full; ++m)
          if (f[m]) f[m | pump[s.comp[x]]] = true;
      close_down(f);
      if (f != fam[x]) {
        fam[x] = std::move(f);
        changed = true;
      }
    }
  }
  std::vector<bool> out(g.size());
  for (size_t x = 0; x < g.size(); ++x) out[x] = fam[x][full];
  return out;
}

}  // namespace detail

/// Whether the language of each class is nonempty.
inline std::map<ClassId, bool> nd_nonempty(const NdGrammar& g) {
  return detail::by_name(g, detail::nd_productive(g));
}

/// SUP_A of each class's language. A single letter uses cycle analysis; larger sets use
/// the subset-lattice fixpoint.
inline std::map<ClassId, bool> sup(const NdGrammar& g, const std::set<Letter>& letters) {
  if (letters.empty()) throw input_error("sup: the letter set is empty");
  for (const auto& a : letters)
    if (is_reserved(a)) throw input_error("sup: letter '" + a + "' is reserved");
  if (letters.size() == 1) return detail::by_name(g, detail::sup_single(g, *letters.begin()));
  return detail::by_name(g, detail::sup_multi(g, std::vector<Letter>(letters.begin(), letters.end())));
}

// ---------------------------------------------------------------------------
// U-prefix values through SUP

inline std::map<ClassId, std::vector<int>> uprefix_values_via_sup(const UPrefixAutomaton& a, const RegularTree& r) {
  validate_regular(r);
  detail::check_labels(a.alphabet, r);
  std::vector<Letter> sigma;
  size_t arity = 0;
  for (const auto& [c, rule] : r.rules) {
    sigma.push_back(rule.label);
    arity = std::max(arity, rule.children.size());
  }
  Transducer tr = run_transducer_of(a, sigma, arity);
  RegularTree img = apply_transducer_regular(tr, r);
  NdGrammar g = nd_grammar(img);
  auto ne = nd_nonempty(g);
  auto unb = sup(g, {"1"});
  std::map<ClassId, std::vector<int>> out;
  size_t nq = a.states.size();
  for (const auto& [c, rule] : r.rules) {
    auto id = tr.initial + "@" + c;
    auto it = img.rules.find(id);
    if (it == img.rules.end()) continue;  // unreachable from the root
    const auto& kids = it->second.children;
    if (kids.size() != rule.children.size() + nq) throw internal_error("unexpected transducer image shape");
    std::vector<int> f(nq);
    for (size_t i = 0; i < nq; ++i) {
      const ClassId& query = kids[rule.children.size() + i];
      const ClassId& below = img.rules.at(query).children.at(0);
      f[i] = unb.at(query) ? 2 : ne.at(below) ? 1 : 0;
    }
    out[c] = f;
  }
  return out;
}

/// Same contract as apply_uprefix_regular, computed through the transducer and SUP.
/// Classes unreachable from the root are dropped.
inline RegularTree uprefix_via_sup(const UPrefixAutomaton& a, const RegularTree& r) {
  auto f = uprefix_values_via_sup(a, r);
  RegularTree out;
  out.root = r.root;
  for (const auto& [c, rule] : r.rules)
    if (f.count(c)) out.rules[c] = RegularRule{out_letter(rule.label, f.at(c)), rule.children};
  return out;
}

}  // namespace msou

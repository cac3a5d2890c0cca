#pragma once

// Shared generators for property and acceptance tests.

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "msou/automata.hpp"
#include "msou/logic.hpp"
#include "msou/transduce.hpp"
#include "msou/tree.hpp"

namespace msou::testing {

/// Every tree with 1..max_nodes nodes, labels from `letters`, arity <= max_arity.
inline std::vector<FiniteTree> all_trees(size_t max_nodes, const std::vector<Letter>& letters, size_t max_arity) {
  // forests[n][k]: sequences of k trees with n nodes in total.
  std::vector<std::vector<FiniteTree>> exact(max_nodes + 1);
  std::function<std::vector<std::vector<FiniteTree>>(size_t, size_t)> forests = [&](size_t n, size_t k) {
    std::vector<std::vector<FiniteTree>> out;
    if (k == 0) {
      if (n == 0) out.push_back({});
      return out;
    }
    for (size_t first = 1; first + (k - 1) <= n; ++first)
      for (const auto& t : exact[first])
        for (auto rest : forests(n - first, k - 1)) {
          rest.insert(rest.begin(), t);
          out.push_back(std::move(rest));
        }
    return out;
  };
  for (size_t n = 1; n <= max_nodes; ++n)
    for (size_t k = 0; k <= max_arity && k <= n - 1; ++k)
      for (const auto& cs : forests(n - 1, k))
        for (const auto& a : letters) exact[n].push_back(FiniteTree(a, cs));
  std::vector<FiniteTree> all;
  for (size_t n = 1; n <= max_nodes; ++n) all.insert(all.end(), exact[n].begin(), exact[n].end());
  return all;
}

inline FiniteTree random_tree(std::mt19937& rng, size_t max_nodes, const std::vector<Letter>& letters,
                              size_t max_arity) {
  std::function<FiniteTree(size_t)> go = [&](size_t budget) {
    FiniteTree t(letters[rng() % letters.size()]);
    if (budget <= 1) return t;
    size_t r = rng() % (max_arity + 1);
    --budget;
    for (size_t i = 0; i < r && budget > 0; ++i) {
      size_t b = 1 + rng() % budget;
      t.children.push_back(go(b));
      budget -= b;
    }
    return t;
  };
  return go(max_nodes);
}

/// All valuations of `vars` over the nodes of `t`.
inline std::vector<Valuation> all_valuations(const FiniteTree& t, const std::vector<std::string>& vars) {
  auto nodes = nodes_of(t);
  std::vector<Valuation> out{{}};
  for (const auto& x : vars) {
    std::vector<Valuation> next;
    for (const auto& v : out)
      for (uint64_t m = 0; m < (uint64_t{1} << nodes.size()); ++m) {
        Valuation w = v;
        NodeSet s;
        for (size_t i = 0; i < nodes.size(); ++i)
          if (m >> i & 1) s.insert(nodes[i]);
        w[x] = s;
        next.push_back(std::move(w));
      }
    out = std::move(next);
  }
  return out;
}

/// Random class graph with 1..max_classes classes rooted at c0.
inline RegularTree random_regular(std::mt19937& rng, size_t max_classes, const std::vector<Letter>& letters,
                                  size_t max_arity) {
  RegularTree r;
  size_t n = 1 + rng() % max_classes;
  for (size_t i = 0; i < n; ++i) {
    RegularRule rule{letters[rng() % letters.size()], {}};
    size_t ar = rng() % (max_arity + 1);
    for (size_t j = 0; j < ar; ++j) rule.children.push_back("c" + std::to_string(rng() % n));
    r.rules["c" + std::to_string(i)] = rule;
  }
  r.root = "c0";
  return r;
}

/// Random U-prefix automaton over base letters with states p0.. and random transitions.
inline UPrefixAutomaton random_uprefix(std::mt19937& rng, size_t max_states, const std::vector<Letter>& letters,
                                       size_t max_arity, size_t rows = 0) {
  UPrefixAutomaton a;
  a.alphabet = Alphabet(letters);
  size_t n = 1 + rng() % max_states;
  for (size_t i = 0; i < n; ++i) {
    a.states.push_back("p" + std::to_string(i));
    if (rng() % 2) a.important.insert(a.states.back());
  }
  if (rows == 0) rows = 2 + rng() % (3 * n + 2);
  for (size_t k = 0; k < rows; ++k) {
    Transition t{a.states[rng() % n], letters[rng() % letters.size()], {}};
    size_t ar = rng() % (max_arity + 1);
    for (size_t j = 0; j < ar; ++j) t.children.push_back(rng() % 3 == 0 ? kTop : a.states[rng() % n]);
    a.delta.push_back(t);
  }
  return a;
}

// Fixed automata and trees from the worked examples.

inline UPrefixAutomaton a1() {
  UPrefixAutomaton a;
  a.alphabet = Alphabet({"a"});
  a.states = {"qlf", "qfin"};
  a.important = {"qfin"};
  a.delta = {{"qfin", "a", {}}, {"qfin", "a", {"qfin"}}, {"qfin", "a", {"qfin", "qfin"}}, {"qlf", "a", {}}};
  for (std::string q : {"qlf", "qfin"}) {
    a.delta.push_back({"qlf", "a", {q}});
    a.delta.push_back({"qlf", "a", {q, kTop}});
    a.delta.push_back({"qlf", "a", {kTop, q}});
  }
  return a;
}

inline FiniteTree full_binary(int h) {
  FiniteTree t("a");
  if (h > 0) t.children = {full_binary(h - 1), full_binary(h - 1)};
  return t;
}

inline UPrefixAutomaton pumping() {
  UPrefixAutomaton a;
  a.alphabet = Alphabet({"a"});
  a.states = {"p"};
  a.important = {"p"};
  a.delta = {{"p", "a", {"p", kTop}}, {"p", "a", {kTop, "p"}}, {"p", "a", {}}};
  return a;
}

inline RegularTree spine_with_leaf() { return {{{"U", {"a", {"U", "L"}}}, {"L", {"a", {}}}}, "U"}; }
inline RegularTree binary_a() { return {{{"w", {"a", {"w", "w"}}}}, "w"}; }
inline RegularTree spine_a() { return {{{"w", {"a", {"w"}}}}, "w"}; }

/// Class name that regular_of gives to node u.
inline ClassId class_of(const NodePath& u) { return "n" + (u.empty() ? std::string() : path_to_string(u)); }

/// Largest min-count over A among L-trees with at most s nodes, for s = 0..n; -1 when none.
/// Only the undominated count vectors are kept per class and size.
inline std::vector<int> best_min_counts(const NdGrammar& g, size_t x0, const std::vector<Letter>& A, size_t n) {
  using Vec = std::vector<int>;
  size_t k = A.size();
  std::vector<std::vector<std::set<Vec>>> P(g.size(), std::vector<std::set<Vec>>(n + 1));
  for (size_t s = 1; s <= n; ++s)
    for (bool changed = true; changed;) {
      changed = false;
      for (size_t x = 0; x < g.size(); ++x)
        for (const auto& p : g.prods[x]) {
          std::set<Vec> add;
          if (p.label.empty()) {
            add = P[p.children[0]][s];
          } else {
            Vec self(k, 0);
            for (size_t i = 0; i < k; ++i) self[i] = A[i] == p.label;
            std::function<void(size_t, size_t, Vec)> rec = [&](size_t j, size_t left, Vec v) {
              if (j == p.children.size()) {
                if (left == 0) add.insert(v);
                return;
              }
              for (size_t sz = 1; sz <= left; ++sz)
                for (const auto& w : P[p.children[j]][sz]) {
                  Vec u = v;
                  for (size_t i = 0; i < k; ++i) u[i] += w[i];
                  rec(j + 1, left - sz, u);
                }
            };
            rec(0, s - 1, self);
          }
          // keep only vectors not dominated by another: sums preserve domination
          std::set<Vec> merged = P[x][s];
          merged.insert(add.begin(), add.end());
          std::set<Vec> front;
          for (const auto& v : merged) {
            bool dominated = false;
            for (const auto& w : merged)
              if (w != v && std::equal(v.begin(), v.end(), w.begin(), [](int a, int b) { return a <= b; })) {
                dominated = true;
                break;
              }
            if (!dominated) front.insert(v);
          }
          if (front != P[x][s]) {
            P[x][s] = std::move(front);
            changed = true;
          }
        }
    }
  std::vector<int> out(n + 1, -1);
  for (size_t s = 1; s <= n; ++s) {
    out[s] = out[s - 1];
    for (const auto& v : P[x0][s]) out[s] = std::max(out[s], *std::min_element(v.begin(), v.end()));
  }
  return out;
}

struct FormulaGen {
  std::mt19937& rng;
  std::vector<Letter> letters{"a", "b"};
  int max_index = 2;
  bool allow_u = true;
  int counter = 0;

  using Scope = std::vector<std::pair<std::string, VarKind>>;

  size_t pick(size_t n) { return rng() % n; }

  Formula atom(const Scope& scope) {
    const auto& x = scope[pick(scope.size())].first;
    const auto& y = scope[pick(scope.size())].first;
    switch (pick(3)) {
      case 0:
        return f_label(letters[pick(letters.size())], x);
      case 1:
        return f_child(x, 1 + static_cast<int>(pick(static_cast<size_t>(max_index))), y);
      default:
        return f_sub(x, y);
    }
  }

  Formula gen(Scope scope, int depth) {
    if (!scope.empty() && (depth <= 0 || pick(4) == 0)) return atom(scope);
    size_t c = scope.empty() ? 3 + pick(allow_u ? 3 : 2) : pick(allow_u ? 6 : 5);
    switch (c) {
      case 0:
      case 1:
        return f_and(gen(scope, depth - 1), gen(scope, depth - 1));
      case 2:
        return f_not(gen(scope, depth - 1));
      case 3: {
        std::string z = "Z" + std::to_string(counter++);
        scope.push_back({z, VarKind::Inf});
        return f_exists(z, gen(scope, depth - 1));
      }
      case 4: {
        std::string f = "F" + std::to_string(counter++);
        scope.push_back({f, VarKind::Fin});
        return f_existsfin(f, gen(scope, depth - 1));
      }
      default: {
        std::string f = "F" + std::to_string(counter++);
        Scope fin;
        for (const auto& p : scope)
          if (p.second == VarKind::Fin) fin.push_back(p);
        fin.push_back({f, VarKind::Fin});
        return f_u(f, gen(fin, depth - 1));
      }
    }
  }
};

}  // namespace msou::testing

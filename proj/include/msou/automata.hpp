#pragma once

// U-prefix automata, MSO automata and their nested composition, applied to finite and
// regular trees, plus the translation of a nested automaton back into a sentence.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "msou/error.hpp"
#include "msou/grammar.hpp"
#include "msou/logic.hpp"
#include "msou/phenotype.hpp"
#include "msou/tree.hpp"

namespace msou {

/// The state name standing for the top marker in transitions and runs.
inline const std::string kTop = "T";

// ---------------------------------------------------------------------------
// Alphabets

/// Base letters times one digit block per layer applied before.
struct Alphabet {
  std::vector<Letter> base;
  std::vector<size_t> widths;

  Alphabet() = default;
  Alphabet(std::vector<Letter> b, std::vector<size_t> w = {}) : base(std::move(b)), widths(std::move(w)) {
    std::sort(base.begin(), base.end());
    base.erase(std::unique(base.begin(), base.end()), base.end());
  }

  bool operator==(const Alphabet&) const = default;

  size_t components() const { return widths.size() + 1; }

  bool contains(const Letter& a) const {
    auto cs = letter_components(a);
    if (cs.size() != components() || !std::binary_search(base.begin(), base.end(), cs[0])) return false;
    for (size_t j = 1; j < cs.size(); ++j) {
      if (cs[j].size() != widths[j - 1]) return false;
      for (char c : cs[j])
        if (c < '0' || c > '2') return false;
    }
    return true;
  }

  /// Output alphabet of a layer with `states` states reading this alphabet.
  Alphabet out(size_t states) const {
    Alphabet a = *this;
    a.widths.push_back(states);
    return a;
  }

  double size() const {
    double n = static_cast<double>(base.size());
    for (size_t w : widths) n *= std::pow(3.0, static_cast<double>(w));
    return n;
  }

  /// All letters; throws a resource error above `cap`.
  std::vector<Letter> letters(size_t cap = 1u << 16) const {
    if (size() > static_cast<double>(cap))
      throw resource_error("alphabet has " + std::to_string(size()) + " letters, over the cap " + std::to_string(cap));
    std::vector<Letter> out(base.begin(), base.end());
    for (size_t w : widths) {
      std::vector<std::string> blocks{""};
      for (size_t i = 0; i < w; ++i) {
        std::vector<std::string> next;
        for (const auto& b : blocks)
          for (char c : {'0', '1', '2'}) next.push_back(b + c);
        blocks = std::move(next);
      }
      std::vector<Letter> next;
      for (const auto& a : out)
        for (const auto& b : blocks) next.push_back(a + "|" + b);
      out = std::move(next);
    }
    return out;
  }
};

inline std::string to_string(const Alphabet& a) {
  std::string out = "{";
  for (size_t i = 0; i < a.base.size(); ++i) out += (i ? ", " : "") + a.base[i];
  out += "}";
  for (size_t w : a.widths) out += " x {0,1,2}^" + std::to_string(w);
  return out;
}

/// The digit block for a value map, in state order.
inline std::string digits_of(const std::vector<int>& f) {
  std::string out;
  for (int v : f) out += static_cast<char>('0' + v);
  return out;
}

inline Letter out_letter(const Letter& a, const std::vector<int>& f) { return a + "|" + digits_of(f); }

// ---------------------------------------------------------------------------
// Automata

struct Transition {
  std::string state;
  Letter letter;  // a letter or a pattern
  std::vector<std::string> children;  // states or kTop

  bool operator==(const Transition&) const = default;
};

struct UPrefixAutomaton {
  Alphabet alphabet;
  std::vector<std::string> states;
  std::set<std::string> important;
  std::vector<Transition> delta;

  size_t index_of(const std::string& q) const {
    auto it = std::find(states.begin(), states.end(), q);
    if (it == states.end()) throw input_error("unknown state '" + q + "'");
    return static_cast<size_t>(it - states.begin());
  }

  void validate() const {
    std::set<std::string> seen;
    for (const auto& q : states) {
      if (q == kTop) throw input_error("state name '" + kTop + "' is reserved for the top marker");
      if (!seen.insert(q).second) throw input_error("duplicate state '" + q + "'");
    }
    for (const auto& q : important)
      if (!seen.count(q)) throw input_error("important state '" + q + "' is not a state");
    for (const auto& t : delta) {
      if (!seen.count(t.state)) throw input_error("transition from unknown state '" + t.state + "'");
      for (const auto& c : t.children)
        if (c != kTop && !seen.count(c)) throw input_error("transition to unknown state '" + c + "'");
      if (letter_components(t.letter).size() != alphabet.components())
        throw input_error("transition letter '" + t.letter + "' does not fit the alphabet " + to_string(alphabet));
    }
  }
};

struct MSOAutomaton {
  Alphabet alphabet;
  std::vector<std::string> states;
  std::vector<Formula> sentences;

  /// One phenotype algebra per sentence, usually a single one over the
  /// conjunction of all sentences so shared subformulas are evaluated once.
  /// Copies share the cache, so Comp tables survive across trees.
  std::vector<PhenotypeAlgebra*> algebras() const {
    if (!cache_) cache_ = std::make_shared<Cache>();
    auto& slot = cache_->algebras[sentences];
    if (slot.empty() && !sentences.empty()) {
      Formula all = sentences[0];
      for (size_t i = 1; i < sentences.size(); ++i) all = f_and(all, sentences[i]);
      try {
        auto alg = std::make_shared<PhenotypeAlgebra>(all);
        slot.assign(sentences.size(), alg);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::Resource) throw;
        for (const auto& f : sentences) slot.push_back(std::make_shared<PhenotypeAlgebra>(f));
      }
    }
    std::vector<PhenotypeAlgebra*> out;
    for (const auto& a : slot) out.push_back(a.get());
    return out;
  }

  void validate() const {
    if (states.size() != sentences.size()) throw input_error("MSO automaton needs one sentence per state");
    std::set<std::string> seen;
    for (size_t i = 0; i < states.size(); ++i) {
      if (!seen.insert(states[i]).second) throw input_error("duplicate state '" + states[i] + "'");
      if (!sentences[i]->free.empty())
        throw input_error("sentence for '" + states[i] + "' has free variable '" + sentences[i]->free[0] + "'");
      if (!cache_) cache_ = std::make_shared<Cache>();
      if (!cache_->checked.count(sentences[i])) {
        check_wf(sentences[i]);
        cache_->checked.insert(sentences[i]);
      }
    }
  }

 private:
  struct Cache {
    std::map<std::vector<Formula>, std::vector<std::shared_ptr<PhenotypeAlgebra>>> algebras;
    std::set<Formula> checked;  // sentences known to be well formed
  };
  mutable std::shared_ptr<Cache> cache_;
};

using Layer = std::variant<UPrefixAutomaton, MSOAutomaton>;

inline const Alphabet& layer_alphabet(const Layer& l) {
  return std::visit([](const auto& a) -> const Alphabet& { return a.alphabet; }, l);
}
inline const std::vector<std::string>& layer_states(const Layer& l) {
  return std::visit([](const auto& a) -> const std::vector<std::string>& { return a.states; }, l);
}
inline Alphabet layer_output(const Layer& l) { return layer_alphabet(l).out(layer_states(l).size()); }

struct NestedAutomaton {
  std::vector<Layer> layers;

  const Alphabet& input() const {
    if (layers.empty()) throw input_error("nested automaton without layers");
    return layer_alphabet(layers.front());
  }
  Alphabet output() const {
    if (layers.empty()) throw input_error("nested automaton without layers");
    return layer_output(layers.back());
  }

  void validate() const {
    if (layers.empty()) throw input_error("nested automaton without layers");
    for (size_t i = 0; i < layers.size(); ++i) {
      std::visit([](const auto& a) { a.validate(); }, layers[i]);
      if (i > 0 && !(layer_alphabet(layers[i]) == layer_output(layers[i - 1])))
        throw input_error("chaining violation: layer " + std::to_string(i + 1) + " reads " +
                          to_string(layer_alphabet(layers[i])) + " but layer " + std::to_string(i) +
                          " writes " + to_string(layer_output(layers[i - 1])));
    }
  }
};

// ---------------------------------------------------------------------------
// Runs on finite trees

namespace detail {

inline void check_labels(const Alphabet& a, const FiniteTree& t) {
  if (t.label != kCut && !a.contains(t.label))
    throw input_error("label '" + t.label + "' is not in the alphabet " + to_string(a));
  for (const auto& c : t.children) check_labels(a, c);
}

inline void check_labels(const Alphabet& a, const RegularTree& r) {
  for (const auto& [c, rule] : r.rules)
    if (!a.contains(rule.label))
      throw input_error("label '" + rule.label + "' of class " + c + " is not in the alphabet " + to_string(a));
}

/// Transitions with states as indices, -1 for top.
struct IndexedDelta {
  struct Row {
    size_t state;
    Letter letter;
    std::vector<int> kids;
  };
  std::vector<Row> rows;
  std::vector<bool> important;

  explicit IndexedDelta(const UPrefixAutomaton& a) {
    a.validate();
    important.resize(a.states.size());
    for (size_t q = 0; q < a.states.size(); ++q) important[q] = a.important.count(a.states[q]) > 0;
    for (const auto& t : a.delta) {
      Row r{a.index_of(t.state), t.letter, {}};
      for (const auto& c : t.children) r.kids.push_back(c == kTop ? -1 : static_cast<int>(a.index_of(c)));
      rows.push_back(std::move(r));
    }
  }
};

}  // namespace detail

/// Per node and state, the maximal number of important nodes over runs with that state
/// at the node (none when no run exists).
struct RunTable {
  std::vector<std::optional<size_t>> best;
  std::vector<RunTable> children;
};

inline RunTable run_table(const UPrefixAutomaton& a, const FiniteTree& t) {
  detail::check_labels(a.alphabet, t);
  detail::IndexedDelta d(a);
  std::function<RunTable(const FiniteTree&)> go = [&](const FiniteTree& s) {
    RunTable out;
    for (const auto& c : s.children) out.children.push_back(go(c));
    out.best.assign(a.states.size(), std::nullopt);
    if (s.label == kCut) return out;
    for (const auto& row : d.rows) {
      if (row.kids.size() != s.children.size() || !letter_matches(row.letter, s.label)) continue;
      size_t total = d.important[row.state] ? 1 : 0;
      bool ok = true;
      for (size_t i = 0; i < row.kids.size() && ok; ++i) {
        if (row.kids[i] < 0) continue;
        const auto& b = out.children[i].best[static_cast<size_t>(row.kids[i])];
        if (!b) ok = false;
        else total += *b;
      }
      if (!ok) continue;
      auto& cur = out.best[row.state];
      if (!cur || *cur < total) cur = total;
    }
    return out;
  };
  return go(t);
}

struct RunStats {
  bool exists = false;
  std::optional<size_t> max_importance;
};

inline RunStats run_stats_finite(const UPrefixAutomaton& a, const FiniteTree& t, const std::string& q) {
  auto table = run_table(a, t);
  auto b = table.best[a.index_of(q)];
  return {b.has_value(), b};
}

/// A run as a map from every node to a state or kTop.
using Run = std::map<NodePath, std::string>;

/// The two run conditions: finitely many states (trivial here) and local consistency.
inline bool validate_run(const UPrefixAutomaton& a, const FiniteTree& t, const Run& run) {
  for (const auto& u : nodes_of(t)) {
    auto it = run.find(u);
    if (it == run.end()) return false;
    const auto& s = node_at(t, u);
    std::vector<std::string> kids;
    for (size_t i = 0; i < s.children.size(); ++i) {
      auto v = concat(u, {static_cast<int>(i + 1)});
      auto jt = run.find(v);
      if (jt == run.end()) return false;
      kids.push_back(jt->second);
    }
    if (it->second == kTop) {
      if (std::any_of(kids.begin(), kids.end(), [](const std::string& k) { return k != kTop; })) return false;
      continue;
    }
    bool found = std::any_of(a.delta.begin(), a.delta.end(), [&](const Transition& tr) {
      return tr.state == it->second && tr.children == kids && s.label != kCut && letter_matches(tr.letter, s.label);
    });
    if (!found) return false;
  }
  return run.size() == tree_size(t);
}

inline size_t run_importance(const UPrefixAutomaton& a, const Run& run) {
  size_t n = 0;
  for (const auto& [u, q] : run) n += a.important.count(q);
  return n;
}

/// A run with state q at the root and the maximal number of important nodes.
inline std::optional<Run> witness_run(const UPrefixAutomaton& a, const FiniteTree& t, const std::string& q) {
  auto table = run_table(a, t);
  detail::IndexedDelta d(a);
  size_t qi = a.index_of(q);
  if (!table.best[qi]) return std::nullopt;
  Run run;
  std::function<void(const FiniteTree&, const RunTable&, const NodePath&, int)> go =
      [&](const FiniteTree& s, const RunTable& tb, const NodePath& u, int state) {
        if (state < 0) {
          for (const auto& v : nodes_of(s)) run[concat(u, v)] = kTop;
          return;
        }
        run[u] = a.states[static_cast<size_t>(state)];
        size_t want = *tb.best[static_cast<size_t>(state)];
        for (const auto& row : d.rows) {
          if (row.state != static_cast<size_t>(state) || row.kids.size() != s.children.size() ||
              !letter_matches(row.letter, s.label))
            continue;
          size_t total = d.important[row.state] ? 1 : 0;
          bool ok = true;
          for (size_t i = 0; i < row.kids.size() && ok; ++i) {
            if (row.kids[i] < 0) continue;
            const auto& b = tb.children[i].best[static_cast<size_t>(row.kids[i])];
            if (!b) ok = false;
            else total += *b;
          }
          if (!ok || total != want) continue;
          for (size_t i = 0; i < row.kids.size(); ++i)
            go(s.children[i], tb.children[i], concat(u, {static_cast<int>(i + 1)}), row.kids[i]);
          return;
        }
        throw internal_error("run reconstruction failed");
      };
  go(t, table, {}, static_cast<int>(qi));
  return run;
}

/// Every run with state q at the root; throws a resource error past `limit` runs.
inline std::vector<Run> enumerate_runs(const UPrefixAutomaton& a, const FiniteTree& t, const std::string& q,
                                       size_t limit = 100000) {
  detail::check_labels(a.alphabet, t);
  detail::IndexedDelta d(a);
  std::function<std::vector<Run>(const FiniteTree&, int)> go = [&](const FiniteTree& s, int state) {
    std::vector<Run> out;
    if (state < 0) {
      Run r;
      for (const auto& v : nodes_of(s)) r[v] = kTop;
      out.push_back(std::move(r));
      return out;
    }
    if (s.label == kCut) return out;
    for (const auto& row : d.rows) {
      if (row.state != static_cast<size_t>(state) || row.kids.size() != s.children.size() ||
          !letter_matches(row.letter, s.label))
        continue;
      std::vector<Run> partial{Run{{NodePath{}, a.states[row.state]}}};
      for (size_t i = 0; i < row.kids.size() && !partial.empty(); ++i) {
        auto sub = go(s.children[i], row.kids[i]);
        std::vector<Run> next;
        for (const auto& p : partial)
          for (const auto& r : sub) {
            Run m = p;
            for (const auto& [v, st] : r) m[concat({static_cast<int>(i + 1)}, v)] = st;
            next.push_back(std::move(m));
            if (next.size() > limit) throw resource_error("more than " + std::to_string(limit) + " runs");
          }
        partial = std::move(next);
      }
      for (auto& p : partial) out.push_back(std::move(p));
      if (out.size() > limit) throw resource_error("more than " + std::to_string(limit) + " runs");
    }
    return out;
  };
  return go(t, static_cast<int>(a.index_of(q)));
}

// ---------------------------------------------------------------------------
// Application

namespace detail {

inline FiniteTree attach(const FiniteTree& t, const std::function<std::vector<int>(const NodePath&)>& f,
                         const NodePath& u = {}) {
  FiniteTree out(t.label == kCut ? t.label : out_letter(t.label, f(u)));
  for (size_t i = 0; i < t.children.size(); ++i)
    out.children.push_back(attach(t.children[i], f, concat(u, {static_cast<int>(i + 1)})));
  return out;
}

inline RegularTree attach(const RegularTree& r, const std::map<ClassId, std::vector<int>>& f) {
  RegularTree out = r;
  for (auto& [c, rule] : out.rules) rule.label = out_letter(rule.label, f.at(c));
  return out;
}

}  // namespace detail

/// Values f_u for every node, in preorder paths.
inline std::map<NodePath, std::vector<int>> uprefix_values_finite(const UPrefixAutomaton& a, const FiniteTree& t) {
  auto table = run_table(a, t);
  std::map<NodePath, std::vector<int>> out;
  std::function<void(const RunTable&, const NodePath&)> go = [&](const RunTable& tb, const NodePath& u) {
    std::vector<int> f;
    for (const auto& b : tb.best) f.push_back(b ? 1 : 0);
    out[u] = f;
    for (size_t i = 0; i < tb.children.size(); ++i) go(tb.children[i], concat(u, {static_cast<int>(i + 1)}));
  };
  go(table, {});
  return out;
}

inline FiniteTree apply_uprefix_finite(const UPrefixAutomaton& a, const FiniteTree& t) {
  auto f = uprefix_values_finite(a, t);
  return detail::attach(t, [&](const NodePath& u) { return f.at(u); });
}

/// Values f_c for every class: derivability of (class, state) and unbounded importance.
inline std::map<ClassId, std::vector<int>> uprefix_values_regular(const UPrefixAutomaton& a, const RegularTree& r) {
  validate_regular(r);
  detail::check_labels(a.alphabet, r);
  detail::IndexedDelta d(a);
  std::vector<ClassId> classes;
  std::map<ClassId, size_t> cid;
  for (const auto& [c, rule] : r.rules) {
    cid[c] = classes.size();
    classes.push_back(c);
  }
  size_t nq = a.states.size();
  CountingGrammar g;
  g.size = classes.size() * nq;
  for (size_t c = 0; c < classes.size(); ++c) {
    const auto& rule = r.rules.at(classes[c]);
    for (const auto& row : d.rows) {
      if (row.kids.size() != rule.children.size() || !letter_matches(row.letter, rule.label)) continue;
      std::vector<size_t> rhs;
      for (size_t i = 0; i < row.kids.size(); ++i)
        if (row.kids[i] >= 0) rhs.push_back(cid.at(rule.children[i]) * nq + static_cast<size_t>(row.kids[i]));
      g.add(c * nq + row.state, d.important[row.state], std::move(rhs));
    }
  }
  auto ok = g.productive();
  auto unb = g.unbounded();
  std::map<ClassId, std::vector<int>> out;
  for (size_t c = 0; c < classes.size(); ++c) {
    std::vector<int> f(nq);
    for (size_t q = 0; q < nq; ++q) f[q] = unb[c * nq + q] ? 2 : ok[c * nq + q] ? 1 : 0;
    out[classes[c]] = f;
  }
  return out;
}

inline RegularTree apply_uprefix_regular(const UPrefixAutomaton& a, const RegularTree& r) {
  return detail::attach(r, uprefix_values_regular(a, r));
}

enum class MsoEngine { Phenotype, Direct };

/// Truth of every sentence at every subtree. The phenotype engine computes one
/// bottom-up pass per sentence; the direct engine evaluates each subtree separately.
inline std::map<NodePath, std::vector<int>> mso_values_finite(const MSOAutomaton& m, const FiniteTree& t,
                                                              MsoEngine engine = MsoEngine::Phenotype) {
  m.validate();
  detail::check_labels(m.alphabet, t);
  std::map<NodePath, std::vector<int>> out;
  for (const auto& u : nodes_of(t)) out[u].assign(m.states.size(), 0);
  if (engine == MsoEngine::Direct) {
    for (size_t q = 0; q < m.sentences.size(); ++q)
      for (const auto& u : nodes_of(t)) out[u][q] = eval_direct(m.sentences[q], subtree(t, u)) ? 1 : 0;
    return out;
  }
  if (m.sentences.empty()) return out;
  auto algs = m.algebras();
  const size_t n = m.sentences.size();
  std::function<std::vector<PhtId>(const FiniteTree&, const NodePath&)> go = [&](const FiniteTree& s,
                                                                                 const NodePath& u) {
    std::vector<std::vector<PhtId>> kids;
    for (size_t i = 0; i < s.children.size(); ++i) kids.push_back(go(s.children[i], concat(u, {static_cast<int>(i + 1)})));
    std::vector<PhtId> res(n);
    std::vector<PhtId> ks(kids.size());
    for (size_t q = 0; q < n; ++q) {
      for (size_t i = 0; i < kids.size(); ++i) ks[i] = kids[i][q];
      res[q] = algs[q]->comp_mask(m.sentences[q].get(), s.label, 0, ks);
      out[u][q] = algs[q]->tv(m.sentences[q].get(), res[q]) ? 1 : 0;
    }
    return res;
  };
  go(t, {});
  return out;
}

inline FiniteTree apply_mso_finite(const MSOAutomaton& m, const FiniteTree& t,
                                   MsoEngine engine = MsoEngine::Phenotype) {
  auto f = mso_values_finite(m, t, engine);
  return detail::attach(t, [&](const NodePath& u) { return f.at(u); });
}

inline std::map<ClassId, std::vector<int>> mso_values_regular(const MSOAutomaton& m, const RegularTree& r) {
  m.validate();
  validate_regular(r);
  detail::check_labels(m.alphabet, r);
  std::map<ClassId, std::vector<int>> out;
  for (const auto& [c, rule] : r.rules) out[c].assign(m.states.size(), 0);
  for (const auto& f : m.sentences) check_finite_fragment(f);
  if (m.sentences.empty()) return out;
  auto algs = m.algebras();
  std::map<PhenotypeAlgebra*, std::unique_ptr<RegularPhenotypes>> rps;
  for (size_t q = 0; q < m.sentences.size(); ++q) {
    auto& rp = rps[algs[q]];
    if (!rp) rp = std::make_unique<RegularPhenotypes>(*algs[q], r);
    const auto& vals = rp->empty_valuation(m.sentences[q].get());
    for (size_t i = 0; i < rp->classes().size(); ++i)
      out[rp->classes()[i]][q] = algs[q]->tv(m.sentences[q].get(), vals[i]) ? 1 : 0;
  }
  return out;
}

inline RegularTree apply_mso_regular(const MSOAutomaton& m, const RegularTree& r) {
  return detail::attach(r, mso_values_regular(m, r));
}

inline FiniteTree apply_layer(const Layer& l, const FiniteTree& t, MsoEngine engine = MsoEngine::Phenotype) {
  if (auto* u = std::get_if<UPrefixAutomaton>(&l)) return apply_uprefix_finite(*u, t);
  return apply_mso_finite(std::get<MSOAutomaton>(l), t, engine);
}

inline RegularTree apply_layer(const Layer& l, const RegularTree& r) {
  if (auto* u = std::get_if<UPrefixAutomaton>(&l)) return apply_uprefix_regular(*u, r);
  return apply_mso_regular(std::get<MSOAutomaton>(l), r);
}

inline FiniteTree apply_nested(const NestedAutomaton& n, const FiniteTree& t,
                               MsoEngine engine = MsoEngine::Phenotype) {
  n.validate();
  FiniteTree cur = t;
  for (const auto& l : n.layers) cur = apply_layer(l, cur, engine);
  return cur;
}

inline RegularTree apply_nested(const NestedAutomaton& n, const RegularTree& r) {
  n.validate();
  RegularTree cur = r;
  for (const auto& l : n.layers) cur = apply_layer(l, cur);
  return cur;
}

// ---------------------------------------------------------------------------
// From automata back to logic

namespace detail {

/// Builds sentences over the input trees of a nested automaton. Level k is the tree
/// after k layers; label atoms of layer k are rewritten into statements about level 0.
class BackTranslation {
 public:
  BackTranslation(const NestedAutomaton& n, size_t max_arity) : n_(n), m_(max_arity) {
    ctx_.e1 = "#e1";
    ctx_.e2 = "#e2";
    ctx_.max_arity = max_arity;
    if (max_arity == 0) throw input_error("max arity must be at least 1");
  }

  /// The root of the processed tree carries the letter eta.
  Formula root_letter(const Letter& eta) {
    auto cs = letter_components(eta);
    if (cs.size() != n_.layers.size() + 1 || !n_.output().contains(eta))
      throw input_error("'" + eta + "' is not an output letter of the automaton");
    std::string r = fresh_("R");
    std::vector<Formula> parts{f_existsfin(r, f_and(f_root(r, ctx_, fresh_), f_label(cs[0], r)))};
    for (size_t j = 0; j < n_.layers.size(); ++j) parts.push_back(digits_sentence(j, cs[j + 1]));
    return f_and_all(parts, nullptr);
  }

 private:
  /// Every node of z carries, at `level`, a letter matching `pattern`.
  Formula label_at(size_t level, const Letter& pattern, const std::string& z) {
    auto cs = letter_components(pattern);
    if (cs.size() != level + 1) return f_empty(z, ctx_);
    std::vector<Formula> parts;
    if (cs[0] != "*") parts.push_back(f_label(cs[0], z));
    for (size_t j = 1; j < cs.size(); ++j) {
      if (cs[j] == "*") continue;
      if (cs[j].size() != layer_states(n_.layers[j - 1]).size()) return f_empty(z, ctx_);
      parts.push_back(relativize(digits_sentence(j - 1, cs[j]), m_, ctx_, z));
    }
    return f_and_all(parts, f_true(z));
  }

  /// Layer j writes digits h (with '?' for any) at the root.
  Formula digits_sentence(size_t j, const std::string& h) {
    auto key = std::make_pair(j, h);
    auto it = digits_memo_.find(key);
    if (it != digits_memo_.end()) return it->second;
    std::vector<Formula> parts;
    for (size_t q = 0; q < h.size(); ++q) {
      if (h[q] == '?') continue;
      if (h[q] < '0' || h[q] > '2') throw input_error("bad digit in '" + h + "'");
      parts.push_back(state_value(j, q, h[q] - '0'));
    }
    return digits_memo_[key] = f_and_all(parts, f_tt(fresh_));
  }

  Formula state_value(size_t j, size_t q, int v) {
    const Layer& l = n_.layers[j];
    if (const auto* m = std::get_if<MSOAutomaton>(&l)) {
      if (v == 2) return f_ff(fresh_);
      Formula s = lift(j, m->sentences[q]);
      return v == 1 ? s : f_not(s);
    }
    const auto& a = std::get<UPrefixAutomaton>(l);
    Formula run = run_exists(j, a, q, false);
    Formula unb = run_exists(j, a, q, true);
    if (v == 0) return f_not(run);
    if (v == 1) return f_and(run, f_not(unb));
    return unb;
  }

  /// A sentence read at level j, restated over level 0.
  Formula lift(size_t j, const Formula& s) {
    if (j == 0) return s;
    return substitute_labels(s, [&](const Letter& a, const std::string& z) { return label_at(j, a, z); });
  }

  /// Some run of layer j has state q at the root; with `unbounded`, such runs exist with
  /// arbitrarily many important nodes.
  Formula run_exists(size_t j, const UPrefixAutomaton& a, size_t q, bool unbounded) {
    size_t nq = a.states.size();
    std::vector<std::string> xs;
    for (size_t p = 0; p < nq; ++p) xs.push_back(fresh_("X"));
    auto in_any = [&](const std::string& s) {
      std::vector<Formula> ds;
      for (const auto& x : xs) ds.push_back(f_sub(s, x));
      return f_or_all(ds, f_false(s));
    };
    auto index = [&](const std::string& st) { return st == kTop ? -1 : static_cast<int>(a.index_of(st)); };
    std::vector<Formula> body;
    // at most one state per node
    {
      std::string s = fresh_("S");
      std::vector<Formula> cs;
      for (size_t p = 0; p < nq; ++p)
        for (size_t p2 = p + 1; p2 < nq; ++p2) cs.push_back(f_not(f_and(f_sub(s, xs[p]), f_sub(s, xs[p2]))));
      if (!cs.empty())
        body.push_back(f_forallfin(s, f_implies(f_sing(s, ctx_, fresh_), f_and_all(cs, nullptr))));
    }
    // local consistency with a transition
    {
      std::string s = fresh_("S");
      std::vector<Formula> alts;
      for (const auto& t : a.delta) {
        size_t r = t.children.size();
        if (r > m_) continue;
        std::vector<Formula> cs{f_sub(s, xs[a.index_of(t.state)]), label_at(j, t.letter, s)};
        if (r >= 1) {
          std::string c = fresh_("C");
          cs.push_back(f_existsfin(c, f_child(s, static_cast<int>(r), c)));
        }
        if (r < m_) {
          std::string c = fresh_("C");
          cs.push_back(f_not(f_existsfin(c, f_child(s, static_cast<int>(r + 1), c))));
        }
        for (size_t i = 0; i < r; ++i) {
          std::string c = fresh_("C");
          int k = index(t.children[i]);
          Formula st = k < 0 ? f_not(in_any(c)) : f_sub(c, xs[static_cast<size_t>(k)]);
          cs.push_back(f_existsfin(c, f_and(f_child(s, static_cast<int>(i + 1), c), st)));
        }
        alts.push_back(f_and_all(cs, nullptr));
      }
      Formula rhs = f_or_all(alts, f_false(s));
      body.push_back(f_forallfin(s, f_implies(f_and(f_sing(s, ctx_, fresh_), in_any(s)), rhs)));
    }
    // top below top
    {
      std::string p = fresh_("P"), c = fresh_("C");
      body.push_back(f_forallfin(
          p, f_forallfin(c, f_implies(f_and(f_child_any(p, c, m_), in_any(c)), in_any(p)))));
    }
    // state q at the root
    {
      std::string r = fresh_("R");
      body.push_back(f_existsfin(r, f_and(f_root(r, ctx_, fresh_), f_sub(r, xs[q]))));
    }
    std::string f;
    if (unbounded) {
      // F is exactly the set of important nodes
      f = fresh_("F");
      std::vector<std::string> imp;
      for (size_t p = 0; p < nq; ++p)
        if (a.important.count(a.states[p])) imp.push_back(xs[p]);
      if (imp.empty()) {
        body.push_back(f_empty(f, ctx_));
      } else {
        for (const auto& x : imp) body.push_back(f_sub(x, f));
        std::string s = fresh_("S");
        std::vector<Formula> ds;
        for (const auto& x : imp) ds.push_back(f_sub(s, x));
        body.push_back(
            f_forallfin(s, f_implies(f_and(f_sing(s, ctx_, fresh_), f_sub(s, f)), f_or_all(ds, nullptr))));
      }
    }
    Formula out = f_and_all(body, nullptr);
    for (size_t p = nq; p-- > 0;) out = f_existsfin(xs[p], out);
    return unbounded ? f_u(f, out) : out;
  }

  const NestedAutomaton& n_;
  size_t m_;
  DerivedContext ctx_;
  FreshNames fresh_;
  std::map<std::pair<size_t, std::string>, Formula> digits_memo_;
};

}  // namespace detail

/// A sentence true on exactly those trees (with arity at most max_arity) whose
/// processed root letter is eta. Run assignments are encoded with one finite set
/// variable per state; the U binder ranges over the set of important nodes.
inline Formula automaton_to_formula(const NestedAutomaton& n, const Letter& eta, size_t max_arity) {
  n.validate();
  detail::BackTranslation bt(n, max_arity);
  Formula f = rename_apart(bt.root_letter(eta));
  check_wf(f);
  return f;
}

}  // namespace msou

namespace msou {

// ---------------------------------------------------------------------------
// Text format
//
//   layer uprefix            layer mso
//   alphabet a b             states q1 q2
//   states p q               sentence q1 = exists Z. a(Z)
//   important q              sentence q2 = ...
//   trans p a -> q T         end
//   end
//
// Only the first layer needs an alphabet (and optional `widths`); later layers read
// the output alphabet of the layer before them.

inline std::string to_string(const NestedAutomaton& n) {
  std::ostringstream os;
  for (size_t i = 0; i < n.layers.size(); ++i) {
    const Layer& l = n.layers[i];
    bool up = std::holds_alternative<UPrefixAutomaton>(l);
    os << "layer " << (up ? "uprefix" : "mso") << "\n";
    if (i == 0) {
      const auto& a = layer_alphabet(l);
      os << "alphabet";
      for (const auto& b : a.base) os << " " << b;
      os << "\n";
      if (!a.widths.empty()) {
        os << "widths";
        for (size_t w : a.widths) os << " " << w;
        os << "\n";
      }
    }
    os << "states";
    for (const auto& q : layer_states(l)) os << " " << q;
    os << "\n";
    if (up) {
      const auto& a = std::get<UPrefixAutomaton>(l);
      if (!a.important.empty()) {
        os << "important";
        for (const auto& q : a.states)
          if (a.important.count(q)) os << " " << q;
        os << "\n";
      }
      for (const auto& t : a.delta) {
        os << "trans " << t.state << " " << t.letter << " ->";
        for (const auto& c : t.children) os << " " << c;
        os << "\n";
      }
    } else {
      const auto& m = std::get<MSOAutomaton>(l);
      for (size_t q = 0; q < m.states.size(); ++q) os << "sentence " << m.states[q] << " = " << to_string(m.sentences[q]) << "\n";
    }
    os << "end\n";
  }
  return os.str();
}

inline NestedAutomaton parse_automaton(const std::string& text) {
  NestedAutomaton n;
  std::istringstream in(text);
  std::string line;
  size_t lineno = 0;
  std::optional<Layer> cur;
  std::optional<Alphabet> alpha;
  bool in_layer = false;
  auto fail = [&](const std::string& msg) { throw input_error("automaton line " + std::to_string(lineno) + ": " + msg); };
  auto words = [](const std::string& s) {
    std::istringstream ws(s);
    std::vector<std::string> out;
    for (std::string w; ws >> w;) out.push_back(w);
    return out;
  };
  while (std::getline(in, line)) {
    ++lineno;
    auto cpos = line.find("//");
    if (cpos != std::string::npos) line = line.substr(0, cpos);
    auto w = words(line);
    if (w.empty()) continue;
    const std::string& kw = w[0];
    if (kw == "layer") {
      if (in_layer) fail("missing 'end'");
      if (w.size() != 2 || (w[1] != "uprefix" && w[1] != "mso")) fail("expected 'layer uprefix' or 'layer mso'");
      if (w[1] == "uprefix") cur = UPrefixAutomaton{};
      else cur = MSOAutomaton{};
      alpha.reset();
      in_layer = true;
      continue;
    }
    if (!in_layer) fail("'" + kw + "' outside a layer");
    auto& l = *cur;
    if (kw == "alphabet") {
      alpha = Alphabet(std::vector<Letter>(w.begin() + 1, w.end()));
      for (const auto& b : alpha->base) check_user_letter(b);
    } else if (kw == "widths") {
      if (!alpha) fail("'widths' before 'alphabet'");
      for (size_t i = 1; i < w.size(); ++i) {
        try {
          alpha->widths.push_back(std::stoul(w[i]));
        } catch (const std::exception&) {
          fail("bad width '" + w[i] + "'");
        }
      }
    } else if (kw == "states") {
      std::visit([&](auto& a) { a.states.assign(w.begin() + 1, w.end()); }, l);
    } else if (kw == "important") {
      auto* a = std::get_if<UPrefixAutomaton>(&l);
      if (!a) fail("'important' in an MSO layer");
      a->important.insert(w.begin() + 1, w.end());
    } else if (kw == "trans") {
      auto* a = std::get_if<UPrefixAutomaton>(&l);
      if (!a) fail("'trans' in an MSO layer");
      if (w.size() < 4 || w[3] != "->") fail("expected 'trans STATE LETTER -> CHILDREN'");
      a->delta.push_back({w[1], w[2], std::vector<std::string>(w.begin() + 4, w.end())});
    } else if (kw == "sentence") {
      auto* m = std::get_if<MSOAutomaton>(&l);
      if (!m) fail("'sentence' in a U-prefix layer");
      auto eq = line.find('=');
      if (w.size() < 3 || w[2] != "=" || eq == std::string::npos) fail("expected 'sentence STATE = FORMULA'");
      if (m->sentences.size() >= m->states.size() || m->states[m->sentences.size()] != w[1])
        fail("sentences must follow the order of 'states'");
      try {
        m->sentences.push_back(parse_formula(line.substr(eq + 1)));
      } catch (const Error& e) {
        fail(e.what());
      }
    } else if (kw == "end") {
      Alphabet a;
      if (alpha) a = *alpha;
      else if (!n.layers.empty()) a = layer_output(n.layers.back());
      else fail("the first layer needs an alphabet");
      if (!n.layers.empty() && !(a == layer_output(n.layers.back())))
        fail("alphabet does not match the output of the previous layer");
      std::visit([&](auto& x) { x.alphabet = a; }, l);
      n.layers.push_back(std::move(l));
      in_layer = false;
    } else {
      fail("unknown keyword '" + kw + "'");
    }
  }
  if (in_layer) throw input_error("automaton: missing 'end'");
  n.validate();
  return n;
}

/// Graphviz rendering of a class graph.
inline std::string to_dot(const RegularTree& r) {
  std::ostringstream os;
  os << "digraph regular {\n";
  for (const auto& [c, rule] : r.rules) {
    os << "  \"" << c << "\" [label=\"" << c << ": " << rule.label << "\"" << (c == r.root ? ", shape=box" : "")
       << "];\n";
    for (size_t i = 0; i < rule.children.size(); ++i)
      os << "  \"" << c << "\" -> \"" << rule.children[i] << "\" [label=\"" << i + 1 << "\"];\n";
  }
  os << "}\n";
  return os.str();
}

/// Graphviz rendering of a finite tree, optionally annotated by a run.
inline std::string to_dot(const FiniteTree& t, const Run* run = nullptr) {
  std::ostringstream os;
  os << "digraph tree {\n";
  for (const auto& u : nodes_of(t)) {
    std::string id = path_to_string(u);
    os << "  \"" << id << "\" [label=\"" << node_at(t, u).label;
    if (run && run->count(u)) os << " / " << run->at(u);
    os << "\"];\n";
    if (!u.empty()) os << "  \"" << path_to_string(NodePath(u.begin(), u.end() - 1)) << "\" -> \"" << id << "\";\n";
  }
  os << "}\n";
  return os.str();
}

}  // namespace msou

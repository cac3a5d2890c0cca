#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "msou/error.hpp"
#include "msou/grammar.hpp"
#include "msou/logic.hpp"
#include "msou/tree.hpp"

namespace msou {

/// Phenotype ids are interned per (non-negation) subformula.
using PhtId = int;

namespace pht {
inline constexpr PhtId kTT = 0;
inline constexpr PhtId kFF = 1;
// Codes of the child atom.
inline constexpr PhtId kChildTT = 0;
inline constexpr PhtId kChildEmpty = 1;
inline constexpr PhtId kChildRoot = 2;
inline constexpr PhtId kChildFF = 3;
}  // namespace pht

inline constexpr double kDefaultDomainCap = 1 << 20;

/// The phenotype algebra of one formula: interning, Comp, tv, domains and the
/// direct and compositional evaluators on finite trees.
class PhenotypeAlgebra {
 public:
  using Node = const FormulaNode*;

  explicit PhenotypeAlgebra(Formula phi, double domain_cap = kDefaultDomainCap)
      : phi_(std::move(phi)), domain_cap_(domain_cap) {
    register_node(phi_);
  }

  const Formula& formula() const { return phi_; }
  Node root() const { return phi_.get(); }
  const Formula& shared(Node f) const { return nodes_.at(f).formula; }

  /// Negations share the table of their body.
  Node table_node(Node f) const {
    while (f->kind == FKind::Not) f = f->a.get();
    return f;
  }

  // -- interning ------------------------------------------------------------

  PhtId intern(Node f, const std::vector<int>& key) {
    Table& t = table(f);
    auto it = t.index.find(key);
    if (it != t.index.end()) return it->second;
    PhtId id = static_cast<PhtId>(t.values.size());
    t.values.push_back(key);
    t.index.emplace(key, id);
    return id;
  }
  const std::vector<int>& key(Node f, PhtId id) const { return ctable(f).values.at(static_cast<size_t>(id)); }
  size_t interned(Node f) const { return ctable(f).values.size(); }

  PhtId make_pair(Node f, PhtId p, PhtId q) { return intern(f, {p, q}); }
  std::pair<PhtId, PhtId> pair_of(Node f, PhtId id) const {
    const auto& k = key(f, id);
    return {k[0], k[1]};
  }
  PhtId make_set(Node f, std::vector<int> members) {
    std::sort(members.begin(), members.end());
    members.erase(std::unique(members.begin(), members.end()), members.end());
    return intern(f, members);
  }
  std::vector<int> set_of(Node f, PhtId id) const { return key(f, id); }
  PhtId make_upair(Node f, std::vector<int> a, std::vector<int> b) {
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
    std::sort(b.begin(), b.end());
    b.erase(std::unique(b.begin(), b.end()), b.end());
    std::vector<int> k = a;
    k.push_back(-1);
    k.insert(k.end(), b.begin(), b.end());
    return intern(f, k);
  }
  std::pair<std::vector<int>, std::vector<int>> upair_of(Node f, PhtId id) const {
    const auto& k = key(f, id);
    auto sep = std::find(k.begin(), k.end(), -1);
    return {std::vector<int>(k.begin(), sep), std::vector<int>(sep + 1, k.end())};
  }

  // -- text -----------------------------------------------------------------

  std::string show(Node f, PhtId id) const {
    f = table_node(f);
    switch (f->kind) {
      case FKind::Label:
      case FKind::Sub:
        return id == pht::kTT ? "tt" : "ff";
      case FKind::Child: {
        static const char* names[] = {"tt", "empty", "root", "ff"};
        return names[id];
      }
      case FKind::And: {
        auto [p, q] = pair_of(f, id);
        return "(" + show(f->a.get(), p) + ", " + show(f->b.get(), q) + ")";
      }
      case FKind::Exists:
      case FKind::ExistsFin:
        return show_set(f->a.get(), set_of(f, id));
      case FKind::U: {
        auto [a, b] = upair_of(f, id);
        return "(" + show_set(f->a.get(), a) + ", " + show_set(f->a.get(), b) + ")";
      }
      default:
        return "?";
    }
  }
  std::string show(PhtId id) const { return show(root(), id); }

  // -- tv ---------------------------------------------------------------------

  bool tv(Node f, PhtId id) const {
    switch (f->kind) {
      case FKind::Label:
      case FKind::Sub:
        return id == pht::kTT;
      case FKind::Child:
        return id == pht::kChildTT;
      case FKind::Not:
        return !tv(f->a.get(), id);
      default:
        break;
    }
    auto it = tv_memo_.find({f, id});
    if (it != tv_memo_.end()) return it->second;
    bool r = false;
    if (f->kind == FKind::And) {
      auto [p, q] = pair_of(f, id);
      r = tv(f->a.get(), p) && tv(f->b.get(), q);
    } else {
      auto s = f->kind == FKind::U ? upair_of(f, id).second : set_of(f, id);
      r = std::any_of(s.begin(), s.end(), [&](int x) { return tv(f->a.get(), x); });
    }
    tv_memo_.emplace(std::make_pair(f, id), r);
    return r;
  }
  bool tv(PhtId id) const { return tv(root(), id); }

  // -- Comp -------------------------------------------------------------------

  /// Comp_{a,r,f}(R, kids). R holds variable names; only free variables of f matter.
  PhtId comp(Node f, const Letter& a, const std::set<std::string>& R, const std::vector<PhtId>& kids) {
    return comp_mask(f, a, mask_of(R), kids);
  }

  uint64_t var_bit(const std::string& x) const {
    auto it = var_index_.find(x);
    return it == var_index_.end() ? 0 : uint64_t{1} << it->second;
  }
  uint64_t mask_of(const std::set<std::string>& R) const {
    uint64_t m = 0;
    for (const auto& x : R) m |= var_bit(x);
    return m;
  }
  uint64_t free_mask(Node f) const { return nodes_.at(f).free_mask; }

  PhtId comp_mask(Node f, const Letter& a, uint64_t R, const std::vector<PhtId>& kids) {
    f = table_node(f);
    R &= free_mask(f);
    auto it = comp_memo_.find(CompRef{f, a, R, kids});
    if (it != comp_memo_.end()) return it->second;
    PhtId res = comp_uncached(f, a, R, kids);
    comp_memo_.emplace(CompKey{f, a, R, kids}, res);
    return res;
  }

  // -- domains ----------------------------------------------------------------

  /// |Pht(f)| as a floating value (towers overflow to infinity).
  double domain_size(Node f) const {
    f = table_node(f);
    switch (f->kind) {
      case FKind::Label:
      case FKind::Sub:
        return 2;
      case FKind::Child:
        return 4;
      case FKind::And:
        return domain_size(f->a.get()) * domain_size(f->b.get());
      case FKind::Exists:
      case FKind::ExistsFin:
        return std::pow(2.0, domain_size(f->a.get()));
      case FKind::U:
        return std::pow(2.0, 2 * domain_size(f->a.get()));
      default:
        return 0;
    }
  }

  /// All phenotypes of Pht(f); fails when the domain exceeds the cap.
  const std::vector<PhtId>& domain(Node f) {
    f = table_node(f);
    double n = domain_size(f);
    if (!(n <= domain_cap_))
      throw resource_error("phenotype domain of '" + to_string(shared(f)) + "' has " + size_text(n) +
                           " elements, cap is " + size_text(domain_cap_));
    Table& t = table(f);
    if (t.domain_done) return t.domain;
    std::vector<PhtId> out;
    switch (f->kind) {
      case FKind::Label:
      case FKind::Sub:
        out = {pht::kTT, pht::kFF};
        break;
      case FKind::Child:
        out = {0, 1, 2, 3};
        break;
      case FKind::And: {
        auto da = domain(f->a.get());
        auto db = domain(f->b.get());
        for (int p : da)
          for (int q : db) out.push_back(make_pair(f, p, q));
        break;
      }
      case FKind::Exists:
      case FKind::ExistsFin: {
        auto d = domain(f->a.get());
        for (uint64_t m = 0; m < (uint64_t{1} << d.size()); ++m) out.push_back(make_set(f, subset(d, m)));
        break;
      }
      case FKind::U: {
        auto d = domain(f->a.get());
        for (uint64_t m = 0; m < (uint64_t{1} << d.size()); ++m)
          for (uint64_t k = 0; k < (uint64_t{1} << d.size()); ++k) out.push_back(make_upair(f, subset(d, m), subset(d, k)));
        break;
      }
      default:
        break;
    }
    Table& t2 = table(f);
    t2.domain = std::move(out);
    t2.domain_done = true;
    return t2.domain;
  }

  /// Structural validity, including B subset of A for U pairs.
  bool valid(Node f, PhtId id) const {
    f = table_node(f);
    if (id < 0 || static_cast<size_t>(id) >= interned(f)) {
      if (f->kind == FKind::Label || f->kind == FKind::Sub) return id == 0 || id == 1;
      if (f->kind == FKind::Child) return id >= 0 && id < 4;
      return false;
    }
    switch (f->kind) {
      case FKind::And: {
        auto [p, q] = pair_of(f, id);
        return valid(f->a.get(), p) && valid(f->b.get(), q);
      }
      case FKind::U: {
        auto [a, b] = upair_of(f, id);
        return std::includes(a.begin(), a.end(), b.begin(), b.end());
      }
      default:
        return true;
    }
  }

  // -- evaluators on finite trees --------------------------------------------

  /// Phenotype by the literal definition, quantifiers enumerating node subsets.
  PhtId direct(const FiniteTree& t, const Valuation& v) {
    DirectPht d(*this, t);
    return d.eval(root(), v);
  }
  PhtId direct_at(Node f, const FiniteTree& t, const Valuation& v) {
    DirectPht d(*this, t);
    return d.eval(f, v);
  }

  /// Bottom-up fold of Comp, passing R = {X | u in nu(X)} at every node u.
  PhtId compositional(Node f, const FiniteTree& t, const Valuation& v) {
    TreeIndex idx(t);
    std::vector<uint64_t> rmask(idx.size(), 0);
    for (const auto& [x, s] : v) {
      uint64_t b = var_bit(x);
      for (const auto& u : s) {
        auto it = idx.id.find(u);
        if (it == idx.id.end()) throw input_error("valuation contains non-node " + path_to_string(u));
        rmask[static_cast<size_t>(it->second)] |= b;
      }
    }
    for (const auto& x : f->free)
      if (!v.count(x)) throw input_error("unbound free variable '" + x + "'");
    std::vector<PhtId> res(idx.size());
    for (size_t i = idx.size(); i-- > 0;) {
      std::vector<PhtId> kids;
      for (int c : idx.children[i]) kids.push_back(res[static_cast<size_t>(c)]);
      res[i] = comp_mask(f, idx.labels[i], rmask[i], kids);
    }
    return res[0];
  }
  PhtId compositional(const FiniteTree& t, const Valuation& v) { return compositional(root(), t, v); }

  /// Direct evaluator with memoization over (subformula, masks of its free variables).
  class DirectPht {
   public:
    DirectPht(PhenotypeAlgebra& alg, const FiniteTree& t) : alg_(alg), idx_(t) {
      if (idx_.size() > 64) throw resource_error("tree too large for direct evaluation");
    }
    PhtId eval(Node f, const Valuation& v) {
      std::map<std::string, uint64_t> env;
      for (const auto& [x, s] : v) env[x] = idx_.mask_of(s);
      for (const auto& x : f->free)
        if (!env.count(x)) throw input_error("unbound free variable '" + x + "'");
      return go(f, env);
    }
    PhtId eval_masks(Node f, std::map<std::string, uint64_t>& env) { return go(f, env); }
    const TreeIndex& index() const { return idx_; }

   private:
    static bool singleton(uint64_t m) { return m != 0 && (m & (m - 1)) == 0; }

    PhtId go(Node f, std::map<std::string, uint64_t>& env) {
      switch (f->kind) {
        case FKind::Label: {
          uint64_t m = env.at(f->x);
          for (size_t i = 0; i < idx_.size(); ++i)
            if ((m >> i & 1) && !letter_matches(f->letter, idx_.labels[i])) return pht::kFF;
          return pht::kTT;
        }
        case FKind::Sub:
          return (env.at(f->x) & ~env.at(f->y)) == 0 ? pht::kTT : pht::kFF;
        case FKind::Child: {
          uint64_t mx = env.at(f->x), my = env.at(f->y);
          if (singleton(mx) && singleton(my)) {
            const auto& cs = idx_.children[static_cast<size_t>(__builtin_ctzll(mx))];
            if (static_cast<size_t>(f->index) <= cs.size() &&
                cs[static_cast<size_t>(f->index - 1)] == __builtin_ctzll(my))
              return pht::kChildTT;
          }
          if (mx == 0 && my == 0) return pht::kChildEmpty;
          if (mx == 0 && my == 1) return pht::kChildRoot;  // node 0 is the root
          return pht::kChildFF;
        }
        case FKind::And:
          return alg_.make_pair(f, go(f->a.get(), env), go(f->b.get(), env));
        case FKind::Not:
          return go(f->a.get(), env);
        default:
          break;
      }
      std::vector<uint64_t> key;
      for (const auto& x : f->free) key.push_back(env.at(x));
      auto& memo = memo_[f];
      if (auto it = memo.find(key); it != memo.end()) return it->second;
      if (idx_.size() > kDirectNodeCap)
        throw resource_error("direct phenotype evaluation is capped at " + std::to_string(kDirectNodeCap) + " nodes");
      std::optional<uint64_t> saved;
      if (env.count(f->x)) saved = env[f->x];
      std::vector<int> members;
      for (uint64_t m = 0; m < (uint64_t{1} << idx_.size()); ++m) {
        env[f->x] = m;
        members.push_back(go(f->a.get(), env));
      }
      if (saved) env[f->x] = *saved;
      else env.erase(f->x);
      // On a finite tree no phenotype is achieved by arbitrarily large sets.
      PhtId res = f->kind == FKind::U ? alg_.make_upair(f, members, {}) : alg_.make_set(f, members);
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

    PhenotypeAlgebra& alg_;
    TreeIndex idx_;
    std::unordered_map<Node, std::unordered_map<std::vector<uint64_t>, PhtId, KeyHash>> memo_;
  };

  // -- enumeration helpers ------------------------------------------------------

  /// Calls fn for every tuple in the product of the given member lists.
  static void for_each_tuple(const std::vector<std::vector<int>>& lists,
                             const std::function<void(const std::vector<int>&)>& fn) {
    for (const auto& l : lists)
      if (l.empty()) return;
    std::vector<size_t> pos(lists.size(), 0);
    std::vector<int> cur(lists.size());
    for (;;) {
      for (size_t i = 0; i < lists.size(); ++i) cur[i] = lists[i][pos[i]];
      fn(cur);
      size_t i = 0;
      while (i < lists.size() && ++pos[i] == lists[i].size()) pos[i++] = 0;
      if (i == lists.size()) return;
    }
  }

 private:
  struct Table {
    std::vector<std::vector<int>> values;
    std::map<std::vector<int>, PhtId> index;
    std::vector<PhtId> domain;
    bool domain_done = false;
  };
  struct NodeInfo {
    Formula formula;
    uint64_t free_mask = 0;
  };
  struct CompKey {
    Node f;
    Letter a;
    uint64_t R;
    std::vector<PhtId> kids;
  };
  // lookups go through a borrowed view so hits allocate nothing
  struct CompRef {
    Node f;
    const Letter& a;
    uint64_t R;
    const std::vector<PhtId>& kids;
  };
  struct CompKeyHash {
    using is_transparent = void;
    static size_t mix(Node f, const Letter& a, uint64_t R, const std::vector<PhtId>& kids) {
      size_t h = std::hash<const void*>{}(f) ^ (std::hash<std::string>{}(a) * 31) ^ (R * 1000003u);
      for (auto x : kids) h = h * 1315423911u + static_cast<size_t>(x);
      return h;
    }
    size_t operator()(const CompKey& k) const { return mix(k.f, k.a, k.R, k.kids); }
    size_t operator()(const CompRef& k) const { return mix(k.f, k.a, k.R, k.kids); }
  };
  struct CompKeyEq {
    using is_transparent = void;
    template <class A, class B>
    bool operator()(const A& x, const B& y) const {
      return x.f == y.f && x.R == y.R && x.kids == y.kids && x.a == y.a;
    }
  };
  struct TvKeyHash {
    size_t operator()(const std::pair<Node, PhtId>& k) const {
      return std::hash<const void*>{}(k.first) * 31 + static_cast<size_t>(k.second);
    }
  };

  static std::string size_text(double n) {
    if (std::isinf(n)) return "more than 2^1023";
    char buf[64];
    snprintf(buf, sizeof buf, "%.0f", n);
    return buf;
  }

  static std::vector<int> subset(const std::vector<PhtId>& d, uint64_t m) {
    std::vector<int> s;
    for (size_t i = 0; i < d.size(); ++i)
      if (m >> i & 1) s.push_back(d[i]);
    return s;
  }

  std::string show_set(Node body, const std::vector<int>& s) const {
    std::string out = "{";
    for (size_t i = 0; i < s.size(); ++i) out += (i ? ", " : "") + show(body, s[i]);
    return out + "}";
  }

  void register_node(const Formula& f) {
    for (const auto& x : all_variables(f))
      if (!var_index_.count(x)) {
        if (var_index_.size() >= 64) throw resource_error("more than 64 variables in one formula");
        size_t k = var_index_.size();
        var_index_[x] = k;
      }
    register_rec(f);
  }
  void register_rec(const Formula& f) {
    if (nodes_.count(f.get())) return;
    NodeInfo info{f, 0};
    for (const auto& x : f->free) info.free_mask |= uint64_t{1} << var_index_.at(x);
    nodes_.emplace(f.get(), info);
    if (f->a) register_rec(f->a);
    if (f->b) register_rec(f->b);
  }

  Table& table(Node f) { return tables_[table_node(f)]; }
  const Table& ctable(Node f) const {
    static const Table empty;
    auto it = tables_.find(table_node(f));
    return it == tables_.end() ? empty : it->second;
  }

  PhtId comp_uncached(Node f, const Letter& a, uint64_t R, const std::vector<PhtId>& kids) {
    switch (f->kind) {
      case FKind::Label: {
        bool ok = std::all_of(kids.begin(), kids.end(), [](PhtId k) { return k == pht::kTT; });
        return ok && (letter_matches(f->letter, a) || !(R & var_bit(f->x))) ? pht::kTT : pht::kFF;
      }
      case FKind::Sub: {
        bool ok = std::all_of(kids.begin(), kids.end(), [](PhtId k) { return k == pht::kTT; });
        bool local = !(R & var_bit(f->x)) || (R & var_bit(f->y));
        return ok && local ? pht::kTT : pht::kFF;
      }
      case FKind::Child: {
        bool xin = R & var_bit(f->x), yin = R & var_bit(f->y);
        size_t r = kids.size();
        auto others_empty = [&](size_t j) {
          for (size_t i = 0; i < r; ++i)
            if (i != j && kids[i] != pht::kChildEmpty) return false;
          return true;
        };
        if (!xin && !yin)
          for (size_t j = 0; j < r; ++j)
            if (kids[j] == pht::kChildTT && others_empty(j)) return pht::kChildTT;
        size_t k = static_cast<size_t>(f->index);
        if (xin && !yin && k <= r && kids[k - 1] == pht::kChildRoot && others_empty(k - 1)) return pht::kChildTT;
        bool all_empty = others_empty(r);
        if (all_empty && !xin && !yin) return pht::kChildEmpty;
        if (all_empty && !xin && yin) return pht::kChildRoot;
        return pht::kChildFF;
      }
      case FKind::And: {
        std::vector<PhtId> ka, kb;
        for (PhtId k : kids) {
          auto [p, q] = pair_of(f, k);
          ka.push_back(p);
          kb.push_back(q);
        }
        PhtId p = comp_mask(f->a.get(), a, R, ka);
        PhtId q = comp_mask(f->b.get(), a, R, kb);
        return make_pair(f, p, q);
      }
      case FKind::Exists:
      case FKind::ExistsFin: {
        std::vector<std::vector<int>> lists;
        for (PhtId k : kids) lists.push_back(set_of(f, k));
        std::vector<int> out;
        uint64_t xb = var_bit(f->x);
        for_each_tuple(lists, [&](const std::vector<int>& s) {
          out.push_back(comp_mask(f->a.get(), a, R | xb, s));
          out.push_back(comp_mask(f->a.get(), a, R & ~xb, s));
        });
        return make_set(f, out);
      }
      case FKind::U: {
        std::vector<std::vector<int>> as, bs;
        for (PhtId k : kids) {
          auto [ka, kb] = upair_of(f, k);
          as.push_back(ka);
          bs.push_back(kb);
        }
        uint64_t xb = var_bit(f->x);
        std::vector<int> outa, outb;
        auto both = [&](std::vector<int>& out) {
          return [&, this](const std::vector<int>& s) {
            out.push_back(comp_mask(f->a.get(), a, R | xb, s));
            out.push_back(comp_mask(f->a.get(), a, R & ~xb, s));
          };
        };
        for_each_tuple(as, both(outa));
        for (size_t j = 0; j < kids.size(); ++j) {
          auto lists = as;
          lists[j] = bs[j];
          for_each_tuple(lists, both(outb));
        }
        return make_upair(f, outa, outb);
      }
      default:
        throw internal_error("comp on negation");
    }
  }

  Formula phi_;
  double domain_cap_;
  std::map<std::string, size_t> var_index_;
  std::unordered_map<Node, NodeInfo> nodes_;
  std::unordered_map<Node, Table> tables_;
  std::unordered_map<CompKey, PhtId, CompKeyHash, CompKeyEq> comp_memo_;
  mutable std::unordered_map<std::pair<Node, PhtId>, bool, TvKeyHash> tv_memo_;
};

/// Convenience wrappers over a fresh algebra.
inline std::string pht_direct_text(const Formula& f, const FiniteTree& t, const Valuation& v = {}) {
  PhenotypeAlgebra alg(f);
  return alg.show(alg.direct(t, v));
}

// ---------------------------------------------------------------------------
// Regular trees (finite-quantifier fragment, empty valuation)

inline void check_finite_fragment(const Formula& f) {
  std::function<void(const Formula&)> go = [&](const Formula& g) {
    if (g->kind == FKind::Exists)
      throw input_error("fragment violation: arbitrary-set quantifier 'exists " + g->x +
                        "' is not supported on regular trees");
    if (g->a) go(g->a);
    if (g->b) go(g->b);
  };
  go(f);
}

/// Phenotypes of every class of a regular tree under the empty valuation.
class RegularPhenotypes {
 public:
  using Node = PhenotypeAlgebra::Node;

  RegularPhenotypes(PhenotypeAlgebra& alg, const RegularTree& r) : alg_(alg), r_(r) {
    check_finite_fragment(alg.formula());
    validate_regular(r_);
    for (const auto& [c, rule] : r_.rules) classes_.push_back(c);
    for (size_t i = 0; i < classes_.size(); ++i) cid_[classes_[i]] = i;
    for (const auto& c : classes_) {
      std::vector<size_t> ks;
      for (const auto& k : r_.rules.at(c).children) ks.push_back(cid_.at(k));
      kids_.push_back(ks);
      labels_.push_back(r_.rules.at(c).label);
    }
  }

  const std::vector<ClassId>& classes() const { return classes_; }
  size_t class_index(const ClassId& c) const { return cid_.at(c); }

  /// [[f]] at every class under the empty valuation, indexed like classes().
  const std::vector<PhtId>& empty_valuation(Node f) {
    auto it = empty_.find(f);
    if (it != empty_.end()) return it->second;
    std::vector<PhtId> out(classes_.size());
    switch (f->kind) {
      case FKind::Label:
      case FKind::Sub:
        std::fill(out.begin(), out.end(), pht::kTT);
        break;
      case FKind::Child:
        std::fill(out.begin(), out.end(), pht::kChildEmpty);
        break;
      case FKind::And: {
        const auto pa = empty_valuation(f->a.get());
        const auto pb = empty_valuation(f->b.get());
        for (size_t c = 0; c < out.size(); ++c) out[c] = alg_.make_pair(f, pa[c], pb[c]);
        break;
      }
      case FKind::Not:
        out = empty_valuation(f->a.get());
        break;
      case FKind::ExistsFin: {
        auto ach = achievable(f->a.get(), alg_.var_bit(f->x));
        for (size_t c = 0; c < out.size(); ++c) out[c] = alg_.make_set(f, ach[c]);
        break;
      }
      case FKind::U: {
        auto ach = achievable(f->a.get(), alg_.var_bit(f->x));
        auto unb = unbounded(f->a.get(), alg_.var_bit(f->x), ach);
        for (size_t c = 0; c < out.size(); ++c) out[c] = alg_.make_upair(f, ach[c], unb[c]);
        break;
      }
      case FKind::Exists:
        throw input_error("fragment violation");
    }
    return empty_[f] = out;
  }

  /// Phenotypes of f reachable with finite sets for the variables in W (others empty):
  /// least fixpoint of Comp seeded with the empty-valuation phenotypes.
  std::vector<std::vector<int>> achievable(Node f, uint64_t W) {
    const auto base = empty_valuation(f);
    std::vector<std::set<int>> sets(classes_.size());
    for (size_t c = 0; c < classes_.size(); ++c) sets[c].insert(base[c]);
    auto Rs = subsets_of(W);
    for (bool changed = true; changed;) {
      changed = false;
      for (size_t c = 0; c < classes_.size(); ++c) {
        std::vector<std::vector<int>> lists;
        for (size_t k : kids_[c]) lists.emplace_back(sets[k].begin(), sets[k].end());
        std::vector<int> found;
        for (uint64_t R : Rs)
          PhenotypeAlgebra::for_each_tuple(lists, [&](const std::vector<int>& s) {
            found.push_back(alg_.comp_mask(f, labels_[c], R, s));
          });
        for (int p : found) changed |= sets[c].insert(p).second;
      }
    }
    std::vector<std::vector<int>> out;
    for (const auto& s : sets) out.emplace_back(s.begin(), s.end());
    return out;
  }

  /// For the derivation grammar over (class, phenotype) pairs restricted to `ach`, the
  /// phenotypes derivable with unboundedly many steps that put the root into X.
  std::vector<std::vector<int>> unbounded(Node f, uint64_t xbit, const std::vector<std::vector<int>>& ach) {
    // Nonterminal ids.
    std::map<std::pair<size_t, int>, size_t> nid;
    std::vector<std::pair<size_t, int>> nts;
    for (size_t c = 0; c < ach.size(); ++c)
      for (int s : ach[c]) {
        nid[{c, s}] = nts.size();
        nts.push_back({c, s});
      }
    CountingGrammar g;
    g.size = nts.size();
    // below the support of X the empty-valuation phenotype is read off directly
    const auto& base = empty_valuation(f);
    for (size_t c = 0; c < classes_.size(); ++c) g.add(nid.at({c, base[c]}), false, {});
    for (size_t c = 0; c < classes_.size(); ++c) {
      std::vector<std::vector<int>> lists;
      for (size_t k : kids_[c]) lists.push_back(ach[k]);
      for (uint64_t R : {uint64_t{0}, xbit})
        PhenotypeAlgebra::for_each_tuple(lists, [&](const std::vector<int>& s) {
          int lhs = alg_.comp_mask(f, labels_[c], R, s);
          auto it = nid.find({c, lhs});
          if (it == nid.end()) throw internal_error("derivation leaves the achievable set");
          std::vector<size_t> rhs;
          for (size_t i = 0; i < s.size(); ++i) rhs.push_back(nid.at({kids_[c][i], s[i]}));
          g.add(it->second, R != 0, std::move(rhs));
        });
    }
    auto result = g.unbounded();
    std::vector<std::vector<int>> out(classes_.size());
    for (size_t u = 0; u < nts.size(); ++u)
      if (result[u]) out[nts[u].first].push_back(nts[u].second);
    return out;
  }

 private:
  static std::vector<uint64_t> subsets_of(uint64_t W) {
    std::vector<uint64_t> out;
    for (uint64_t s = W;; s = (s - 1) & W) {
      out.push_back(s);
      if (s == 0) break;
    }
    return out;
  }

  PhenotypeAlgebra& alg_;
  RegularTree r_;
  std::vector<ClassId> classes_;
  std::map<ClassId, size_t> cid_;
  std::vector<std::vector<size_t>> kids_;
  std::vector<Letter> labels_;
  std::unordered_map<Node, std::vector<PhtId>> empty_;
};

/// Phenotype of the whole formula at every class, under the empty valuation.
inline std::map<ClassId, PhtId> pht_regular(PhenotypeAlgebra& alg, const RegularTree& r) {
  RegularPhenotypes rp(alg, r);
  const auto& v = rp.empty_valuation(alg.root());
  std::map<ClassId, PhtId> out;
  for (size_t i = 0; i < rp.classes().size(); ++i) out[rp.classes()[i]] = v[i];
  return out;
}

inline bool check_regular(const Formula& f, const RegularTree& r) {
  if (!f->free.empty()) throw input_error("check_regular needs a sentence; '" + f->free[0] + "' is free");
  PhenotypeAlgebra alg(f);
  return alg.tv(pht_regular(alg, r).at(r.root));
}

inline Letter pair_letter(const Letter& a, const std::string& b) { return a + "|" + b; }

/// Relabels every class a to a|tt or a|ff according to the truth of f in its subtree.
inline RegularTree reflect_regular(const Formula& f, const RegularTree& r) {
  if (!f->free.empty()) throw input_error("reflect_regular needs a sentence; '" + f->free[0] + "' is free");
  PhenotypeAlgebra alg(f);
  auto p = pht_regular(alg, r);
  RegularTree out = r;
  for (auto& [c, rule] : out.rules) rule.label = pair_letter(rule.label, alg.tv(p.at(c)) ? "tt" : "ff");
  return out;
}

}  // namespace msou

#pragma once

// Logic to nested automata: per-phenotype formulas (item1), empty-valuation readers (item2), the U layer,
// accepting sets and the MSO equivalent over processed trees.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "msou/automata.hpp"
#include "msou/error.hpp"
#include "msou/logic.hpp"
#include "msou/phenotype.hpp"
#include "msou/tree.hpp"

namespace msou {

/// Reader value of letters whose last block is not one-hot.
inline constexpr PhtId kInvalidPht = -1;

/// A letter pattern that matches no letter; `nil(X)` holds iff X is empty.
inline const Letter kNoLetter = "#none";

struct CompileOptions {
  size_t max_arity = 2;
  size_t pht_cap = 2048;         // realizable phenotypes per subformula
  size_t transition_cap = 1u << 20;
  size_t case_cap = 1u << 18;    // disjuncts in a partition formula
  // Regular trees the result will also be applied to. Their classes seed the
  // phenotype tables; other infinite trees may reach unlisted phenotypes.
  std::vector<RegularTree> background;
};

struct Item1Result {
  NestedAutomaton nested;
  std::vector<PhtId> phenotypes;  // realizable phenotypes; xi is false for the others
  std::map<PhtId, Formula> xi;
};

struct Item2Result {
  NestedAutomaton nested;
  std::vector<PhtId> phenotypes;  // state order of the last layer

  PhtId read(const Letter& eta) const {
    auto cs = letter_components(eta);
    const std::string& h = cs.back();
    if (cs.size() < 2 || h.size() != phenotypes.size()) return kInvalidPht;
    PhtId out = kInvalidPht;
    for (size_t i = 0; i < h.size(); ++i) {
      if (h[i] == '0') continue;
      if (h[i] != '1' || out != kInvalidPht) return kInvalidPht;
      out = phenotypes[i];
    }
    return out;
  }
};

struct CompiledChecker {
  NestedAutomaton nested;
  std::vector<Letter> accepting;  // patterns over the output alphabet
  Formula sentence;
  size_t max_arity = 2;

  bool accepts(const Letter& eta) const {
    return std::any_of(accepting.begin(), accepting.end(), [&](const Letter& p) { return letter_matches(p, eta); });
  }
  Letter root_letter(const FiniteTree& t, MsoEngine e = MsoEngine::Phenotype) const {
    if (msou::max_arity(t) > max_arity)
      throw input_error("tree has arity " + std::to_string(msou::max_arity(t)) + ", checker was built for " +
                        std::to_string(max_arity));
    return apply_nested(nested, t, e).label;
  }
  bool check(const FiniteTree& t, MsoEngine e = MsoEngine::Phenotype) const { return accepts(root_letter(t, e)); }
  /// Only meaningful for trees given as background at compile time.
  bool check(const RegularTree& r) const {
    validate_regular(r, max_arity);
    auto out = apply_nested(nested, r);
    const Letter& eta = out.rules.at(out.root).label;
    const std::string& h = letter_components(eta).back();
    if (std::count(h.begin(), h.end(), '1') != 1 || std::count(h.begin(), h.end(), '0') + 1 != long(h.size()))
      throw input_error("regular tree reaches a phenotype outside the compiled tables; compile with it as background");
    return accepts(eta);
  }
};

namespace detail {

// -- constants and folding ----------------------------------------------------

inline const Formula& k_tt() {
  static const Formula t = f_existsfin("Ztt", f_sub("Ztt", "Ztt"));
  return t;
}
inline const Formula& k_ff() {
  static const Formula t = f_not(k_tt());
  return t;
}
inline Formula c_not(const Formula& a) {
  if (a == k_tt()) return k_ff();
  if (a == k_ff()) return k_tt();
  return f_not(a);
}
inline Formula c_and(const Formula& a, const Formula& b) {
  if (a == k_ff() || b == k_ff()) return k_ff();
  if (a == k_tt()) return b;
  if (b == k_tt()) return a;
  return f_and(a, b);
}
inline Formula c_or(const Formula& a, const Formula& b) {
  if (a == k_tt() || b == k_tt()) return k_tt();
  if (a == k_ff()) return b;
  if (b == k_ff()) return a;
  return f_or(a, b);
}
inline Formula c_and_all(const std::vector<Formula>& fs) {
  Formula r = k_tt();
  for (const auto& f : fs) r = c_and(r, f);
  return r;
}
inline Formula c_or_all(const std::vector<Formula>& fs) {
  Formula r = k_ff();
  for (const auto& f : fs) r = c_or(r, f);
  return r;
}
inline Formula c_quant(FKind k, const std::string& x, const Formula& body) {
  if ((k == FKind::Exists || k == FKind::ExistsFin) && (body == k_tt() || body == k_ff())) return body;
  return f_quant(k, x, body, k == FKind::Exists ? VarKind::Inf : VarKind::Fin);
}

inline Formula nil(const std::string& x) { return f_label(kNoLetter, x); }

template <class Names>
Formula sing(const std::string& x, Names&& fresh) {
  std::string y = fresh("Y");
  return f_and(f_not(nil(x)), f_not(f_existsfin(y, f_and(f_and(f_sub(y, x), f_not(f_sub(x, y))), f_not(nil(y))))));
}

template <class Names>
Formula is_root(const std::string& x, size_t max_arity, Names&& fresh) {
  std::string p = fresh("P");
  return f_and(sing(x, fresh), f_not(f_existsfin(p, f_child_any(p, x, max_arity))));
}

// -- label plumbing -------------------------------------------------------------

inline Letter insert_stars(const Letter& p, size_t at, size_t k) {
  if (p == kNoLetter || k == 0) return p;
  auto cs = letter_components(p);
  if (at > cs.size()) throw internal_error("bad component position in " + p);
  cs.insert(cs.begin() + static_cast<long>(at), k, "*");
  return join_components(cs);
}

inline Formula relabel(const Formula& f, size_t at, size_t k, bool append) {
  if (k == 0) return f;
  return substitute_labels(f, [&](const Letter& a, const std::string& x) -> Formula {
    if (a == kNoLetter) return nullptr;
    size_t pos = append ? letter_components(a).size() : at;
    return f_label(insert_stars(a, pos, k), x);
  });
}
inline Formula append_stars(const Formula& f, size_t k) { return relabel(f, 0, k, true); }
inline Formula insert_after_base(const Formula& f, size_t k) { return relabel(f, 1, k, false); }

/// A layer reading `widths` extra blocks right after the base letter.
inline Layer widen_layer(const Layer& l, const std::vector<size_t>& widths) {
  if (widths.empty()) return l;
  return std::visit(
      [&](auto a) -> Layer {
        a.alphabet.widths.insert(a.alphabet.widths.begin(), widths.begin(), widths.end());
        if constexpr (std::is_same_v<decltype(a), UPrefixAutomaton>) {
          for (auto& t : a.delta) t.letter = insert_stars(t.letter, 1, widths.size());
        } else {
          for (auto& s : a.sentences) s = insert_after_base(s, widths.size());
        }
        return a;
      },
      l);
}

/// Pattern "*|*|...|block" with `comps` components.
inline Letter last_block_pattern(size_t comps, const std::string& block) {
  std::vector<std::string> cs(comps, "*");
  cs.back() = block;
  return join_components(cs);
}

inline std::string one_hot(size_t n, size_t i) {
  std::string s(n, '0');
  s[i] = '1';
  return s;
}

inline std::vector<uint64_t> submasks(uint64_t m) {
  std::vector<uint64_t> out;
  for (uint64_t s = m;; s = (s - 1) & m) {
    out.push_back(s);
    if (s == 0) break;
  }
  std::reverse(out.begin(), out.end());
  return out;
}

template <class F>
void for_each_tuple(size_t n, size_t r, F&& fn) {
  std::vector<size_t> cur(r, 0);
  if (r > 0 && n == 0) return;
  for (;;) {
    fn(cur);
    size_t i = r;
    while (i > 0) {
      if (++cur[i - 1] < n) break;
      cur[i - 1] = 0;
      --i;
    }
    if (i == 0) return;
  }
}

}  // namespace detail

/// Compiles one formula over a base alphabet; results are memoized per subformula.
class Compiler {
 public:
  using Node = const FormulaNode*;

  Compiler(const Formula& f, std::vector<Letter> sigma, CompileOptions opt = {})
      : phi_(rename_apart(f)), sigma_(std::move(sigma)), opt_(opt), alg_(std::make_shared<PhenotypeAlgebra>(phi_)) {
    VarKinds kinds;
    for (const auto& x : phi_->free) kinds[x] = VarKind::Fin;
    check_wf(phi_, kinds);
    std::sort(sigma_.begin(), sigma_.end());
    sigma_.erase(std::unique(sigma_.begin(), sigma_.end()), sigma_.end());
    if (sigma_.empty()) throw input_error("compile needs a nonempty alphabet");
    for (const auto& a : sigma_) check_user_letter(a);
    for (const auto& a : letters_of(phi_))
      if (!std::binary_search(sigma_.begin(), sigma_.end(), a))
        throw input_error("formula uses letter '" + a + "' outside the alphabet");
    fresh_.reserve(phi_);
    fresh_.reserve("Ztt");
    for (const auto& r : opt_.background) {
      validate_regular(r, opt_.max_arity);
      for (const auto& [c, rule] : r.rules)
        if (!std::binary_search(sigma_.begin(), sigma_.end(), rule.label))
          throw input_error("background tree uses letter '" + rule.label + "' outside the alphabet");
      backgrounds_.push_back(std::make_unique<RegularPhenotypes>(*alg_, r));
    }
  }

  const Formula& formula() const { return phi_; }
  Node root() const { return phi_.get(); }
  PhenotypeAlgebra& algebra() { return *alg_; }
  std::shared_ptr<PhenotypeAlgebra> algebra_ptr() const { return alg_; }
  const std::vector<Letter>& alphabet() const { return sigma_; }
  const CompileOptions& options() const { return opt_; }

  /// Phenotypes of g realized on some finite (sigma, max_arity)-tree or below a
  /// background class, with the free variables in `allowed` ranging over
  /// finite sets and the others empty.
  const std::vector<PhtId>& realizable(Node g, uint64_t allowed) {
    g = alg_->table_node(g);
    allowed &= alg_->free_mask(g);
    auto key = std::make_pair(g, allowed);
    if (auto it = real_.find(key); it != real_.end()) return it->second;
    auto list = least(g, allowed);
    std::sort(list.begin(), list.end());
    if (list.size() > opt_.pht_cap)
      throw resource_error("subformula '" + to_string(alg_->shared(g)) + "' has " + std::to_string(list.size()) +
                           " realizable phenotypes, cap is " + std::to_string(opt_.pht_cap));
    return real_[key] = list;
  }
  const std::vector<PhtId>& realizable_all(Node g) { return realizable(g, ~uint64_t{0}); }
  const std::vector<PhtId>& realizable_empty(Node g) { return realizable(g, 0); }

  // -- item1: a formula xi_tau per phenotype tau ---------------------------------

  const Item1Result& item1(Node g) {
    g = alg_->table_node(g);
    if (auto it = item1_.find(g); it != item1_.end()) return it->second;
    Item1Result res;
    switch (g->kind) {
      case FKind::Label:
      case FKind::Sub:
      case FKind::Child:
        res = atom(g);
        break;
      case FKind::And:
        res = conj(g);
        break;
      case FKind::Exists:
      case FKind::ExistsFin:
        res = quant(g);
        break;
      case FKind::U:
        res = u_item1(g);
        break;
      default:
        throw internal_error("item1 on negation");
    }
    return item1_[g] = std::move(res);
  }

  // -- item2: root letter determines the empty-valuation phenotype --------------

  const Item2Result& item2(Node g) {
    g = alg_->table_node(g);
    if (auto it = item2_.find(g); it != item2_.end()) return it->second;
    Item2Result res;
    if (g->kind == FKind::U) {
      const Item2Result& inner = item2(g->a.get());
      res.nested = inner.nested;
      res.nested.layers.push_back(u_layer(g, inner));
      res.phenotypes = realizable_empty(g);
      res.nested.layers.push_back(u_reader_layer(g, res.nested.output()));
    } else {
      const Item1Result& r = item1(g);
      res.nested = r.nested;
      MSOAutomaton c;
      c.alphabet = r.nested.output();
      res.phenotypes = realizable_empty(g);
      for (size_t i = 0; i < res.phenotypes.size(); ++i) {
        c.states.push_back("t" + std::to_string(i));
        c.sentences.push_back(as_sentence(closure(r.xi.at(res.phenotypes[i]))));
      }
      res.nested.layers.push_back(std::move(c));
    }
    return item2_[g] = std::move(res);
  }

  /// The layer computing U X.psi phenotypes from psi phenotypes.
  UPrefixAutomaton u_layer(Node g, const Item2Result& psi2) {
    Node psi = g->a.get();
    uint64_t xbit = alg_->var_bit(g->x);
    const auto& S = realizable(psi, xbit);
    std::map<PhtId, size_t> pos;
    for (size_t k = 0; k < S.size(); ++k) pos[S[k]] = k;
    UPrefixAutomaton a;
    a.alphabet = psi2.nested.output();
    auto state = [&](int i, PhtId s) { return "s" + std::to_string(i) + "_" + std::to_string(pos.at(s)); };
    for (int i = 0; i < 2; ++i)
      for (PhtId s : S) {
        a.states.push_back(state(i, s));
        if (i == 1) a.important.insert(a.states.back());
      }
    size_t comps = a.alphabet.components();
    size_t nq = a.states.size();
    double rows = 0;
    for (size_t r = 0; r <= opt_.max_arity; ++r) rows += 2.0 * static_cast<double>(sigma_.size()) * std::pow(double(nq), double(r));
    if (rows > static_cast<double>(opt_.transition_cap))
      throw resource_error("U layer for '" + to_string(alg_->shared(g)) + "' needs " + std::to_string(size_t(rows)) +
                           " transitions, cap is " + std::to_string(opt_.transition_cap));
    for (const auto& b : sigma_) {
      std::vector<std::string> cs(comps, "*");
      cs[0] = b;
      Letter pat = join_components(cs);
      for (size_t r = 0; r <= opt_.max_arity; ++r)
        detail::for_each_tuple(nq, r, [&](const std::vector<size_t>& ix) {
          std::vector<PhtId> kids;
          std::vector<std::string> names;
          for (size_t i : ix) {
            kids.push_back(S[i % S.size()]);
            names.push_back(a.states[i]);
          }
          a.delta.push_back({state(0, alg_->comp_mask(psi, b, 0, kids)), pat, names});
          a.delta.push_back({state(1, alg_->comp_mask(psi, b, xbit, kids)), pat, names});
        });
    }
    // read the psi-phenotype off the label below the chosen set
    for (size_t k = 0; k < psi2.phenotypes.size(); ++k) {
      Letter pat = detail::last_block_pattern(comps, detail::one_hot(psi2.phenotypes.size(), k));
      for (size_t r = 0; r <= opt_.max_arity; ++r)
        a.delta.push_back({state(0, psi2.phenotypes[k]), pat, std::vector<std::string>(r, kTop)});
    }
    return a;
  }

  // -- sentences ------------------------------------------------------------------

  CompiledChecker sentence() {
    if (!phi_->free.empty()) throw input_error("compile_sentence needs a sentence; free: " + phi_->free.front());
    const Item2Result& r = item2(root());
    CompiledChecker c;
    c.nested = r.nested;
    c.sentence = phi_;
    c.max_arity = opt_.max_arity;
    size_t comps = c.nested.output().components();
    for (size_t i = 0; i < r.phenotypes.size(); ++i)
      if (alg_->tv(root(), r.phenotypes[i]))
        c.accepting.push_back(detail::last_block_pattern(comps, detail::one_hot(r.phenotypes.size(), i)));
    return c;
  }

  /// Disjunction of xi over the tv-true phenotypes; no U binders.
  Formula mso_equivalent() {
    const Item1Result& r = item1(root());
    std::vector<Formula> ds;
    for (PhtId t : r.phenotypes)
      if (alg_->tv(root(), t)) ds.push_back(r.xi.at(t));
    return detail::c_or_all(ds);
  }

  /// Formula over the output of item1(g) selecting phenotype t (false when unrealizable).
  Formula xi(Node g, PhtId t) {
    const auto& r = item1(g);
    auto it = r.xi.find(t);
    return it == r.xi.end() ? detail::k_ff() : it->second;
  }

 private:
  /// One fresh name per role. Helper binders never nest inside a binder of
  /// the same role, so reusing them keeps the variable count small.
  std::string role(const std::string& r) {
    auto it = roles_.find(r);
    if (it != roles_.end()) return it->second;
    return roles_[r] = fresh_(r);
  }
  std::function<std::string(const std::string&)> roles() {
    return [this](const std::string& r) { return role(r); };
  }

  std::vector<PhtId> least(Node g, uint64_t allowed) {
    auto masks = detail::submasks(allowed);
    std::vector<PhtId> list;
    std::set<PhtId> seen;
    for (auto& rp : backgrounds_)
      for (PhtId p : rp->empty_valuation(g))
        if (seen.insert(p).second) list.push_back(p);
    size_t old = 0;
    bool first = true;
    for (;;) {
      size_t n = list.size();
      for (size_t r = 0; r <= opt_.max_arity; ++r) {
        if (r == 0 && !first) continue;
        detail::for_each_tuple(n, r, [&](const std::vector<size_t>& ix) {
          if (r > 0 && std::all_of(ix.begin(), ix.end(), [&](size_t i) { return i < old; })) return;
          std::vector<PhtId> kids;
          for (size_t i : ix) kids.push_back(list[i]);
          for (const auto& a : sigma_)
            for (uint64_t m : masks)
              if (seen.insert(alg_->comp_mask(g, a, m, kids)).second) {
                list.push_back(alg_->comp_mask(g, a, m, kids));
                if (list.size() > opt_.pht_cap)
                  throw resource_error("subformula '" + to_string(alg_->shared(g)) + "' has more than " +
                                       std::to_string(opt_.pht_cap) + " realizable phenotypes");
              }
        });
      }
      first = false;
      if (list.size() == n) break;
      old = n;
    }
    return list;
  }

  Item1Result atom(Node g) {
    using namespace detail;
    Item1Result r;
    MSOAutomaton m;
    m.alphabet = Alphabet(sigma_);
    r.nested.layers.push_back(m);
    r.phenotypes = realizable_all(g);
    Formula f = alg_->shared(g);
    std::map<PhtId, Formula> xi;
    if (g->kind == FKind::Child) {
      Formula tt = f, empty = f_and(nil(g->x), nil(g->y));
      Formula rt = f_and(nil(g->x), is_root(g->y, opt_.max_arity, roles()));
      xi[pht::kChildTT] = tt;
      xi[pht::kChildEmpty] = empty;
      xi[pht::kChildRoot] = rt;
      xi[pht::kChildFF] = f_and(f_not(tt), f_and(f_not(empty), f_not(rt)));
    } else {
      xi[pht::kTT] = f;
      xi[pht::kFF] = f_not(f);
    }
    for (PhtId t : r.phenotypes) r.xi[t] = append_stars(xi.at(t), 1);
    return r;
  }

  Item1Result conj(Node g) {
    using namespace detail;
    const Item1Result& r1 = item1(g->a.get());
    const Item1Result& r2 = item1(g->b.get());
    Item1Result r;
    r.nested = r1.nested;
    std::vector<size_t> w1 = r1.nested.output().widths;
    for (const auto& l : r2.nested.layers) r.nested.layers.push_back(widen_layer(l, w1));
    size_t k1 = r1.nested.layers.size(), k2 = r2.nested.layers.size();
    std::map<PhtId, Formula> x1, x2;
    for (const auto& [p, f] : r1.xi) x1[p] = append_stars(f, k2);
    for (const auto& [q, f] : r2.xi) x2[q] = insert_after_base(f, k1);
    r.phenotypes = realizable_all(g);
    for (PhtId t : r.phenotypes) {
      auto [p, q] = alg_->pair_of(g, t);
      r.xi[t] = c_and(x1.at(p), x2.at(q));
    }
    return r;
  }

  Item1Result quant(Node g) {
    using namespace detail;
    const Item1Result& inner = item1(g->a.get());
    Item1Result r;
    r.nested = inner.nested;
    std::map<PhtId, Formula> q;
    for (const auto& [s, f] : inner.xi) q[s] = c_quant(g->kind, g->x, f);
    r.phenotypes = realizable_all(g);
    for (PhtId t : r.phenotypes) {
      auto in = alg_->set_of(g, t);
      std::vector<Formula> cs;
      for (PhtId s : inner.phenotypes)
        cs.push_back(std::binary_search(in.begin(), in.end(), s) ? q.at(s) : c_not(q.at(s)));
      r.xi[t] = c_and_all(cs);
    }
    return r;
  }

  /// Last-layer one-hot test for phenotype t at x (false when t is not readable).
  Formula reads(const Item2Result& r2, PhtId t, const std::string& x) {
    auto it = std::find(r2.phenotypes.begin(), r2.phenotypes.end(), t);
    if (it == r2.phenotypes.end()) return detail::k_ff();
    size_t comps = r2.nested.output().components();
    return f_label(detail::last_block_pattern(
                       comps, detail::one_hot(r2.phenotypes.size(), static_cast<size_t>(it - r2.phenotypes.begin()))),
                   x);
  }

  /// MSO layer turning the U layer's digits into one-hot phenotypes.
  MSOAutomaton u_reader_layer(Node g, const Alphabet& in) {
    using namespace detail;
    const auto& S = realizable(g->a.get(), alg_->var_bit(g->x));
    size_t comps = in.components(), w = in.widths.back();
    MSOAutomaton m;
    m.alphabet = in;
    const auto& P = realizable_empty(g);
    for (size_t i = 0; i < P.size(); ++i) {
      auto [A, B] = alg_->upair_of(g, P[i]);
      std::string x = role("R");
      std::vector<Formula> cs;
      for (size_t k = 0; k < S.size(); ++k) {
        bool inA = std::binary_search(A.begin(), A.end(), S[k]), inB = std::binary_search(B.begin(), B.end(), S[k]);
        std::vector<Formula> ds;
        for (char d0 : {'0', '1', '2'})
          for (char d1 : {'0', '1', '2'}) {
            bool a = d0 != '0' || d1 != '0', b = d0 == '2' || d1 == '2';
            if (a != inA || b != inB) continue;
            std::string block(w, '?');
            block[k] = d0;
            block[S.size() + k] = d1;
            ds.push_back(f_label(last_block_pattern(comps, block), x));
          }
        cs.push_back(c_or_all(ds));
      }
      m.states.push_back("n" + std::to_string(i));
      m.sentences.push_back(f_existsfin(x, c_and(is_root(x, opt_.max_arity, roles()), c_and_all(cs))));
    }
    return m;
  }

  /// item1 for U X.psi: phenotypes on the cover of the free variables are
  /// recomputed with Comp, everywhere else they are read off the label.
  Item1Result u_item1(Node g) {
    using namespace detail;
    const Item2Result& r2 = item2(g);
    Item1Result r;
    r.nested = r2.nested;
    r.phenotypes = realizable_all(g);
    const size_t m = opt_.max_arity;
    std::vector<std::string> ys(g->free.begin(), g->free.end());
    if (ys.empty()) {
      for (PhtId t : r.phenotypes) {
        std::string x = role("R");
        r.xi[t] = c_quant(FKind::ExistsFin, x, c_and(is_root(x, m, roles()), reads(r2, t, x)));
      }
      return r;
    }
    const auto& P = r.phenotypes;
    std::map<PhtId, size_t> idx;
    for (size_t i = 0; i < P.size(); ++i) idx[P[i]] = i;
    size_t bits = 0;
    while ((size_t{1} << bits) < P.size()) ++bits;
    std::string A = role("A");
    std::vector<std::string> B;
    for (size_t j = 0; j < bits; ++j) B.push_back(role("B" + std::to_string(j)));
    size_t comps = r2.nested.output().components();

    auto bits_of = [&](PhtId t, const std::string& x) {
      std::vector<Formula> cs;
      for (size_t j = 0; j < bits; ++j) cs.push_back(idx.at(t) >> j & 1 ? f_sub(x, B[j]) : f_not(f_sub(x, B[j])));
      return c_and_all(cs);
    };
    auto val = [&](PhtId t, const std::string& x) {
      return c_or(c_and(f_sub(x, A), bits_of(t, x)), c_and(f_not(f_sub(x, A)), reads(r2, t, x)));
    };

    // A is the least parent-closed set holding every free-variable node
    std::vector<Formula> cover;
    for (const auto& y : ys) cover.push_back(f_sub(y, A));
    {
      std::string p = role("P"), q = role("Q");
      cover.push_back(f_not(f_existsfin(
          p, f_existsfin(q, f_and(f_and(f_child_any(p, q, m), f_sub(q, A)), f_not(f_sub(p, A)))))));
      std::string x = role("N"), c = role("K");
      std::vector<Formula> outside;
      for (const auto& y : ys) outside.push_back(f_not(f_sub(x, y)));
      cover.push_back(f_not(f_existsfin(
          x, c_and_all({sing(x, roles()), f_sub(x, A), c_and_all(outside),
                        f_not(f_existsfin(c, f_and(f_child_any(x, c, m), f_sub(c, A))))}))));
    }

    // every node of A carries the Comp of its letter, R and children
    std::string x = role("N");
    std::vector<std::string> kid;
    for (size_t j = 0; j < m; ++j) kid.push_back(role("C" + std::to_string(j)));
    std::vector<std::vector<Formula>> kid_val(m, std::vector<Formula>(P.size()));
    for (size_t j = 0; j < m; ++j)
      for (size_t i = 0; i < P.size(); ++i)
        kid_val[j][i] = f_existsfin(kid[j], f_and(f_child(x, static_cast<int>(j + 1), kid[j]), val(P[i], kid[j])));
    std::vector<Formula> has_kid(m + 1);
    for (size_t j = 1; j <= m; ++j) {
      std::string c = role("K");
      has_kid[j] = f_existsfin(c, f_child(x, static_cast<int>(j), c));
    }
    size_t cases = 0;
    std::vector<Formula> by_letter;
    uint64_t fm = alg_->free_mask(g);
    for (const auto& a : sigma_) {
      std::vector<std::string> cs(comps, "*");
      cs[0] = a;
      std::vector<Formula> by_r;
      for (size_t r = 0; r <= m; ++r) {
        Formula arity = r < m ? f_not(has_kid[r + 1]) : k_tt();
        if (r > 0) arity = c_and(has_kid[r], arity);
        std::vector<Formula> by_R;
        for (uint64_t R : submasks(fm)) {
          std::vector<Formula> mem;
          for (const auto& y : ys) mem.push_back(alg_->var_bit(y) & R ? f_sub(x, y) : f_not(f_sub(x, y)));
          // nested choice of child phenotypes, one level per child
          std::function<Formula(size_t, std::vector<PhtId>&)> kids = [&](size_t j, std::vector<PhtId>& sofar) {
            if (j == r) {
              if (++cases > opt_.case_cap)
                throw resource_error("partition formula for '" + to_string(alg_->shared(g)) + "' exceeds " +
                                     std::to_string(opt_.case_cap) + " cases");
              PhtId t = alg_->comp_mask(g, a, R, sofar);
              if (!idx.count(t)) throw internal_error("Comp left the realizable phenotypes");
              return bits_of(t, x);
            }
            std::vector<Formula> ds;
            for (size_t i = 0; i < P.size(); ++i) {
              sofar.push_back(P[i]);
              ds.push_back(c_and(kid_val[j][i], kids(j + 1, sofar)));
              sofar.pop_back();
            }
            return c_or_all(ds);
          };
          std::vector<PhtId> sofar;
          by_R.push_back(c_and(c_and_all(mem), kids(0, sofar)));
        }
        by_r.push_back(c_and(arity, c_or_all(by_R)));
      }
      by_letter.push_back(c_and(f_label(join_components(cs), x), c_or_all(by_r)));
    }
    Formula consistent = f_not(f_existsfin(x, c_and_all({sing(x, roles()), f_sub(x, A), c_not(c_or_all(by_letter))})));

    for (PhtId t : P) {
      std::string root = role("R");
      Formula at_root = f_existsfin(root, c_and(is_root(root, m, roles()), val(t, root)));
      Formula body = c_and(consistent, at_root);
      for (size_t j = bits; j-- > 0;) body = f_existsfin(B[j], f_and(f_sub(B[j], A), body));
      r.xi[t] = f_existsfin(A, c_and(c_and_all(cover), body));
    }
    return r;
  }

  /// Rewrites xi for the valuation sending every free variable to the empty set.
  Formula closure(const Formula& f) {
    using namespace detail;
    std::set<std::string> fv(f->free.begin(), f->free.end());
    std::unordered_map<Node, Formula> memo;
    std::function<Formula(const Formula&)> go = [&](const Formula& g) -> Formula {
      if (g == k_tt() || g == k_ff()) return g;
      if (std::none_of(g->free.begin(), g->free.end(), [&](const std::string& v) { return fv.count(v) > 0; }))
        return g;
      if (auto it = memo.find(g.get()); it != memo.end()) return it->second;
      Formula out;
      switch (g->kind) {
        case FKind::Label:
          out = k_tt();
          break;
        case FKind::Sub:
          out = fv.count(g->x) ? k_tt() : nil(g->x);
          break;
        case FKind::Child:
          out = k_ff();
          break;
        case FKind::And:
          out = c_and(go(g->a), go(g->b));
          break;
        case FKind::Not:
          out = c_not(go(g->a));
          break;
        default:
          if (fv.count(g->x)) throw internal_error("bound variable shadows a free one in xi");
          out = c_quant(g->kind, g->x, go(g->a));
      }
      return memo[g.get()] = out;
    };
    return go(f);
  }

  /// Closed formulas must not be the bare constants' free-variable forms.
  static Formula as_sentence(const Formula& f) {
    if (!f->free.empty()) throw internal_error("closure left free variables");
    return f;
  }

  Formula phi_;
  std::vector<Letter> sigma_;
  CompileOptions opt_;
  std::shared_ptr<PhenotypeAlgebra> alg_;
  FreshNames fresh_;
  std::map<std::string, std::string> roles_;
  std::vector<std::unique_ptr<RegularPhenotypes>> backgrounds_;
  std::map<std::pair<Node, uint64_t>, std::vector<PhtId>> real_;
  std::map<Node, Item1Result> item1_;
  std::map<Node, Item2Result> item2_;
};

// -- free-function front ends ----------------------------------------------------

inline CompiledChecker compile_sentence(const Formula& f, const std::vector<Letter>& sigma, size_t max_arity = 2) {
  CompileOptions o;
  o.max_arity = max_arity;
  Compiler c(f, sigma, o);
  return c.sentence();
}

/// (A_f, phi_MSO) with phi_MSO over the output alphabet of A_f.
inline std::pair<NestedAutomaton, Formula> emit_mso_equivalent(const Formula& f, const std::vector<Letter>& sigma,
                                                               size_t max_arity = 2) {
  CompileOptions o;
  o.max_arity = max_arity;
  Compiler c(f, sigma, o);
  Formula g = c.mso_equivalent();
  return {c.item1(c.root()).nested, g};
}

/// Layer count, state counts and phenotype-table sizes.
inline std::string compile_report(Compiler& c, const CompiledChecker& k) {
  std::ostringstream os;
  os << "layers: " << k.nested.layers.size() << "\n";
  for (size_t i = 0; i < k.nested.layers.size(); ++i) {
    const auto& l = k.nested.layers[i];
    os << "  " << i + 1 << ": " << (std::holds_alternative<UPrefixAutomaton>(l) ? "uprefix" : "mso") << ", "
       << layer_states(l).size() << " states";
    if (auto* u = std::get_if<UPrefixAutomaton>(&l)) os << ", " << u->delta.size() << " transitions";
    os << "\n";
  }
  os << "output alphabet: " << to_string(k.nested.output()) << "\n";
  os << "accepting: " << k.accepting.size() << " of " << c.item2(c.root()).phenotypes.size()
     << " root phenotypes\n";
  return os.str();
}

}  // namespace msou

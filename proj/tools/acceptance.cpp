// Acceptance run: one PASS/FAIL line per criterion, exit status 1 when any fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <memory>
#include <sstream>

#include "msou/compile.hpp"
#include "msou/lambda.hpp"
#include "msou/phenotype.hpp"
#include "msou/transduce.hpp"
#include "support.hpp"

using namespace msou;
using namespace msou::testing;

namespace {

// Pinned limits. Every comparison below is exact; only running time has a bound.
constexpr double kCompositionalitySeconds = 120.0;
constexpr double kCrossEngineSeconds = 300.0;
constexpr size_t kGridNodes = 5;
constexpr size_t kRoundTripNodes = 4;
constexpr size_t kCrossEnginePairs = 100;
constexpr size_t kPrefixDepth = 5;
constexpr size_t kUnfoldDepth = 8;
// SUP oracle: best min-count at kSupLong nodes exceeds the one at kSupShort.
constexpr size_t kSupShort = 15, kSupLong = 30;

const std::vector<Letter> kAB{"a", "b"};

// Open formulas over at most two free variables, then sentences. Every atom form, every
// connective of the concrete syntax, quantifier nesting at most three.
const char* const kCorpus[] = {
    "a(X)",
    "b(X)",
    "X child_1 Y",
    "X child_2 Y",
    "X sub Y",
    "~a(X)",
    "a(X) /\\ b(Y)",
    "a(X) \\/ b(X)",
    "a(X) -> X sub Y",
    "~(X child_1 Y) /\\ Y sub X",
    "exists Z. X child_1 Z",
    "exists Z. Z child_2 X /\\ b(Z)",
    "existsfin Z. X sub Z /\\ a(Z)",
    "forall Z. X sub Z -> a(Z)",
    "forallfin Z. Z sub X -> ~b(Z)",
    "exists Z. (X child_1 Z \\/ X child_2 Z) /\\ Z sub Y",
    "~(exists Z. Z child_1 X)",
    "exists Z. exists W. Z child_1 W /\\ W sub X",
    "existsfin Z. ~(Z sub X) /\\ b(Z)",
    "free G:fin; U F. G sub F /\\ a(F)",
    "free G:fin; U F. F sub G",
    "free G:fin; ~(U F. b(F) /\\ ~(F sub G))",
    "empty(X) \\/ sing(Y)",
    "big(X) /\\ X sub Y",
    "X child_1 Y /\\ Y child_2 X",
    "exists Z. X child_2 Z /\\ ~(exists W. Z child_1 W)",
    "forall Z. (Z sub X -> exists W. Z child_1 W)",
    "a(X) /\\ ~b(Y) /\\ X sub Y",
    "exists Z. Z sub X /\\ Z sub Y /\\ ~empty(Z)",
    "free X:fin; U F. X sub F /\\ b(F)",
    "exists Z. a(Z)",
    "exists Z. b(Z) /\\ ~empty(Z)",
    "forall Z. a(Z) \\/ b(Z)",
    "existsfin Z. sing(Z) /\\ b(Z)",
    "forallfin Z. sing(Z) -> a(Z)",
    "exists X. exists Y. X child_1 Y /\\ b(Y)",
    "exists X. exists Y. X child_2 Y /\\ a(X)",
    "~(exists X. exists Y. X child_2 Y)",
    "U F. a(F)",
    "U F. ~empty(F)",
    "~(U F. b(F))",
    "existsfin X. existsfin Y. X child_1 Y /\\ a(X) /\\ a(Y)",
    "exists X. big(X) /\\ b(X)",
    "forall X. (b(X) /\\ sing(X) -> exists Y. Y child_1 X)",
    "exists X. ~empty(X) /\\ ~(exists Y. X child_1 Y)",
    "existsfin X. (existsfin Y. X child_1 Y) /\\ (existsfin Z. X child_2 Z)",
    "exists X. forall Y. Y sub X",
    "forallfin X. exists Y. X sub Y /\\ a(Y)",
    "~(existsfin X. a(X) /\\ b(X))",
    "exists X. (a(X) -> b(X))",
    "existsfin X. existsfin Y. X sub Y /\\ ~(Y sub X) /\\ b(Y)",
    "U F. existsfin G. G child_1 F",
    "exists X. X child_1 X",
    "forall X. forall Y. X child_1 Y -> a(X)",
    "exists X. sing(X) /\\ (exists Y. X child_2 Y /\\ b(Y))",
    "existsfin X. big(X) /\\ (forall Y. Y sub X -> a(Y))",
};

std::vector<Formula> corpus() {
  std::vector<Formula> out;
  for (const char* s : kCorpus) out.push_back(parse_formula(s));
  return out;
}

std::vector<Formula> sentences() {
  std::vector<Formula> out;
  for (const auto& f : corpus())
    if (f->free.empty()) out.push_back(f);
  return out;
}

const std::vector<FiniteTree>& grid() {
  static const std::vector<FiniteTree> g = all_trees(kGridNodes, kAB, 2);
  return g;
}

struct Outcome {
  bool pass = true;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt_seconds(double s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1fs", s);
  return buf;
}

// 1. direct phenotype = Comp of the children's phenotypes = compositional phenotype.
Outcome compositionality() {
  auto t0 = std::chrono::steady_clock::now();
  size_t checks = 0;
  auto fs = corpus();
  for (const auto& f : fs) {
    PhenotypeAlgebra alg(f);
    for (const auto& t : grid()) {
      PhenotypeAlgebra::DirectPht top(alg, t);
      std::vector<std::unique_ptr<PhenotypeAlgebra::DirectPht>> subs;
      for (const auto& c : t.children) subs.push_back(std::make_unique<PhenotypeAlgebra::DirectPht>(alg, c));
      for (const auto& v : all_valuations(t, f->free)) {
        PhtId d = top.eval(alg.root(), v);
        std::vector<PhtId> kids;
        for (size_t i = 0; i < t.children.size(); ++i)
          kids.push_back(subs[i]->eval(alg.root(), restrict_valuation(v, {static_cast<int>(i + 1)})));
        std::set<std::string> R;
        for (const auto& [x, s] : v)
          if (s.count({})) R.insert(x);
        if (alg.comp(alg.root(), t.label, R, kids) != d)
          return {false, "comp mismatch: " + to_string(f) + " on " + to_string(t)};
        if (alg.compositional(t, v) != d) return {false, "compositional mismatch: " + to_string(f) + " on " + to_string(t)};
        ++checks;
      }
    }
  }
  double s = seconds_since(t0);
  std::string detail = std::to_string(fs.size()) + " formulas, " + std::to_string(grid().size()) + " trees, " +
                       std::to_string(checks) + " valuations, " + fmt_seconds(s) + " (limit " +
                       fmt_seconds(kCompositionalitySeconds) + ")";
  return {s < kCompositionalitySeconds, detail};
}

// 2. tv of the direct phenotype is the truth value.
Outcome soundness_of_tv() {
  size_t checks = 0;
  for (const auto& f : corpus()) {
    PhenotypeAlgebra alg(f);
    for (const auto& t : grid()) {
      PhenotypeAlgebra::DirectPht top(alg, t);
      DirectEvaluator ev(t);
      for (const auto& v : all_valuations(t, f->free)) {
        if (alg.tv(top.eval(alg.root(), v)) != ev.eval(f, v))
          return {false, "tv mismatch: " + to_string(f) + " on " + to_string(t)};
        ++checks;
      }
    }
  }
  return {true, std::to_string(checks) + " (formula, tree, valuation) triples"};
}

// 3. compiled acceptance of the processed root label, and of the complement sentence.
Outcome compiler_end_to_end() {
  size_t n = 0;
  for (const auto& f : sentences()) {
    CompiledChecker k = compile_sentence(f, kAB, 2);
    CompiledChecker c = compile_sentence(f_not(f), kAB, 2);
    for (const auto& t : grid()) {
      bool want = eval_direct(f, t);
      if (k.accepts(k.root_letter(t)) != want) return {false, "compiled: " + to_string(f) + " on " + to_string(t)};
      if (c.accepts(c.root_letter(t)) == want)
        return {false, "complement: " + to_string(f) + " on " + to_string(t)};
    }
    ++n;
  }
  return {true, std::to_string(n) + " sentences and complements on " + std::to_string(grid().size()) + " trees"};
}

// a[T0, a[T1, ...]] with T0 = c, Ti = b[T(i-1)], built without reduction.
FiniteTree g1_tree(size_t i, size_t height) {
  FiniteTree ti("c");
  for (size_t k = 0; k < i; ++k) ti = FiniteTree("b", {ti});
  if (height == 0) return FiniteTree("a", {ti});
  return FiniteTree("a", {ti, g1_tree(i + 1, height - 1)});
}

FiniteTree cut_at(const FiniteTree& t, size_t d) {
  if (d == 0) return t.children.empty() ? t : FiniteTree(kCut);
  FiniteTree s(t.label);
  for (const auto& c : t.children) s.children.push_back(cut_at(c, d - 1));
  return s;
}

bool all_labels(const FiniteTree& t, const Letter& a) {
  if (t.label != a) return false;
  for (const auto& c : t.children)
    if (!all_labels(c, a)) return false;
  return true;
}

// 4. the scheme G1 and the automaton A1 on full binary trees.
Outcome worked_examples() {
  Scheme g = parse_scheme(
      "nonterminal N : o -> o = \\x:o. a[x, N b[x]];\n"
      "nonterminal M : o = N c;\n"
      "start M;\n");
  for (size_t d = 0; d <= kPrefixDepth; ++d) {
    auto p = boehm_prefix(g, d);
    if (!p.unproven.empty() || p.tree != cut_at(g1_tree(0, d + 1), d))
      return {false, "G1 prefix at depth " + std::to_string(d) + ": " + to_string(p.tree)};
  }
  for (int i = 0; i <= 4; ++i) {
    FiniteTree out = apply_uprefix_finite(a1(), full_binary(i));
    if (!all_labels(out, "a|11")) return {false, "A1 on B" + std::to_string(i) + ": " + to_string(out)};
  }
  return {true, "G1 to depth " + std::to_string(kPrefixDepth) + ", A1 on B0..B4"};
}

// 5. U-prefix values on regular trees: direct engine against the SUP route.
Outcome cross_engine() {
  auto t0 = std::chrono::steady_clock::now();
  std::mt19937 rng(20);
  std::map<int, size_t> seen;
  for (size_t k = 0; k < kCrossEnginePairs; ++k) {
    auto a = random_uprefix(rng, 4, kAB, 2, 6 + rng() % 20);
    auto r = random_regular(rng, 5, kAB, 2);
    auto direct = uprefix_values_regular(a, r);
    auto via = uprefix_values_via_sup(a, r);
    for (const auto& c : reachable_classes(r)) {
      if (via.at(c) != direct.at(c)) return {false, "pair " + std::to_string(k) + " class " + c};
      for (int v : direct.at(c)) ++seen[v];
    }
  }
  double s = seconds_since(t0);
  std::string detail = std::to_string(kCrossEnginePairs) + " pairs, values 0/1/2 seen " + std::to_string(seen[0]) +
                       "/" + std::to_string(seen[1]) + "/" + std::to_string(seen[2]) + ", " + fmt_seconds(s) +
                       " (limit " + fmt_seconds(kCrossEngineSeconds) + ")";
  return {s < kCrossEngineSeconds, detail};
}

// 6. U on regular trees, with the run-importance trend on unfoldings.
Outcome regular_u() {
  Formula u = parse_formula("U F. a(F)");
  if (!check_regular(u, spine_a())) return {false, "U F. a(F) false on the a-spine"};
  for (const auto& t : grid())
    if (check_regular(u, regular_of(t)) || eval_direct(u, t)) return {false, "U F. a(F) true on " + to_string(t)};
  if (uprefix_values_regular(pumping(), spine_with_leaf()).at("U") != std::vector<int>{2})
    return {false, "pumping automaton on a[U, L]: f(p) != 2"};
  for (const auto& [c, f] : uprefix_values_regular(a1(), binary_a()))
    if (f != std::vector<int>{0, 0}) return {false, "A1 on the binary a-tree: class " + c + " not all-zero"};
  size_t prev = 0;
  for (size_t d = 2; d <= kUnfoldDepth; ++d) {
    auto s = run_stats_finite(pumping(), unfold(spine_with_leaf(), d), "p");
    if (!s.exists || !s.max_importance || *s.max_importance <= prev)
      return {false, "run importance does not grow at depth " + std::to_string(d)};
    prev = *s.max_importance;
  }
  for (size_t d = 1; d <= kUnfoldDepth; ++d)
    for (const char* q : {"qlf", "qfin"})
      if (run_stats_finite(a1(), unfold(binary_a(), d), q).exists)
        return {false, std::string("A1 has a ") + q + " run on the binary unfolding at depth " + std::to_string(d)};
  return {true, "spine, grid, f(p)=2, all-zero A1, unfoldings to depth " + std::to_string(kUnfoldDepth) +
                    " (pumping importance reaches " + std::to_string(prev) + ")"};
}

std::vector<std::pair<std::string, NestedAutomaton>> round_trip_suite() {
  std::vector<std::pair<std::string, NestedAutomaton>> out;
  out.push_back({"A1", NestedAutomaton{{a1()}}});
  out.push_back({"pumping", NestedAutomaton{{pumping()}}});
  UPrefixAutomaton none;
  none.alphabet = Alphabet(kAB);
  none.states = {"p"};
  out.push_back({"empty-delta", NestedAutomaton{{none}}});

  MSOAutomaton m;
  m.alphabet = Alphabet(kAB);
  m.states = {"q", "r"};
  m.sentences = {parse_formula("existsfin X. b(X) /\\ ~empty(X)"),
                 parse_formula("exists X. (a(X) /\\ sing(X) /\\ ~(existsfin Y. Y child_1 X))")};
  out.push_back({"mso-two-states", NestedAutomaton{{m}}});

  MSOAutomaton ch;
  ch.alphabet = Alphabet(kAB);
  ch.states = {"q"};
  ch.sentences = {parse_formula("exists X. exists Y. X child_2 Y")};
  out.push_back({"mso-child", NestedAutomaton{{ch}}});

  UPrefixAutomaton p;
  p.alphabet = Alphabet(kAB);
  p.states = {"p"};
  p.important = {"p"};
  p.delta = {{"p", "b", {}}, {"p", "a", {"p"}}, {"p", "a", {kTop, "p"}}};
  MSOAutomaton top;
  top.alphabet = layer_output(p);
  top.states = {"q"};
  top.sentences = {parse_formula("existsfin X. a|1(X) /\\ ~(existsfin Y. (b|1(Y) /\\ ~empty(Y)))")};
  out.push_back({"uprefix-then-mso", NestedAutomaton{{p, top}}});

  MSOAutomaton low;
  low.alphabet = Alphabet(kAB);
  low.states = {"q"};
  low.sentences = {parse_formula("exists X. b(X) /\\ ~empty(X)")};
  UPrefixAutomaton up;
  up.alphabet = layer_output(low);
  up.states = {"p"};
  up.important = {"p"};
  for (const auto& l : up.alphabet.letters()) {
    up.delta.push_back({"p", l, {}});
    if (letter_components(l)[1] == "1") up.delta.push_back({"p", l, {"p", kTop}});
  }
  out.push_back({"mso-then-uprefix", NestedAutomaton{{low, up}}});

  std::mt19937 rng(21);
  for (int k = 0; out.size() < 12; ++k)
    out.push_back({"random-" + std::to_string(k), NestedAutomaton{{random_uprefix(rng, 2, kAB, 2, 4 + rng() % 6)}}});
  return out;
}

// 7. back-translated formulas describe the root letter of the direct application.
Outcome round_trip() {
  auto suite = round_trip_suite();
  for (const auto& [name, n] : suite) {
    std::vector<Letter> sigma = n.input().letters();
    std::map<Letter, Formula> fs;
    for (const auto& eta : n.output().letters()) fs[eta] = automaton_to_formula(n, eta, 2);
    for (const auto& t : all_trees(kRoundTripNodes, sigma, 2)) {
      Letter root = apply_nested(n, t).label;
      for (const auto& [eta, f] : fs)
        if (eval_direct(f, t) != (eta == root)) return {false, name + ": " + eta + " on " + to_string(t)};
    }
  }
  return {true, std::to_string(suite.size()) + " nested automata on trees up to " + std::to_string(kRoundTripNodes) +
                    " nodes"};
}

const char* const kGrammars[] = {
    "class V = nd[C, AV]\nclass AV = a[V]\nclass C = c\nroot V\n",
    "class V = nd[C, AV]\nclass AV = a[BV]\nclass BV = b[V]\nclass C = c\nroot V\n",
    "class V = nd[AV, BV, C]\nclass AV = a[V]\nclass BV = b[V]\nclass C = c\nroot V\n",
    "class X = nd[A, B]\nclass A = nd[AA, C]\nclass AA = a[A]\nclass B = nd[BB, C]\nclass BB = b[B]\nclass C = c\nroot X\n",
    "class Y = f[A, B]\nclass A = nd[AA, C]\nclass AA = a[A]\nclass B = nd[BB, C]\nclass BB = b[B]\nclass C = c\nroot Y\n",
    "class R = a[B, C]\nclass B = b[C]\nclass C = c\nroot R\n",
    "class R = a[O]\nclass O = omega\nroot R\n",
    "class V = nd[C, AVV]\nclass AVV = a[V, V]\nclass C = c\nroot V\n",
    "class V = nd[C, BV]\nclass BV = b[V]\nclass C = a[L]\nclass L = c\nroot V\n",
    "class V = nd[K, AV]\nclass AV = a[V]\nclass K = #cut\nroot V\n",
    "class V = nd[C, AW]\nclass AW = a[W]\nclass W = nd[C, BV]\nclass BV = b[V]\nclass C = c\nroot V\n",
    "class V = nd[C, AV]\nclass AV = a[V, W]\nclass W = nd[C, BW]\nclass BW = b[W]\nclass C = c\nroot V\n",
    "class V = nd[V, C]\nclass C = c\nroot V\n",
    "class V = nd[C, F]\nclass F = b[V, A]\nclass A = a\nclass C = c\nroot V\n",
    "class R = a[V]\nclass V = nd[C, BV]\nclass BV = b[V]\nclass C = c\nroot R\n",
    "class Y = a[A, B]\nclass A = nd[AA, C]\nclass AA = a[A]\nclass B = b[B]\nclass C = c\nroot Y\n",
    "class V = nd[C, AV]\nclass AV = a[BV]\nclass BV = b[CV]\nclass CV = c[V]\nclass C = c\nroot V\n",
    "class V = nd[C, AB]\nclass AB = a[V, V2]\nclass V2 = nd[C, BB]\nclass BB = b[C]\nclass C = c\nroot V\n",
    "class R = b[V, V]\nclass V = nd[C, AV]\nclass AV = a[V]\nclass C = c\nroot R\n",
    "class V = nd[O, AV]\nclass AV = a[V, C]\nclass O = omega\nclass C = c\nroot V\n",
    "class V = nd[C, AV, BV]\nclass AV = a[V, V]\nclass BV = b[C]\nclass C = nd[L, V]\nclass L = c\nroot V\n",
    "class R = nd[AR, BR]\nclass AR = a[AR2]\nclass AR2 = nd[AR, L]\nclass BR = b[BR2]\nclass BR2 = nd[BR, L]\nclass L = c\nroot R\n",
};

// 8. SUP against derivation enumeration, single letters and letter sets.
Outcome sup_oracle() {
  const std::vector<std::vector<Letter>> queries{{"a"}, {"b"}, {"c"}, {"a", "b"}, {"a", "c"}, {"b", "c"}, {"a", "b", "c"}};
  size_t checks = 0, positive = 0, joint = 0, grammars = 0;
  for (const char* text : kGrammars) {
    NdGrammar g = nd_grammar(parse_regular(text));
    for (const auto& A : queries) {
      auto s = sup(g, std::set<Letter>(A.begin(), A.end()));
      for (size_t x = 0; x < g.size(); ++x) {
        auto m = best_min_counts(g, x, A, kSupLong);
        bool grows = m[kSupLong] > m[kSupShort];
        if (s.at(g.names[x]) != grows)
          return {false, "grammar " + std::to_string(grammars) + " class " + g.names[x] + " letters " +
                             std::to_string(A.size())};
        ++checks;
        positive += grows;
        joint += grows && A.size() > 1;
      }
    }
    ++grammars;
  }
  return {true, std::to_string(grammars) + " grammars, " + std::to_string(checks) + " class queries (" +
                    std::to_string(positive) + " unbounded, " + std::to_string(joint) + " of them multi-letter)"};
}

// 9. relativized formula at a singleton = the formula on that subtree.
Outcome relativization() {
  size_t checks = 0;
  for (const auto& phi : sentences()) {
    Formula hat = relativize(phi, 2);
    for (const auto& t : grid()) {
      DirectEvaluator ev(t);
      for (const auto& u : nodes_of(t)) {
        if (ev.eval(hat, Valuation{{hat->free[0], {u}}}) != eval_direct(phi, subtree(t, u)))
          return {false, to_string(phi) + " on " + to_string(t) + " at " + path_to_string(u)};
        ++checks;
      }
    }
  }
  return {true, std::to_string(checks) + " (sentence, tree, node) triples"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"compositionality", compositionality},
      {"soundness-of-tv", soundness_of_tv},
      {"compiler-end-to-end", compiler_end_to_end},
      {"worked-examples", worked_examples},
      {"cross-engine", cross_engine},
      {"regular-u-semantics", regular_u},
      {"round-trip", round_trip},
      {"sup-oracle", sup_oracle},
      {"relativization", relativization},
  };
  bool all = true;
  int k = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    auto t0 = std::chrono::steady_clock::now();
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all = all && o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << ++k << " " << name << ": " << o.detail << " [" << fmt_seconds(seconds_since(t0))
              << "]" << std::endl;
  }
  return all ? 0 : 1;
}

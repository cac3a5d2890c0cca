#include <gtest/gtest.h>

#include "msou/transduce.hpp"
#include "support.hpp"

using namespace msou;
using namespace msou::testing;

namespace {

Transducer identity_transducer(std::vector<Letter> sigma, size_t m) {
  Transducer tr;
  tr.alphabet = sigma;
  tr.max_arity = m;
  tr.states = {"q"};
  tr.initial = "q";
  for (const auto& a : sigma)
    for (size_t r = 0; r <= m; ++r) {
      Rhs h = Rhs::node(a);
      for (size_t i = 1; i <= r; ++i) h.children.push_back(Rhs::var(static_cast<int>(i), "q"));
      tr.delta[{"q", a, r}] = h;
    }
  return tr;
}

/// With `keep_all`, every argument occurs in every right-hand side (no subtree is deleted).
Transducer random_transducer(std::mt19937& rng, const std::vector<Letter>& sigma, size_t m, bool keep_all = false) {
  Transducer tr;
  tr.alphabet = sigma;
  tr.max_arity = m;
  tr.states = {"s0", "s1"};
  tr.initial = "s0";
  const std::vector<Letter> out{"a", "b", "c"};
  for (const auto& q : tr.states)
    for (const auto& a : sigma)
      for (size_t r = 0; r <= m; ++r) {
        std::function<Rhs(int)> gen = [&](int depth) {
          Rhs h = Rhs::node(out[rng() % out.size()]);
          size_t k = depth > 0 ? rng() % 3 : 0;
          for (size_t j = 0; j < k; ++j) {
            if (r > 0 && rng() % 2)
              h.children.push_back(Rhs::var(static_cast<int>(1 + rng() % r), tr.states[rng() % 2]));
            else
              h.children.push_back(gen(depth - 1));
          }
          return h;
        };
        Rhs h = gen(2);
        if (keep_all)
          for (size_t i = 1; i <= r; ++i) h.children.push_back(Rhs::var(static_cast<int>(i), tr.states[rng() % 2]));
        tr.delta[{q, a, r}] = h;
      }
  return tr;
}

/// Equal wherever neither side has been cut.
bool compatible(const FiniteTree& s, const FiniteTree& t) {
  if (s.label == kCut || t.label == kCut) return true;
  if (s.label != t.label || s.children.size() != t.children.size()) return false;
  for (size_t i = 0; i < s.children.size(); ++i)
    if (!compatible(s.children[i], t.children[i])) return false;
  return true;
}

/// L(t) by explicit nd-resolution of a finite tree.
std::set<std::string> language(const FiniteTree& t, size_t cap = 5000) {
  std::function<std::vector<FiniteTree>(const FiniteTree&)> go = [&](const FiniteTree& s) {
    std::vector<FiniteTree> out;
    if (s.label == kOmega || s.label == kCut) return out;
    if (s.label == kNd) {
      for (const auto& c : s.children)
        for (auto& u : go(c)) out.push_back(std::move(u));
      return out;
    }
    out.push_back(FiniteTree(s.label));
    for (const auto& c : s.children) {
      auto sub = go(c);
      std::vector<FiniteTree> next;
      for (const auto& p : out)
        for (const auto& u : sub) {
          FiniteTree q = p;
          q.children.push_back(u);
          next.push_back(std::move(q));
        }
      out = std::move(next);
      if (out.size() > cap) throw std::runtime_error("language too large");
    }
    return out;
  };
  std::set<std::string> out;
  for (const auto& u : go(t)) out.insert(to_string(u));
  return out;
}

size_t count_label(const FiniteTree& t, const Letter& a) {
  size_t n = t.label == a;
  for (const auto& c : t.children) n += count_label(c, a);
  return n;
}

/// The tree a run describes: states on run nodes, T on the topmost top-marked nodes.
FiniteTree run_tree(const FiniteTree& t, const Run& run, const NodePath& u) {
  const auto& q = run.at(u);
  if (q == kTop) return FiniteTree(kTop);
  FiniteTree out(q);
  for (size_t i = 0; i < node_at(t, u).children.size(); ++i)
    out.children.push_back(run_tree(t, run, concat(u, {static_cast<int>(i + 1)})));
  return out;
}

FiniteTree relabel(const FiniteTree& t, const std::function<Letter(const Letter&)>& f) {
  FiniteTree out(f(t.label));
  for (const auto& c : t.children) out.children.push_back(relabel(c, f));
  return out;
}

/// Small nd-grammar: the last class is the leaf c, the others are letter nodes with
/// one or two children or nd choices.
RegularTree random_nd_tree(std::mt19937& rng, size_t max_classes) {
  RegularTree r;
  size_t n = 2 + rng() % (max_classes - 1);
  auto cls = [&] { return "c" + std::to_string(rng() % n); };
  for (size_t i = 0; i + 1 < n; ++i) {
    RegularRule rule;
    if (rng() % 2) {
      rule = {"nd", {cls(), rng() % 2 ? cls() : "c" + std::to_string(n - 1)}};
    } else {
      rule = {rng() % 2 ? "a" : "b", {}};
      for (size_t j = 0, k = 1 + rng() % 2; j < k; ++j) rule.children.push_back(cls());
    }
    r.rules["c" + std::to_string(i)] = rule;
  }
  r.rules["c" + std::to_string(n - 1)] = {"c", {}};
  r.root = "c0";
  return r;
}

RegularTree grammar_tree(const std::string& text) { return parse_regular(text); }

// V = nd[c, a[V]]
RegularTree v1() { return grammar_tree("class V = nd[C, AV]\nclass C = c\nclass AV = a[V]\nroot V\n"); }
// V2 = nd[c, a[b[V2]]]
RegularTree v2() {
  return grammar_tree("class V = nd[C, AV]\nclass C = c\nclass AV = a[BV]\nclass BV = b[V]\nroot V\n");
}

}  // namespace

TEST(ApplyTransducerFinite, Examples) {
  auto id = identity_transducer({"a", "b"}, 2);
  for (const auto& s : {"a", "a[b]", "b[a[b, b], a]"}) EXPECT_EQ(to_string(apply_transducer_finite(id, parse_tree(s))), s);

  Transducer rel = identity_transducer({"a"}, 1);
  for (auto& [k, h] : rel.delta) h.label = "b";
  EXPECT_EQ(to_string(apply_transducer_finite(rel, parse_tree("a[a]"))), "b[b]");

  Transducer dup;
  dup.alphabet = {"a"};
  dup.max_arity = 1;
  dup.states = {"q"};
  dup.initial = "q";
  dup.delta[{"q", "a", 0}] = parse_rhs("a");
  dup.delta[{"q", "a", 1}] = parse_rhs("c[$1:q, $1:q]");
  dup.validate();
  EXPECT_EQ(to_string(apply_transducer_finite(dup, parse_tree("a[a]"))), "c[a, a]");
}

TEST(ApplyTransducerFinite, Errors) {
  Transducer rel = identity_transducer({"a"}, 1);
  EXPECT_THROW(apply_transducer_finite(rel, parse_tree("b")), Error);
  EXPECT_THROW(apply_transducer_finite(rel, parse_tree("a[a, a]")), Error);
  rel.delta[{"q", "a", 0}] = Rhs::var(1, "q");
  EXPECT_THROW(rel.validate(), Error);
  rel.delta[{"q", "a", 0}] = parse_rhs("a[$1:q]");
  EXPECT_THROW(rel.validate(), Error);
}

TEST(ApplyTransducerFinite, TextRoundTrip) {
  std::string text =
      "states q p\ninitial q\nalphabet a b\nmax-arity 1\n"
      "(q, a, 0) -> a\n(q, a, 1) -> c[$1:p, $1:q]\n(p, a, 0) -> b\n(p, a, 1) -> b[$1:p]\n";
  Transducer tr = parse_transducer(text);
  EXPECT_EQ(parse_transducer(to_string(tr)).delta, tr.delta);
  EXPECT_EQ(to_string(apply_transducer_finite(tr, parse_tree("a[a]"))), "c[b, a]");
  EXPECT_THROW(parse_transducer("states q\n(q, a, 0) -> a\n"), Error);
}

TEST(ApplyTransducerFinite, DepthNeverShrinksWithoutDeletion) {
  std::mt19937 rng(21);
  for (int k = 0; k < 300; ++k) {
    auto tr = random_transducer(rng, {"a", "b"}, 2, true);
    auto t = random_tree(rng, 7, {"a", "b"}, 2);
    EXPECT_GE(tree_height(apply_transducer_finite(tr, t)), tree_height(t));
  }
}

TEST(ApplyTransducerRegular, Examples) {
  auto id = identity_transducer({"a", "b"}, 2);
  RegularTree r = spine_with_leaf();
  RegularTree img = apply_transducer_regular(id, r);
  EXPECT_EQ(img.rules.size(), r.rules.size());
  for (size_t d = 0; d <= 6; ++d) EXPECT_EQ(unfold(img, d), unfold(r, d));

  Transducer rel = identity_transducer({"w"}, 1);
  rel.alphabet = {"a"};
  rel.delta = {{{"q", "a", 1}, parse_rhs("b[$1:q]")}};
  RegularTree spine = apply_transducer_regular(rel, spine_a());
  EXPECT_EQ(spine.rules.size(), 1u);
  EXPECT_EQ(spine.rules.at(spine.root).label, "b");
  EXPECT_EQ(spine.rules.at(spine.root).children, std::vector<ClassId>{spine.root});
}

TEST(ApplyTransducerRegular, CoherentWithUnfoldings) {
  std::mt19937 rng(22);
  for (int k = 0; k < 200; ++k) {
    auto tr = random_transducer(rng, {"a", "b"}, 2);
    auto r = random_regular(rng, 4, {"a", "b"}, 2);
    auto img = apply_transducer_regular(tr, r);
    EXPECT_LE(img.rules.size(), tr.states.size() * r.rules.size() * tr.max_rhs_size());
    for (size_t d = 0; d <= 6; ++d) {
      auto lhs = unfold(img, d);
      auto rhs = apply_transducer_finite(tr, unfold(r, d));
      ASSERT_TRUE(compatible(lhs, rhs)) << to_string(r) << d << "\n" << to_string(lhs) << "\n" << to_string(rhs);
    }
    if (regular_is_finite(r))
      EXPECT_EQ(unfold(img, 64), apply_transducer_finite(tr, unfold(r, 64)));
  }
}

TEST(RunTransducer, A1Rules) {
  auto tr = run_transducer_of(a1(), {"a"}, 2);
  EXPECT_EQ(to_string(tr.rule("qfin", "a", 0)), "nd[1]");
  EXPECT_EQ(to_string(tr.rule("qlf", "a", 0)), "nd[0]");
  for (size_t r = 0; r <= 2; ++r) EXPECT_EQ(to_string(tr.rule(kTop, "a", r)), kTop);
  EXPECT_EQ(to_string(tr.rule(tr.initial, "a", 0)), "a[?[nd[0]], ?[nd[1]]]");
  EXPECT_EQ(to_string(tr.rule("qfin", "a", 1)), "nd[1[$1:qfin]]");
  auto lf1 = to_string(tr.rule("qlf", "a", 1));
  EXPECT_EQ(lf1, "nd[0[$1:qfin], 0[$1:qlf]]");
}

TEST(RunTransducer, RunsOnThreeNodeTree) {
  FiniteTree t = parse_tree("a[a, a]");
  auto a = a1();
  auto tr = run_transducer_of(a, {"a"}, 2, false);
  FiniteTree img = apply_transducer_finite(tr, t);
  for (size_t i = 0; i < a.states.size(); ++i) {
    auto lang = language(node_at(img, {3 + static_cast<int>(i), 1}));
    std::set<std::string> runs;
    for (const auto& run : enumerate_runs(a, t, a.states[i])) runs.insert(to_string(run_tree(t, run, {})));
    EXPECT_EQ(lang, runs) << a.states[i];
  }
  // qlf on a[a, a]: one child in either state, the other top-marked
  EXPECT_EQ(language(node_at(img, {3, 1})).size(), 4u);
}

TEST(RunTransducer, RunsCorrespondToLanguage) {
  std::mt19937 rng(23);
  size_t with_runs = 0, many = 0;
  for (int k = 0; k < 300; ++k) {
    auto a = random_uprefix(rng, 3, {"a", "b"}, 2, 6 + rng() % 14);
    auto t = random_tree(rng, 4, {"a", "b"}, 2);
    auto named = apply_transducer_finite(run_transducer_of(a, {"a", "b"}, 2, false), t);
    auto marked = apply_transducer_finite(run_transducer_of(a, {"a", "b"}, 2), t);
    for (const auto& u : nodes_of(t)) {
      const FiniteTree& s = node_at(t, u);
      int r = static_cast<int>(s.children.size());
      for (size_t i = 0; i < a.states.size(); ++i) {
        NodePath below = concat(u, {r + 1 + static_cast<int>(i), 1});
        std::set<std::string> runs;
        std::multiset<size_t> imp;
        std::set<std::string> marked_runs;
        std::set<std::pair<std::string, size_t>> distinct;
        for (const auto& run : enumerate_runs(a, s, a.states[i])) {
          FiniteTree rt = run_tree(s, run, {});
          if (runs.insert(to_string(rt)).second) imp.insert(run_importance(a, run));
          marked_runs.insert(to_string(relabel(rt, [&](const Letter& x) {
            return x == kTop ? x : a.important.count(x) ? Letter("1") : Letter("0");
          })));
        }
        auto lang = language(node_at(named, below));
        ASSERT_EQ(lang, runs);
        with_runs += !runs.empty();
        many += runs.size() > 1;
        std::multiset<size_t> imp_lang;
        for (const auto& x : lang) {
          size_t n = 0;
          for (const auto& q : a.important) n += count_label(parse_tree(x), q);
          imp_lang.insert(n);
        }
        EXPECT_EQ(imp_lang, imp);
        EXPECT_EQ(language(node_at(marked, below)), marked_runs);
      }
    }
  }
  EXPECT_GT(with_runs, 200u);
  EXPECT_GT(many, 50u);
}

TEST(NdNonempty, Examples) {
  EXPECT_TRUE(nd_nonempty(nd_grammar(v1())).at("V"));
  EXPECT_FALSE(nd_nonempty(nd_grammar(grammar_tree("class W = omega\nroot W\n"))).at("W"));
  auto w = nd_nonempty(nd_grammar(grammar_tree("class W = nd[AW]\nclass AW = a[W]\nroot W\n")));
  EXPECT_FALSE(w.at("W"));
  EXPECT_FALSE(w.at("AW"));
  EXPECT_FALSE(nd_nonempty(nd_grammar(grammar_tree("class W = nd\nroot W\n"))).at("W"));
}

TEST(NdNonempty, MatchesExplicitResolution) {
  std::mt19937 rng(24);
  for (int k = 0; k < 500; ++k) {
    auto t = random_tree(rng, 8, {"a", kNd, kOmega}, 3);
    auto ne = nd_nonempty(nd_grammar(regular_of(t)));
    for (const auto& u : nodes_of(t)) ASSERT_EQ(ne.at(class_of(u)), !language(node_at(t, u)).empty()) << to_string(t);
  }
}

TEST(Sup, Examples) {
  auto g1 = nd_grammar(v1());
  EXPECT_TRUE(sup(g1, {"a"}).at("V"));
  EXPECT_FALSE(sup(g1, {"b"}).at("V"));
  EXPECT_FALSE(sup(g1, {"c"}).at("V"));
  auto g2 = nd_grammar(v2());
  EXPECT_TRUE(sup(g2, {"a", "b"}).at("V"));
  EXPECT_FALSE(sup(g2, {"a", "c"}).at("V"));
  EXPECT_THROW(sup(g1, {}), Error);
  EXPECT_THROW(sup(g1, {kNd}), Error);

  // a-counts of the smallest derivations grow strictly
  auto m = best_min_counts(g1, g1.index.at("V"), {"a"}, 12);
  for (size_t s = 2; s <= 12; ++s) EXPECT_EQ(m[s], static_cast<int>(s) - 1);
  auto m2 = best_min_counts(g2, g2.index.at("V"), {"a", "b"}, 14);
  EXPECT_GT(m2[14], m2[7]);
  EXPECT_GT(m2[7], m2[3]);
}

TEST(Sup, UnboundedAlternativesAreNotSimultaneous) {
  // V = nd[a[V], b[V], c]: each letter alone is unbounded, and both together too via mixing.
  auto g = nd_grammar(grammar_tree("class V = nd[AV, BV, C]\nclass AV = a[V]\nclass BV = b[V]\nclass C = c\nroot V\n"));
  EXPECT_TRUE(sup(g, {"a", "b"}).at("V"));
  // X = nd[A, B] with A = a-chains and B = b-chains: never both at once.
  auto h = nd_grammar(grammar_tree(
      "class X = nd[A, B]\nclass A = nd[AA, C]\nclass AA = a[A]\nclass B = nd[BB, C]\nclass BB = b[B]\nclass C = c\nroot X\n"));
  EXPECT_TRUE(sup(h, {"a"}).at("X"));
  EXPECT_TRUE(sup(h, {"b"}).at("X"));
  EXPECT_FALSE(sup(h, {"a", "b"}).at("X"));
  // Y = f[A, B]: both grow in separate branches.
  auto y = nd_grammar(grammar_tree(
      "class Y = f[A, B]\nclass A = nd[AA, C]\nclass AA = a[A]\nclass B = nd[BB, C]\nclass BB = b[B]\nclass C = c\nroot Y\n"));
  EXPECT_TRUE(sup(y, {"a", "b"}).at("Y"));
}

TEST(Sup, SingleLetterAgreesWithLattice) {
  std::mt19937 rng(25);
  for (int k = 0; k < 500; ++k) {
    auto g = nd_grammar(random_regular(rng, 5, {"a", "b", kNd, kNd, kOmega}, 3));
    for (const Letter& a : {"a", "b"}) {
      auto single = detail::sup_single(g, a);
      auto multi = detail::sup_multi(g, {a});
      ASSERT_EQ(single, multi);
    }
  }
}

TEST(Sup, MatchesBruteForceTrend) {
  std::mt19937 rng(26);
  // Without a pumpable cycle the best min-count is reached by a tree with no class
  // repeated on a path: at most 15 nodes for 4 classes of arity <= 2. So a bounded
  // language has equal optima at sizes 15 and 30.
  const size_t n = 30;
  size_t positive = 0, joint = 0;
  for (int k = 0; k < 4000; ++k) {
    auto r = random_nd_tree(rng, 4);
    auto g = nd_grammar(r);
    for (const auto& A : std::vector<std::vector<Letter>>{{"a"}, {"b"}, {"a", "b"}}) {
      auto s = sup(g, std::set<Letter>(A.begin(), A.end()));
      for (size_t x = 0; x < g.size(); ++x) {
        auto m = best_min_counts(g, x, A, n);
        bool grows = m[n] > m[15];
        ASSERT_EQ(s.at(g.names[x]), grows) << to_string(g) << g.names[x] << " A size " << A.size();
        positive += grows;
        joint += grows && A.size() == 2;
      }
    }
  }
  EXPECT_GT(positive, 100u);
  EXPECT_GT(joint, 15u);
}

TEST(UPrefixViaSup, Examples) {
  EXPECT_EQ(uprefix_values_via_sup(pumping(), spine_with_leaf()), uprefix_values_regular(pumping(), spine_with_leaf()));
  EXPECT_EQ(uprefix_values_via_sup(pumping(), spine_with_leaf()).at("U"), std::vector<int>{2});
  auto f = uprefix_values_via_sup(a1(), binary_a());
  EXPECT_EQ(f.at("w"), (std::vector<int>{0, 0}));
  EXPECT_EQ(to_string(uprefix_via_sup(a1(), binary_a())), to_string(apply_uprefix_regular(a1(), binary_a())));
}

TEST(UPrefixViaSup, AgreesWithDirectEngine) {
  std::mt19937 rng(27);
  std::map<int, size_t> seen;
  for (int k = 0; k < 100; ++k) {
    auto a = random_uprefix(rng, 4, {"a", "b"}, 2, 6 + rng() % 20);
    auto r = random_regular(rng, 5, {"a", "b"}, 2);
    auto via = uprefix_values_via_sup(a, r);
    auto direct = uprefix_values_regular(a, r);
    for (const auto& c : reachable_classes(r)) {
      for (int v : direct.at(c)) ++seen[v];
      ASSERT_EQ(via.at(c), direct.at(c)) << to_string(r) << c;
    }
  }
  EXPECT_GT(seen[1], 20u);
  EXPECT_GT(seen[2], 20u);
}

TEST(UPrefixViaSup, AgreesOnLargerCases) {
  std::mt19937 rng(28);
  std::map<int, size_t> seen;
  for (int k = 0; k < 300; ++k) {
    auto a = random_uprefix(rng, 4, {"a", "b", "c"}, 3, 8 + rng() % 30);
    auto r = random_regular(rng, 8, {"a", "b", "c"}, 3);
    auto via = uprefix_values_via_sup(a, r);
    auto direct = uprefix_values_regular(a, r);
    for (const auto& c : reachable_classes(r)) {
      for (int v : direct.at(c)) ++seen[v];
      ASSERT_EQ(via.at(c), direct.at(c));
    }
  }
  EXPECT_GT(seen[1], 20u);
  EXPECT_GT(seen[2], 20u);
}

#include <gtest/gtest.h>

#include "msou/automata.hpp"
#include "support.hpp"

using namespace msou;
using namespace msou::testing;

namespace {

bool all_labels(const FiniteTree& t, const Letter& a) {
  if (t.label != a) return false;
  return std::all_of(t.children.begin(), t.children.end(), [&](const FiniteTree& c) { return all_labels(c, a); });
}

MSOAutomaton a2() {
  MSOAutomaton m;
  m.alphabet = Alphabet({"a"}).out(2);
  m.states = {"q1", "q2"};
  m.sentences = {
      parse_formula("existsfin R. existsfin C. ((R child_2 C /\\ a|11(C)) /\\ ~(existsfin P. (P child_1 R \\/ P child_2 R)))"),
      parse_formula("exists B. ((a|20(B) /\\ ~(a(B) /\\ b(B))) /\\ forallfin S. ((S sub B /\\ ~(a(S) /\\ b(S))) -> "
                    "existsfin C. (C sub B /\\ ~(a(C) /\\ b(C)) /\\ (S child_1 C \\/ S child_2 C))))")};
  return m;
}

}  // namespace

TEST(RunStats, A1OnB2) {
  FiniteTree b2 = full_binary(2);
  auto fin = run_stats_finite(a1(), b2, "qfin");
  EXPECT_TRUE(fin.exists);
  EXPECT_EQ(fin.max_importance, 7u);
  auto lf = run_stats_finite(a1(), b2, "qlf");
  EXPECT_TRUE(lf.exists);
  ASSERT_TRUE(lf.max_importance.has_value());
  EXPECT_GE(*lf.max_importance, 1u);
  size_t brute = 0;
  for (const auto& r : enumerate_runs(a1(), b2, "qlf")) brute = std::max(brute, run_importance(a1(), r));
  EXPECT_EQ(*lf.max_importance, brute);
}

TEST(RunStats, NoRun) {
  UPrefixAutomaton a;
  a.alphabet = Alphabet({"a", "b"});
  a.states = {"p"};
  a.delta = {{"p", "a", {}}};
  auto s = run_stats_finite(a, parse_tree("b"), "p");
  EXPECT_FALSE(s.exists);
  EXPECT_FALSE(s.max_importance.has_value());
}

TEST(ApplyUPrefixFinite, A1OnFullBinaryTrees) {
  for (int i = 0; i <= 4; ++i) EXPECT_TRUE(all_labels(apply_uprefix_finite(a1(), full_binary(i)), "a|11")) << i;
  EXPECT_EQ(to_string(apply_uprefix_finite(a1(), parse_tree("a"))), "a|11");
}

TEST(ApplyUPrefixFinite, EmptyDelta) {
  UPrefixAutomaton a;
  a.alphabet = Alphabet({"a", "b"});
  a.states = {"p", "q"};
  EXPECT_EQ(to_string(apply_uprefix_finite(a, parse_tree("a[b, a]"))), "a|00[b|00, a|00]");
}

TEST(ApplyUPrefixFinite, RejectsForeignLetters) {
  EXPECT_THROW(apply_uprefix_finite(a1(), parse_tree("a[b]")), Error);
}

TEST(Runs, WitnessesAreValidAndMaximal) {
  std::mt19937 rng(3);
  for (int k = 0; k < 200; ++k) {
    auto a = random_uprefix(rng, 3, {"a", "b"}, 2);
    auto t = random_tree(rng, 5, {"a", "b"}, 2);
    for (const auto& q : a.states) {
      auto runs = enumerate_runs(a, t, q);
      auto st = run_stats_finite(a, t, q);
      ASSERT_EQ(st.exists, !runs.empty());
      size_t best = 0;
      for (const auto& r : runs) {
        ASSERT_TRUE(validate_run(a, t, r));
        best = std::max(best, run_importance(a, r));
      }
      if (!st.exists) continue;
      EXPECT_EQ(*st.max_importance, best);
      auto w = witness_run(a, t, q);
      ASSERT_TRUE(w.has_value());
      EXPECT_TRUE(validate_run(a, t, *w));
      EXPECT_EQ(w->at({}), q);
      EXPECT_EQ(run_importance(a, *w), best);
    }
  }
}

TEST(Runs, ValidateRejectsBrokenRuns) {
  FiniteTree t = parse_tree("a[a]");
  EXPECT_TRUE(validate_run(a1(), t, {{{}, "qfin"}, {{1}, "qfin"}}));
  EXPECT_FALSE(validate_run(a1(), t, {{{}, "qfin"}, {{1}, kTop}}));
  EXPECT_FALSE(validate_run(a1(), t, {{{}, kTop}, {{1}, "qfin"}}));
  EXPECT_TRUE(validate_run(a1(), t, {{{}, kTop}, {{1}, kTop}}));
}

TEST(ApplyUPrefixRegular, Examples) {
  auto f = uprefix_values_regular(pumping(), spine_with_leaf());
  EXPECT_EQ(f.at("U"), std::vector<int>{2});
  EXPECT_EQ(f.at("L"), std::vector<int>{1});
  auto g = uprefix_values_regular(a1(), binary_a());
  EXPECT_EQ(g.at("w"), (std::vector<int>{0, 0}));
  // a spine has no leaf and no finite run either
  EXPECT_EQ(uprefix_values_regular(a1(), spine_a()).at("w"), (std::vector<int>{0, 0}));
}

TEST(ApplyUPrefixRegular, PumpingGrowsWithDepth) {
  size_t prev = 0;
  for (size_t d = 2; d <= 8; ++d) {
    FiniteTree t = unfold(spine_with_leaf(), d);
    auto s = run_stats_finite(pumping(), t, "p");
    ASSERT_TRUE(s.exists);
    EXPECT_GT(*s.max_importance, prev);
    prev = *s.max_importance;
  }
  for (size_t d = 1; d <= 8; ++d) {
    auto s = run_stats_finite(a1(), unfold(binary_a(), d), "qlf");
    EXPECT_FALSE(s.exists);
  }
}

TEST(ApplyUPrefixRegular, FiniteDenotationsAgree) {
  std::mt19937 rng(11);
  for (int k = 0; k < 200; ++k) {
    auto a = random_uprefix(rng, 3, {"a", "b"}, 2);
    auto t = random_tree(rng, 6, {"a", "b"}, 2);
    RegularTree r = regular_of(t);
    auto fr = uprefix_values_regular(a, r);
    auto ff = uprefix_values_finite(a, t);
    for (const auto& u : nodes_of(t)) ASSERT_EQ(fr.at(class_of(u)), ff.at(u));
  }
}

TEST(ApplyUPrefixRegular, CoherentWithUnfoldings) {
  std::mt19937 rng(12);
  for (int k = 0; k < 150; ++k) {
    auto a = random_uprefix(rng, 3, {"a", "b"}, 2);
    auto r = random_regular(rng, 4, {"a", "b"}, 2);
    auto fr = uprefix_values_regular(a, r).at(r.root);
    size_t witness_depth = r.rules.size() * a.states.size() + 1;
    for (size_t d = 0; d <= 8; ++d) {
      auto ff = uprefix_values_finite(a, unfold(r, d)).at({});
      for (size_t q = 0; q < ff.size(); ++q) {
        ASSERT_GE(fr[q], ff[q]);
        if (d >= witness_depth && fr[q] >= 1) EXPECT_EQ(ff[q], 1);
      }
    }
  }
}

TEST(ApplyMsoFinite, Examples) {
  MSOAutomaton m;
  m.alphabet = Alphabet({"a", "b"});
  m.states = {"q"};
  m.sentences = {parse_formula("existsfin R. (a(R) /\\ ~(a(R) /\\ b(R)) /\\ ~(existsfin P. P child_1 R))")};
  EXPECT_EQ(to_string(apply_mso_finite(m, parse_tree("a[b]"))), "a|1[b|0]");
  MSOAutomaton e;
  e.alphabet = Alphabet({"a", "b"});
  EXPECT_EQ(to_string(apply_mso_finite(e, parse_tree("a[b]"))), "a|[b|]");
  DerivedContext c = DerivedContext::from_alphabet({"a", "b"}, 1);
  FreshNames fresh;
  fresh.reserve("F");
  MSOAutomaton s;
  s.alphabet = Alphabet({"a", "b"});
  s.states = {"q"};
  s.sentences = {f_existsfin("F", f_and(f_sing("F", c, fresh), f_label("b", "F")))};
  EXPECT_EQ(to_string(apply_mso_finite(s, parse_tree("a[b]"))), "a|1[b|1]");
}

TEST(ApplyMsoFinite, EnginesAgree) {
  std::mt19937 rng(13);
  for (int k = 0; k < 60; ++k) {
    FormulaGen gen{rng};
    MSOAutomaton m;
    m.alphabet = Alphabet({"a", "b"});
    m.states = {"q", "r"};
    m.sentences = {gen.gen({}, 3), gen.gen({}, 3)};
    auto t = random_tree(rng, 6, {"a", "b"}, 2);
    EXPECT_EQ(apply_mso_finite(m, t, MsoEngine::Phenotype), apply_mso_finite(m, t, MsoEngine::Direct));
  }
}

TEST(ApplyMsoRegular, Examples) {
  MSOAutomaton m;
  m.alphabet = Alphabet({"a", "b"});
  m.states = {"q"};
  m.sentences = {parse_formula("U F. a(F)")};
  auto spine = spine_a();
  EXPECT_EQ(apply_mso_regular(m, spine).rule("w").label, "a|1");
  m.sentences = {parse_formula("existsfin F. (b(F) /\\ ~(a(F) /\\ b(F)))")};
  EXPECT_EQ(apply_mso_regular(m, spine).rule("w").label, "a|0");
  m.sentences = {parse_formula("exists Z. b(Z)")};
  EXPECT_THROW(apply_mso_regular(m, spine), Error);
}

TEST(ApplyMsoRegular, FiniteDenotationsAgree) {
  std::mt19937 rng(14);
  int checked = 0;
  for (int k = 0; k < 200 && checked < 60; ++k) {
    FormulaGen gen{rng};
    Formula f = gen.gen({}, 3);
    try {
      check_finite_fragment(f);
    } catch (const Error&) {
      continue;
    }
    ++checked;
    MSOAutomaton m;
    m.alphabet = Alphabet({"a", "b"});
    m.states = {"q"};
    m.sentences = {f};
    auto t = random_tree(rng, 5, {"a", "b"}, 2);
    RegularTree r = regular_of(t);
    auto fr = mso_values_regular(m, r);
    auto ff = mso_values_finite(m, t);
    for (const auto& u : nodes_of(t)) ASSERT_EQ(fr.at(class_of(u)), ff.at(u));
  }
  EXPECT_GE(checked, 30);
}

TEST(Nested, ExampleTwoLayers) {
  NestedAutomaton n{{a1(), a2()}};
  FiniteTree out = apply_nested(n, full_binary(2));
  EXPECT_EQ(out.children[0].children[0].label, "a|11|00");
  EXPECT_EQ(out.children[1].children[1].label, "a|11|00");
  EXPECT_EQ(out.children[0].label, "a|11|10");
  EXPECT_EQ(out.label, "a|11|10");
  EXPECT_TRUE(same_shape(out, full_binary(2)));
}

TEST(Nested, SingleLayerIsTheLayer) {
  NestedAutomaton n{{a1()}};
  EXPECT_EQ(apply_nested(n, full_binary(3)), apply_uprefix_finite(a1(), full_binary(3)));
  EXPECT_EQ(apply_nested(n, spine_with_leaf()), apply_uprefix_regular(a1(), spine_with_leaf()));
}

TEST(Nested, ChainingViolation) {
  NestedAutomaton n{{a1(), a1()}};
  EXPECT_THROW(n.validate(), Error);
  EXPECT_THROW(apply_nested(n, parse_tree("a")), Error);
}

TEST(Nested, ShapeIsPreservedThroughLayers) {
  std::mt19937 rng(15);
  for (int k = 0; k < 40; ++k) {
    auto a = random_uprefix(rng, 2, {"a", "b"}, 2);
    UPrefixAutomaton b;
    b.alphabet = layer_output(a);
    b.states = {"s"};
    b.delta = {{"s", "*|*", {}}, {"s", "*|1?", {"s"}}, {"s", "*|*", {kTop, "s"}}};
    if (a.states.size() == 1) b.delta[1].letter = "*|1";
    MSOAutomaton m;
    m.alphabet = layer_output(b);
    m.states = {"t"};
    m.sentences = {parse_formula("existsfin F. *|*|1(F)")};
    NestedAutomaton n{{a, b, m}};
    auto t = random_tree(rng, 7, {"a", "b"}, 2);
    EXPECT_TRUE(same_shape(apply_nested(n, t), t));
    auto r = random_regular(rng, 3, {"a", "b"}, 2);
    auto out = apply_nested(n, r);
    EXPECT_TRUE(same_shape(unfold(out, 5), unfold(r, 5)));
  }
}

TEST(BackTranslation, SingleMsoLayer) {
  MSOAutomaton m;
  m.alphabet = Alphabet({"a", "b"});
  m.states = {"q", "r"};
  m.sentences = {parse_formula("existsfin X. b(X)"), parse_formula("exists X. (a(X) /\\ ~(existsfin Y. Y child_1 X))")};
  NestedAutomaton n{{m}};
  std::map<Letter, Formula> fs;
  for (const auto& eta : n.output().letters()) fs[eta] = automaton_to_formula(n, eta, 2);
  // output digits range over {0,1,2} for every layer kind
  EXPECT_EQ(fs.size(), 18u);
  for (const auto& t : all_trees(4, {"a", "b"}, 2)) {
    Letter root = apply_nested(n, t).label;
    for (const auto& [eta, f] : fs) ASSERT_EQ(eval_direct(f, t), eta == root) << eta << " " << to_string(t);
  }
}

TEST(BackTranslation, RoundTripA1) {
  NestedAutomaton n{{a1()}};
  auto letters = n.output().letters();
  EXPECT_EQ(letters.size(), 9u);
  std::map<Letter, Formula> fs;
  for (const auto& eta : letters) fs[eta] = automaton_to_formula(n, eta, 2);
  for (const auto& t : all_trees(5, {"a"}, 2)) {
    Letter root = apply_nested(n, t).label;
    for (const auto& eta : letters) ASSERT_EQ(eval_direct(fs[eta], t), eta == root) << eta << " " << to_string(t);
  }
}

TEST(BackTranslation, EmptyDeltaIsValid) {
  UPrefixAutomaton a;
  a.alphabet = Alphabet({"a", "b"});
  a.states = {"p"};
  Formula f = automaton_to_formula(NestedAutomaton{{a}}, "a|0", 2);
  Formula g = automaton_to_formula(NestedAutomaton{{a}}, "b|0", 2);
  for (const auto& t : all_trees(4, {"a", "b"}, 2)) EXPECT_EQ(eval_direct(f_or(f, g), t), true);
}

TEST(BackTranslation, RoundTripTwoLayers) {
  UPrefixAutomaton a;
  a.alphabet = Alphabet({"a", "b"});
  a.states = {"p"};
  a.important = {"p"};
  a.delta = {{"p", "b", {}}, {"p", "a", {"p"}}, {"p", "a", {kTop, "p"}}};
  MSOAutomaton m;
  m.alphabet = layer_output(a);
  m.states = {"q"};
  m.sentences = {parse_formula("existsfin X. a|1(X) /\\ ~(existsfin Y. (b|1(Y) /\\ ~(a(Y) /\\ b(Y))))")};
  NestedAutomaton n{{a, m}};
  auto letters = n.output().letters();
  std::map<Letter, Formula> fs;
  for (const auto& eta : letters) fs[eta] = automaton_to_formula(n, eta, 2);
  for (const auto& t : all_trees(4, {"a", "b"}, 2)) {
    Letter root = apply_nested(n, t).label;
    for (const auto& eta : letters) ASSERT_EQ(eval_direct(fs[eta], t), eta == root) << eta << " " << to_string(t);
  }
}

TEST(TextFormat, RoundTrip) {
  NestedAutomaton n{{a1(), a2()}};
  std::string text = to_string(n);
  NestedAutomaton back = parse_automaton(text);
  EXPECT_EQ(to_string(back), text);
  EXPECT_EQ(apply_nested(back, full_binary(2)), apply_nested(n, full_binary(2)));
  EXPECT_THROW(parse_automaton("layer uprefix\nstates p\nend\n"), Error);
  EXPECT_THROW(parse_automaton("layer uprefix\nalphabet a\nstates p\ntrans q a ->\nend\n"), Error);
}

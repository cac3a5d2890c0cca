#include <gtest/gtest.h>

#include "msou/logic.hpp"
#include "support.hpp"

using namespace msou;
using namespace msou::testing;

namespace {

// Set-based reading of the semantic clauses, without bitmasks or memoization.
bool naive_eval(const Formula& f, const FiniteTree& t, Valuation v) {
  auto nodes = nodes_of(t);
  switch (f->kind) {
    case FKind::Label:
      for (const auto& u : v.at(f->x))
        if (node_at(t, u).label != f->letter) return false;
      return true;
    case FKind::Child: {
      const auto& x = v.at(f->x);
      const auto& y = v.at(f->y);
      if (x.size() != 1 || y.size() != 1) return false;
      NodePath c = *x.begin();
      c.push_back(f->index);
      return c == *y.begin();
    }
    case FKind::Sub: {
      const auto& x = v.at(f->x);
      const auto& y = v.at(f->y);
      return std::includes(y.begin(), y.end(), x.begin(), x.end());
    }
    case FKind::And:
      return naive_eval(f->a, t, v) && naive_eval(f->b, t, v);
    case FKind::Not:
      return !naive_eval(f->a, t, v);
    case FKind::U:
      return false;
    default:
      for (uint64_t m = 0; m < (uint64_t{1} << nodes.size()); ++m) {
        NodeSet s;
        for (size_t i = 0; i < nodes.size(); ++i)
          if (m >> i & 1) s.insert(nodes[i]);
        v[f->x] = s;
        if (naive_eval(f->a, t, v)) return true;
      }
      return false;
  }
}

Valuation val(std::initializer_list<std::pair<const std::string, NodeSet>> l) { return Valuation(l); }

}  // namespace

TEST(CheckWf, Examples) {
  EXPECT_NO_THROW(check_wf(parse_formula("U F. a(F)")));
  try {
    check_wf(f_u("F", f_and(f_label("a", "F"), f_label("b", "Z"))), {{"Z", VarKind::Inf}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("'Z'"), std::string::npos);
  }
  EXPECT_THROW(check_wf(f_quant(FKind::Exists, "F", f_label("a", "F"), VarKind::Fin)), Error);
  EXPECT_THROW(parse_formula("exists F:fin. a(F)"), Error);
  EXPECT_NO_THROW(parse_formula("free G:fin; U F. (a(F) /\\ G sub F)"));
  EXPECT_THROW(parse_formula("free G:inf; U F. (a(F) /\\ G sub F)"), Error);
}

TEST(FormulaSyntax, RoundTrip) {
  std::mt19937 rng(1);
  for (int k = 0; k < 200; ++k) {
    FormulaGen gen{rng};
    Formula f = gen.gen({{"X", VarKind::Inf}, {"G", VarKind::Fin}}, 4);
    FormulaFile ff{{{"X", VarKind::Inf}, {"G", VarKind::Fin}}, f};
    FormulaFile back = parse_formula_file(to_string(ff));
    EXPECT_TRUE(formula_eq(back.body, f)) << to_string(f);
  }
  Formula sugar = parse_formula("forall X. a(X) \\/ b(X) -> a(X)");
  EXPECT_EQ(sugar->kind, FKind::Not);
}

TEST(EvalDirect, Examples) {
  FiniteTree t = parse_tree("a[b]");
  EXPECT_TRUE(eval_direct(parse_formula("a(X)"), t, val({{"X", {{}}}})));
  EXPECT_TRUE(eval_direct(parse_formula("X child_1 Y"), t, val({{"X", {{}}}, {"Y", {{1}}}})));
  for (const auto& s : all_trees(4, {"a", "b"}, 2)) EXPECT_FALSE(eval_direct(parse_formula("U F. a(F)"), s));
  EXPECT_THROW(eval_direct(parse_formula("a(X)"), t, {}), Error);
}

TEST(EvalDirect, NodeCap) {
  FiniteTree big("a");
  for (int i = 0; i < 17; ++i) big.children.push_back(FiniteTree("b"));
  EXPECT_NO_THROW(eval_direct(parse_formula("a(X)"), big, val({{"X", {{}}}})));
  try {
    eval_direct(parse_formula("exists Z. a(Z)"), big);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Resource);
  }
}

TEST(EvalDirect, AgreesWithNaiveSemantics) {
  std::mt19937 rng(42);
  for (int k = 0; k < 300; ++k) {
    FormulaGen gen{rng};
    Formula f = gen.gen({{"X", VarKind::Inf}, {"G", VarKind::Fin}}, 3);
    FiniteTree t = random_tree(rng, 4, {"a", "b"}, 2);
    auto vs = all_valuations(t, {"X", "G"});
    for (size_t i = 0; i < vs.size(); i += 7) EXPECT_EQ(eval_direct(f, t, vs[i]), naive_eval(f, t, vs[i])) << to_string(f);
  }
}

TEST(EvalDirect, ConnectivesAndQuantifierKinds) {
  std::mt19937 rng(43);
  for (int k = 0; k < 200; ++k) {
    FormulaGen gen{rng};
    gen.allow_u = false;
    Formula p = gen.gen({{"X", VarKind::Inf}}, 2), q = gen.gen({{"X", VarKind::Inf}}, 2);
    FiniteTree t = random_tree(rng, 5, {"a", "b"}, 2);
    for (const auto& v : all_valuations(t, {"X"})) {
      EXPECT_EQ(eval_direct(f_and(p, q), t, v), eval_direct(p, t, v) && eval_direct(q, t, v));
      EXPECT_EQ(eval_direct(f_not(p), t, v), !eval_direct(p, t, v));
    }
    // exists and existsfin coincide on finite trees
    Formula body = gen.gen({{"X", VarKind::Inf}, {"W", VarKind::Inf}}, 2);
    EXPECT_EQ(eval_direct(f_exists("W", body), t, {{"X", {}}}),
              eval_direct(f_quant(FKind::ExistsFin, "W", body, VarKind::Fin), t, {{"X", {}}}));
    // U is false on finite trees
    Formula ub = gen.gen({{"F", VarKind::Fin}}, 2);
    EXPECT_FALSE(eval_direct(f_u("F", ub), t));
  }
}

TEST(Derived, Examples) {
  FreshNames fresh;
  DerivedContext c = DerivedContext::from_alphabet({"a", "b"}, 2);
  FiniteTree t = parse_tree("a[b]");
  EXPECT_TRUE(eval_direct(f_sing("X", c, fresh), t, val({{"X", {{}}}})));
  EXPECT_FALSE(eval_direct(f_sing("X", c, fresh), t, val({{"X", {}}})));
  EXPECT_TRUE(eval_direct(f_big("X", c, fresh), t, val({{"X", {{}, {1}}}})));
  EXPECT_THROW(DerivedContext::from_alphabet({"a"}), Error);
}

TEST(Derived, MatchSetSemantics) {
  DerivedContext c = DerivedContext::from_alphabet({"a", "b"}, 2);
  FreshNames fresh;
  Formula empty = f_empty("X", c), big = f_big("X", c, fresh), sing = f_sing("X", c, fresh);
  Formula child = f_child_any("X", "Y", 2);
  Formula labels = f_labels_in("X", {"a"}, c, fresh);
  Formula below = f_below("X", "Y", 2, fresh);
  for (const auto& t : all_trees(4, {"a", "b"}, 2)) {
    for (const auto& v : all_valuations(t, {"X", "Y"})) {
      const auto& x = v.at("X");
      const auto& y = v.at("Y");
      EXPECT_EQ(eval_direct(empty, t, v), x.empty());
      EXPECT_EQ(eval_direct(big, t, v), x.size() >= 2);
      EXPECT_EQ(eval_direct(sing, t, v), x.size() == 1);
      bool ch = x.size() == 1 && y.size() == 1 && y.begin()->size() == x.begin()->size() + 1 &&
                is_prefix(*x.begin(), *y.begin());
      EXPECT_EQ(eval_direct(child, t, v), ch);
      bool all_a = std::all_of(x.begin(), x.end(), [&](const NodePath& u) { return node_at(t, u).label == "a"; });
      EXPECT_EQ(eval_direct(labels, t, v), all_a);
      bool under = std::all_of(y.begin(), y.end(), [&](const NodePath& w) {
        return std::any_of(x.begin(), x.end(), [&](const NodePath& u) { return is_prefix(u, w); });
      });
      if (x.size() == 1) EXPECT_EQ(eval_direct(below, t, v), under);
    }
  }
}

TEST(Derived, ParsedMacrosMatchSetSemantics) {
  // macros use letters of the formula, or a/b when it has none; c is absent from the trees
  Formula e = parse_formula("free X:inf; empty(X)");
  Formula s = parse_formula("free X:inf; sing(X) /\\ ~c(X) \\/ sing(X)");
  Formula b = parse_formula("free X:inf; big(X)");
  EXPECT_EQ(letters_of(parse_formula("free X:inf; c(X) /\\ empty(X)")), (std::set<Letter>{"a", "c"}));
  for (const auto& t : all_trees(4, {"a", "b"}, 2)) {
    for (const auto& v : all_valuations(t, {"X"})) {
      size_t n = v.at("X").size();
      EXPECT_EQ(eval_direct(e, t, v), n == 0);
      EXPECT_EQ(eval_direct(s, t, v), n == 1);
      EXPECT_EQ(eval_direct(b, t, v), n >= 2);
    }
  }
  // macro-bound names never capture user variables
  Formula f = parse_formula("exists Y_0. big(Y_0) /\\ a(Y_0)");
  EXPECT_TRUE(eval_direct(f, parse_tree("a[a]")));
  EXPECT_FALSE(eval_direct(f, parse_tree("a[b]")));
}

namespace {

Formula root_labeled_a() {
  FreshNames fresh;
  fresh.reserve("R");
  fresh.reserve("P");
  DerivedContext c = DerivedContext::from_alphabet({"a", "b"}, 2);
  return f_exists("R", f_and(f_and(f_sing("R", c, fresh), f_label("a", "R")),
                             f_not(f_exists("P", f_child_any("P", "R", 2)))));
}

}  // namespace

TEST(Relativize, Examples) {
  Formula hat = relativize(root_labeled_a(), 2);
  ASSERT_EQ(hat->free, std::vector<std::string>{"X"});
  EXPECT_TRUE(eval_direct(hat, parse_tree("b[a]"), val({{"X", {{1}}}})));
  EXPECT_FALSE(eval_direct(hat, parse_tree("b[a]"), val({{"X", {{}}}})));
  EXPECT_TRUE(eval_direct(hat, parse_tree("b[a]"), val({{"X", {}}})));
  EXPECT_TRUE(eval_direct(hat, parse_tree("a[a]"), val({{"X", {{}, {1}}}})));
  EXPECT_THROW(relativize(parse_formula("a(X)"), 2), Error);
}

TEST(Relativize, SingletonsAgreeWithSubtrees) {
  std::mt19937 rng(77);
  std::vector<Formula> corpus{root_labeled_a(), parse_formula("exists Z. a(Z)"),
                              parse_formula("forall Z. (a(Z) \\/ b(Z))"),
                              parse_formula("exists Z. exists W. (Z child_2 W /\\ b(W))")};
  while (corpus.size() < 30) {
    FormulaGen gen{rng};
    corpus.push_back(gen.gen({}, 3));
  }
  auto trees = all_trees(4, {"a", "b"}, 2);
  for (int k = 0; k < 12; ++k) trees.push_back(random_tree(rng, 6, {"a", "b"}, 2));
  for (const auto& phi : corpus) {
    check_wf(phi);
    Formula hat = relativize(phi, 2);
    for (const auto& t : trees) {
      DirectEvaluator ev(t);
      for (const auto& u : nodes_of(t))
        EXPECT_EQ(ev.eval(hat, val({{"X", {u}}})), eval_direct(phi, subtree(t, u))) << to_string(phi) << " on "
                                                                                     << to_string(t);
    }
  }
}

TEST(RestrictValuation, Examples) {
  auto r = restrict_valuation(val({{"X", {{1}, {1, 2}}}}), {1});
  EXPECT_EQ(r.at("X"), (NodeSet{{}, {2}}));
  EXPECT_TRUE(restrict_valuation(val({{"X", {{2}}}}), {1}).at("X").empty());
  auto e = restrict_valuation(val({{"X", {}}, {"Y", {}}}), {2, 1});
  EXPECT_TRUE(e.at("X").empty() && e.at("Y").empty());
}

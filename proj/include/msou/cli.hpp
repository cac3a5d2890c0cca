#pragma once

// Command implementations behind the msou command-line tool. Each command reads its
// inputs from an Invocation and returns the text to print plus an exit code.

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "msou/automata.hpp"
#include "msou/compile.hpp"
#include "msou/lambda.hpp"
#include "msou/logic.hpp"
#include "msou/phenotype.hpp"
#include "msou/transduce.hpp"
#include "msou/tree.hpp"

namespace msou::cli {

using json = nlohmann::json;

struct Invocation {
  std::string command;
  std::string tree, regular, scheme, formula, automaton, transducer;
  std::vector<Letter> letters;
  std::vector<std::string> background;
  std::string mode;  // finite | regular | approx; empty means inferred from the inputs
  size_t depth = 6;
  size_t budget = kDefaultBudget;
  size_t max_arity = 2;
  std::string format = "term";  // term | json | dot
  uint64_t seed = 1;
  size_t random = 0;
  size_t max_nodes = 6;
  bool skip_compile = false;
  bool emit_mso = false;
  bool grammar = false;
};

struct Outcome {
  int code = 0;
  std::string out;
};

inline int exit_code(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::Input:
      return 2;
    case ErrorKind::Resource:
      return 3;
    default:
      return 4;
  }
}

/// The argument itself, or the contents of the file it names.
inline std::string load_text(const std::string& arg) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(arg, ec)) return arg;
  std::ifstream in(arg);
  if (!in) throw input_error("cannot read '" + arg + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

enum class Verdict { False, True, Unknown };

inline std::string to_string(Verdict v) {
  return v == Verdict::True ? "true" : v == Verdict::False ? "false" : "unknown";
}

/// Class name that regular_of gives to node u.
inline std::string class_of_path(const NodePath& u) { return "n" + (u.empty() ? std::string() : path_to_string(u)); }

// ---------------------------------------------------------------------------
// Bounded-depth checking of scheme trees

struct ApproxResult {
  Verdict verdict = Verdict::Unknown;
  FiniteTree prefix;
  size_t frontier = 0;  // #cut leaves plus omega leaves without a divergence proof
  std::vector<std::pair<std::string, bool>> completions;  // name, verdict under it
};

/// Evaluates a finite-quantifier sentence on a Bohm-tree prefix. Every frontier node is
/// completed uniformly by each candidate: the omega leaf, and for each letter a of the
/// scheme the regular tree w = a[w, ..., w] at each arity a takes in the prefix (every
/// arity up to max_arity when a does not occur). The verdict is definite only when all
/// candidates agree.
inline ApproxResult check_approx(const Formula& f, const Scheme& g, size_t depth, size_t budget, size_t max_arity) {
  if (!f->free.empty()) throw input_error("check needs a sentence; '" + f->free[0] + "' is free");
  ApproxResult res;
  BoehmPrefix p = boehm_prefix(g, depth, budget);
  res.prefix = p.tree;
  std::set<NodePath> frontier(p.unproven.begin(), p.unproven.end());
  std::map<Letter, std::set<size_t>> arities;
  for (const auto& u : nodes_of(p.tree)) {
    const auto& n = node_at(p.tree, u);
    if (n.label == kCut) frontier.insert(u);
    else if (!frontier.count(u)) arities[n.label].insert(n.children.size());
  }
  res.frontier = frontier.size();
  if (frontier.empty()) {
    res.verdict = eval_direct(f, p.tree) ? Verdict::True : Verdict::False;
    return res;
  }
  check_finite_fragment(f);
  std::vector<std::pair<std::string, RegularRule>> candidates{{kOmega, {kOmega, {}}}};
  for (const auto& a : scheme_alphabet(g).letters) {
    if (a == kOmega) continue;
    std::set<size_t> rs = arities[a];
    if (rs.empty())
      for (size_t r = 0; r <= max_arity; ++r) rs.insert(r);
    for (size_t r : rs) candidates.push_back({a + "/" + std::to_string(r), {a, std::vector<ClassId>(r, "k")}});
  }
  RegularTree base = regular_of(p.tree);
  bool any_true = false, any_false = false;
  for (const auto& [name, rule] : candidates) {
    RegularTree r = base;
    r.rules["k"] = rule;
    for (const auto& u : frontier) r.rules.at(class_of_path(u)) = rule;
    bool v = check_regular(f, r);
    res.completions.push_back({name, v});
    (v ? any_true : any_false) = true;
  }
  res.verdict = any_true && any_false ? Verdict::Unknown : any_true ? Verdict::True : Verdict::False;
  return res;
}

// ---------------------------------------------------------------------------
// Commands

namespace detail {

inline FormulaFile need_formula(const Invocation& inv) {
  if (inv.formula.empty()) throw input_error("--formula is required");
  return parse_formula_file(load_text(inv.formula));
}

inline Formula need_sentence(const Invocation& inv) {
  auto ff = need_formula(inv);
  if (!ff.body->free.empty()) throw input_error("a sentence is required; '" + ff.body->free[0] + "' is free");
  return ff.body;
}

inline std::string show_tree(const FiniteTree& t, const std::string& format) {
  if (format == "dot") return to_dot(t);
  if (format == "json") return json{{"tree", to_string(t)}}.dump(2) + "\n";
  return to_string(t) + "\n";
}

inline std::string show_regular(const RegularTree& r, const std::string& format) {
  if (format == "dot") return to_dot(r);
  if (format == "json") {
    json classes = json::object();
    for (const auto& [c, rule] : r.rules) classes[c] = {{"label", rule.label}, {"children", rule.children}};
    return json{{"root", r.root}, {"classes", classes}}.dump(2) + "\n";
  }
  return to_string(r);
}

inline void no_dot(const Invocation& inv) {
  if (inv.format == "dot") throw input_error("--format dot is not available for '" + inv.command + "'");
}

inline std::string infer_mode(const Invocation& inv) {
  int given = !inv.tree.empty() + !inv.regular.empty() + !inv.scheme.empty();
  if (given != 1) throw input_error("give exactly one of --tree, --regular, --scheme");
  std::string m = inv.mode;
  if (m.empty()) m = !inv.tree.empty() ? "finite" : !inv.regular.empty() ? "regular" : "approx";
  if (m == "finite" && inv.tree.empty()) throw input_error("mode finite needs --tree");
  if (m == "regular" && inv.regular.empty()) throw input_error("mode regular needs --regular");
  if (m == "approx" && inv.scheme.empty()) throw input_error("mode approx needs --scheme");
  if (m != "finite" && m != "regular" && m != "approx") throw input_error("unknown mode '" + m + "'");
  return m;
}

inline std::vector<Letter> compile_letters(const Formula& f, const std::vector<Letter>& extra) {
  std::set<Letter> s(extra.begin(), extra.end());
  for (const auto& a : letters_of(f))
    if (!is_pattern(a)) s.insert(a);
  if (s.empty()) s.insert("a");
  return {s.begin(), s.end()};
}

inline Outcome verdict_outcome(Verdict v, bool exit_on_false, json report, const std::string& format) {
  Outcome o;
  o.code = exit_on_false && v == Verdict::False ? 1 : 0;
  report["verdict"] = to_string(v);
  if (format == "json") {
    o.out = report.dump(2) + "\n";
    return o;
  }
  o.out = to_string(v) + "\n";
  for (const auto& [k, val] : report.items())
    if (k != "verdict") o.out += k + ": " + (val.is_string() ? val.get<std::string>() : val.dump()) + "\n";
  return o;
}

}  // namespace detail

inline Outcome cmd_check(const Invocation& inv) {
  detail::no_dot(inv);
  Formula f = detail::need_sentence(inv);
  std::string mode = detail::infer_mode(inv);
  json rep;
  rep["mode"] = mode;
  Verdict v = Verdict::Unknown;
  if (mode == "finite") {
    FiniteTree t = parse_tree(load_text(inv.tree));
    v = eval_direct(f, t) ? Verdict::True : Verdict::False;
    auto labels = labels_of(t);
    if (inv.skip_compile) {
      rep["compiled"] = "skipped";
    } else {
      try {
        auto k = compile_sentence(f, detail::compile_letters(f, {labels.begin(), labels.end()}),
                                  std::max(inv.max_arity, max_arity(t)));
        bool c = k.check(t);
        if (c != (v == Verdict::True)) throw internal_error("compiled checker disagrees with direct evaluation");
        rep["compiled"] = "agrees";
        rep["layers"] = k.nested.layers.size();
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::Resource) throw;
        rep["compiled"] = std::string("skipped: ") + e.what();
      }
    }
  } else if (mode == "regular") {
    v = check_regular(f, parse_regular(load_text(inv.regular))) ? Verdict::True : Verdict::False;
  } else {
    Scheme g = parse_scheme(load_text(inv.scheme));
    auto r = check_approx(f, g, inv.depth, inv.budget, inv.max_arity);
    v = r.verdict;
    rep["depth"] = inv.depth;
    rep["frontier"] = r.frontier;
    json cs = json::object();
    for (const auto& [name, b] : r.completions) cs[name] = b;
    if (!r.completions.empty()) rep["completions"] = cs;
  }
  return detail::verdict_outcome(v, true, rep, inv.format);
}

/// Direct evaluation only; with --random N, compares the direct evaluator with the
/// phenotype engine on N random trees.
inline Outcome cmd_oracle(const Invocation& inv) {
  detail::no_dot(inv);
  if (inv.random == 0) {
    if (inv.tree.empty()) throw input_error("oracle needs --tree or --random");
    Formula f = detail::need_sentence(inv);
    FiniteTree t = parse_tree(load_text(inv.tree));
    return detail::verdict_outcome(eval_direct(f, t) ? Verdict::True : Verdict::False, false, json::object(),
                                   inv.format);
  }
  Formula f = detail::need_sentence(inv);
  auto letters = detail::compile_letters(f, inv.letters);
  std::mt19937 rng(static_cast<std::mt19937::result_type>(inv.seed));
  PhenotypeAlgebra alg(f);
  size_t yes = 0;
  for (size_t k = 0; k < inv.random; ++k) {
    std::function<FiniteTree(size_t)> gen = [&](size_t budget) {
      FiniteTree t(letters[rng() % letters.size()]);
      if (budget <= 1) return t;
      size_t r = rng() % (inv.max_arity + 1);
      --budget;
      for (size_t i = 0; i < r && budget > 0; ++i) {
        size_t b = 1 + rng() % budget;
        t.children.push_back(gen(b));
        budget -= b;
      }
      return t;
    };
    FiniteTree t = gen(inv.max_nodes);
    bool d = eval_direct(f, t);
    if (d != alg.tv(alg.direct(t, {}))) throw internal_error("engines disagree on " + to_string(t));
    yes += d;
  }
  json rep{{"trees", inv.random}, {"true", yes}, {"seed", inv.seed}, {"engines", "agree"}};
  if (inv.format == "json") return {0, rep.dump(2) + "\n"};
  return {0, "trees: " + std::to_string(inv.random) + "\ntrue: " + std::to_string(yes) + "\nseed: " +
                 std::to_string(inv.seed) + "\nengines: agree\n"};
}

inline Outcome cmd_compile(const Invocation& inv) {
  detail::no_dot(inv);
  Formula f = detail::need_sentence(inv);
  CompileOptions o;
  o.max_arity = inv.max_arity;
  for (const auto& b : inv.background) o.background.push_back(parse_regular(load_text(b)));
  Compiler c(f, detail::compile_letters(f, inv.letters), o);
  CompiledChecker k = c.sentence();
  std::string text = to_string(k.nested);
  std::string report = compile_report(c, k);
  std::string mso = inv.emit_mso ? to_string(c.mso_equivalent()) : "";
  if (inv.format == "json") {
    json j{{"automaton", text}, {"accepting", k.accepting}, {"report", report}};
    if (inv.emit_mso) j["mso"] = mso;
    return {0, j.dump(2) + "\n"};
  }
  std::string out = text;
  out += "// accepting";
  for (const auto& p : k.accepting) out += " " + p;
  out += "\n";
  std::istringstream rs(report);
  for (std::string line; std::getline(rs, line);) out += "// " + line + "\n";
  if (inv.emit_mso) out += "// mso " + mso + "\n";
  return {0, out};
}

inline Outcome cmd_run_automaton(const Invocation& inv) {
  if (inv.automaton.empty()) throw input_error("--automaton is required");
  NestedAutomaton n = parse_automaton(load_text(inv.automaton));
  if (!inv.tree.empty() == !inv.regular.empty()) throw input_error("give exactly one of --tree, --regular");
  if (!inv.tree.empty()) return {0, detail::show_tree(apply_nested(n, parse_tree(load_text(inv.tree))), inv.format)};
  return {0, detail::show_regular(apply_nested(n, parse_regular(load_text(inv.regular))), inv.format)};
}

inline Outcome cmd_expand(const Invocation& inv) {
  if (inv.scheme.empty()) throw input_error("--scheme is required");
  BoehmPrefix p = boehm_prefix(parse_scheme(load_text(inv.scheme)), inv.depth, inv.budget);
  if (inv.format == "json") {
    std::vector<std::string> un;
    for (const auto& u : p.unproven) un.push_back(path_to_string(u));
    return {0, json{{"tree", to_string(p.tree)}, {"unproven", un}}.dump(2) + "\n"};
  }
  std::string out = detail::show_tree(p.tree, inv.format);
  if (inv.format == "term" && !p.unproven.empty()) {
    out += "// unproven omega at";
    for (const auto& u : p.unproven) out += " " + path_to_string(u);
    out += "\n";
  }
  return {0, out};
}

inline Outcome cmd_phenotype(const Invocation& inv) {
  detail::no_dot(inv);
  auto ff = detail::need_formula(inv);
  PhenotypeAlgebra alg(ff.body);
  if (!inv.tree.empty()) {
    std::string s = alg.show(alg.direct(parse_tree(load_text(inv.tree)), {}));
    if (inv.format == "json") return {0, json{{"phenotype", s}}.dump(2) + "\n"};
    return {0, s + "\n"};
  }
  if (inv.regular.empty()) throw input_error("give --tree or --regular");
  if (!ff.body->free.empty()) throw input_error("regular phenotypes need a sentence");
  auto p = pht_regular(alg, parse_regular(load_text(inv.regular)));
  json j = json::object();
  std::string out;
  for (const auto& [c, id] : p) {
    j[c] = alg.show(id);
    out += c + ": " + alg.show(id) + (alg.tv(id) ? "  [true]" : "  [false]") + "\n";
  }
  if (inv.format == "json") return {0, j.dump(2) + "\n"};
  return {0, out};
}

/// With --transducer, applies it. With --automaton, prints the run-enumerating
/// transducer for its first U-prefix layer.
inline Outcome cmd_transduce(const Invocation& inv) {
  if (!inv.automaton.empty()) {
    detail::no_dot(inv);
    NestedAutomaton n = parse_automaton(load_text(inv.automaton));
    const UPrefixAutomaton* a = nullptr;
    for (const auto& l : n.layers)
      if ((a = std::get_if<UPrefixAutomaton>(&l))) break;
    if (!a) throw input_error("the automaton has no U-prefix layer");
    std::vector<Letter> sigma = inv.letters;
    if (sigma.empty()) sigma = a->alphabet.letters();
    Transducer tr = run_transducer_of(*a, sigma, inv.max_arity);
    if (inv.format == "json") return {0, json{{"transducer", to_string(tr)}}.dump(2) + "\n"};
    return {0, to_string(tr)};
  }
  if (inv.transducer.empty()) throw input_error("--transducer or --automaton is required");
  Transducer tr = parse_transducer(load_text(inv.transducer));
  if (!inv.tree.empty() == !inv.regular.empty()) throw input_error("give exactly one of --tree, --regular");
  if (!inv.tree.empty())
    return {0, detail::show_tree(apply_transducer_finite(tr, parse_tree(load_text(inv.tree))), inv.format)};
  return {0, detail::show_regular(apply_transducer_regular(tr, parse_regular(load_text(inv.regular))), inv.format)};
}

/// SUP per class for --letters, or with --automaton the U-prefix values via SUP.
inline Outcome cmd_sup(const Invocation& inv) {
  if (inv.regular.empty()) throw input_error("--regular is required");
  RegularTree r = parse_regular(load_text(inv.regular));
  if (!inv.automaton.empty()) {
    NestedAutomaton n = parse_automaton(load_text(inv.automaton));
    if (n.layers.size() != 1 || !std::holds_alternative<UPrefixAutomaton>(n.layers[0]))
      throw input_error("sup --automaton needs a single U-prefix layer");
    return {0, detail::show_regular(uprefix_via_sup(std::get<UPrefixAutomaton>(n.layers[0]), r), inv.format)};
  }
  detail::no_dot(inv);
  if (inv.letters.empty()) throw input_error("--letters is required");
  NdGrammar g = nd_grammar(r);
  auto s = sup(g, std::set<Letter>(inv.letters.begin(), inv.letters.end()));
  auto ne = nd_nonempty(g);
  if (inv.format == "json") {
    json j = json::object();
    for (const auto& [c, b] : s) j[c] = {{"sup", b}, {"nonempty", ne.at(c)}};
    json out{{"classes", j}};
    if (inv.grammar) out["grammar"] = to_string(g);
    return {0, out.dump(2) + "\n"};
  }
  std::string out = inv.grammar ? to_string(g) : "";
  for (const auto& [c, b] : s)
    out += c + ": sup " + (b ? "true" : "false") + ", nonempty " + (ne.at(c) ? "true" : "false") + "\n";
  return {0, out};
}

inline Outcome run(const Invocation& inv) {
  if (inv.format != "term" && inv.format != "json" && inv.format != "dot")
    throw input_error("unknown format '" + inv.format + "'");
  const std::string& c = inv.command;
  if (c == "check") return cmd_check(inv);
  if (c == "oracle") return cmd_oracle(inv);
  if (c == "compile") return cmd_compile(inv);
  if (c == "run-automaton") return cmd_run_automaton(inv);
  if (c == "expand") return cmd_expand(inv);
  if (c == "phenotype") return cmd_phenotype(inv);
  if (c == "transduce") return cmd_transduce(inv);
  if (c == "sup") return cmd_sup(inv);
  throw input_error("unknown command '" + c + "'");
}

}  // namespace msou::cli

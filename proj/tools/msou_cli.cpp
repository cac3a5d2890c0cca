// msou: command-line front end. Inputs given as flags are read from a file when one
// exists at that path, otherwise taken literally.

#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "msou/cli.hpp"

namespace {

using msou::cli::Invocation;

void add_common(CLI::App* sub, Invocation& inv) {
  sub->add_option("--format", inv.format, "output format")->check(CLI::IsMember({"term", "json", "dot"}));
  sub->add_option("--max-arity", inv.max_arity, "maximal arity of trees");
  sub->add_option("--seed", inv.seed, "seed for randomized runs");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MSO+U^fin checker, compiler and automaton tools"};
  app.require_subcommand(1);
  app.fallthrough();
  Invocation inv;
  std::string out_path;
  app.add_option("-o,--output", out_path, "write the result to this file");

  auto* check = app.add_subcommand("check", "evaluate a sentence on a finite, regular or scheme tree");
  check->add_option("--tree", inv.tree);
  check->add_option("--regular", inv.regular);
  check->add_option("--scheme", inv.scheme);
  check->add_option("--formula", inv.formula)->required();
  check->add_option("--mode", inv.mode)->check(CLI::IsMember({"finite", "regular", "approx"}));
  check->add_option("--depth", inv.depth, "prefix depth in approx mode");
  check->add_option("--budget", inv.budget, "reduction steps per head normalization");
  check->add_flag("--skip-compile", inv.skip_compile, "do not cross-check with the compiled automaton");

  auto* oracle = app.add_subcommand("oracle", "direct evaluation, or engine cross-check on random trees");
  oracle->add_option("--tree", inv.tree);
  oracle->add_option("--formula", inv.formula)->required();
  oracle->add_option("--random", inv.random, "number of random trees");
  oracle->add_option("--max-nodes", inv.max_nodes, "size of random trees");
  oracle->add_option("--letters", inv.letters, "extra letters for random trees")->delimiter(',');

  auto* compile = app.add_subcommand("compile", "compile a sentence to a nested automaton");
  compile->add_option("--formula", inv.formula)->required();
  compile->add_option("--letters,--alphabet", inv.letters, "input alphabet")->delimiter(',');
  compile->add_option("--background", inv.background, "regular trees to support in compiled regular checks");
  compile->add_flag("--emit-mso", inv.emit_mso, "also print the equivalent MSO sentence over the output alphabet");

  auto* run = app.add_subcommand("run-automaton", "apply a nested automaton");
  run->add_option("--automaton", inv.automaton)->required();
  run->add_option("--tree", inv.tree);
  run->add_option("--regular", inv.regular);

  auto* expand = app.add_subcommand("expand", "depth-bounded Bohm tree of a scheme");
  expand->add_option("--scheme", inv.scheme)->required();
  expand->add_option("--depth", inv.depth);
  expand->add_option("--budget", inv.budget);

  auto* pht = app.add_subcommand("phenotype", "phenotype of a formula on a tree");
  pht->add_option("--formula", inv.formula)->required();
  pht->add_option("--tree", inv.tree);
  pht->add_option("--regular", inv.regular);

  auto* transduce = app.add_subcommand("transduce", "apply a transducer, or print the run transducer of an automaton");
  transduce->add_option("--transducer", inv.transducer);
  transduce->add_option("--automaton", inv.automaton);
  transduce->add_option("--tree", inv.tree);
  transduce->add_option("--regular", inv.regular);
  transduce->add_option("--letters", inv.letters, "input alphabet of the run transducer")->delimiter(',');

  auto* sup = app.add_subcommand("sup", "simultaneous unboundedness per class of an nd-tree");
  sup->add_option("--regular", inv.regular)->required();
  sup->add_option("--letters", inv.letters)->delimiter(',');
  sup->add_option("--automaton", inv.automaton, "compute U-prefix values through SUP instead");
  sup->add_flag("--grammar", inv.grammar, "print the nd-grammar");

  for (auto* s : {check, oracle, compile, run, expand, pht, transduce, sup}) add_common(s, inv);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  inv.command = app.get_subcommands().front()->get_name();

  try {
    auto res = msou::cli::run(inv);
    if (out_path.empty()) {
      std::cout << res.out;
    } else {
      std::ofstream f(out_path);
      if (!f) {
        std::cerr << "error: cannot write '" << out_path << "'\n";
        return 2;
      }
      f << res.out;
    }
    return res.code;
  } catch (const msou::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return msou::cli::exit_code(e);
  } catch (const std::bad_alloc&) {
    std::cerr << "error: out of memory\n";
    return 3;
  }
}

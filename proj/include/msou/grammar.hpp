#pragma once

// Finite derivation grammars with marked productions: productivity and unbounded
// counts of marked steps. Shared by the regular-tree engines.

#include <algorithm>
#include <cstddef>
#include <functional>
#include <vector>

namespace msou {

struct CountingGrammar {
  struct Production {
    size_t lhs;
    bool important;
    std::vector<size_t> rhs;
  };

  size_t size = 0;
  std::vector<Production> prods;

  size_t add_nonterminal() { return size++; }
  void add(size_t lhs, bool important, std::vector<size_t> rhs) {
    prods.push_back({lhs, important, std::move(rhs)});
  }

  /// Nonterminals with at least one finite derivation.
  std::vector<bool> productive() const {
    std::vector<bool> ok(size, false);
    for (bool changed = true; changed;) {
      changed = false;
      for (const auto& p : prods)
        if (!ok[p.lhs] && std::all_of(p.rhs.begin(), p.rhs.end(), [&](size_t z) { return ok[z]; }))
          ok[p.lhs] = changed = true;
    }
    return ok;
  }

  /// Nonterminals with finite derivations using arbitrarily many important productions.
  std::vector<bool> unbounded() const {
    auto ok = productive();
    std::vector<const Production*> live;
    for (const auto& p : prods)
      if (ok[p.lhs] && std::all_of(p.rhs.begin(), p.rhs.end(), [&](size_t z) { return ok[z]; }))
        live.push_back(&p);
    // positive: some derivation uses at least one important step.
    std::vector<bool> positive(size, false);
    for (bool changed = true; changed;) {
      changed = false;
      for (const auto* p : live) {
        if (positive[p->lhs]) continue;
        if (p->important || std::any_of(p->rhs.begin(), p->rhs.end(), [&](size_t z) { return positive[z]; }))
          positive[p->lhs] = changed = true;
      }
    }
    // Edge lhs -> rhs[i] is heavy when going around it once can add an important step.
    std::vector<std::vector<std::pair<size_t, bool>>> adj(size);
    for (const auto* p : live)
      for (size_t i = 0; i < p->rhs.size(); ++i) {
        bool heavy = p->important;
        for (size_t j = 0; j < p->rhs.size() && !heavy; ++j)
          if (j != i && positive[p->rhs[j]]) heavy = true;
        adj[p->lhs].push_back({p->rhs[i], heavy});
      }
    auto comp = scc(adj);
    size_t ncomp = 0;
    for (size_t c : comp) ncomp = std::max(ncomp, c + 1);
    std::vector<bool> pump(ncomp, false);
    std::vector<std::vector<size_t>> members(ncomp);
    for (size_t u = 0; u < size; ++u) {
      members[comp[u]].push_back(u);
      for (auto [v, heavy] : adj[u])
        if (heavy && comp[u] == comp[v]) pump[comp[u]] = true;
    }
    // Tarjan numbers components in reverse topological order.
    std::vector<bool> res(ncomp, false);
    for (size_t c = 0; c < ncomp; ++c) {
      bool r = pump[c];
      for (size_t u : members[c])
        for (auto [v, h] : adj[u]) r = r || res[comp[v]];
      res[c] = r;
    }
    std::vector<bool> out(size);
    for (size_t u = 0; u < size; ++u) out[u] = res[comp[u]];
    return out;
  }

  /// Strongly connected components, numbered in reverse topological order.
  static std::vector<size_t> scc(const std::vector<std::vector<std::pair<size_t, bool>>>& adj) {
    size_t n = adj.size(), counter = 0, ncomp = 0;
    std::vector<size_t> index(n, SIZE_MAX), low(n, 0), comp(n, SIZE_MAX), stack;
    std::vector<bool> on(n, false);
    // iterative Tarjan: frames of (node, next edge)
    std::vector<std::pair<size_t, size_t>> frames;
    for (size_t s = 0; s < n; ++s) {
      if (index[s] != SIZE_MAX) continue;
      frames.push_back({s, 0});
      index[s] = low[s] = counter++;
      stack.push_back(s);
      on[s] = true;
      while (!frames.empty()) {
        auto& [u, e] = frames.back();
        if (e < adj[u].size()) {
          size_t v = adj[u][e++].first;
          if (index[v] == SIZE_MAX) {
            index[v] = low[v] = counter++;
            stack.push_back(v);
            on[v] = true;
            frames.push_back({v, 0});
          } else if (on[v]) {
            low[u] = std::min(low[u], index[v]);
          }
          continue;
        }
        size_t done = u;
        if (low[done] == index[done]) {
          for (;;) {
            size_t w = stack.back();
            stack.pop_back();
            on[w] = false;
            comp[w] = ncomp;
            if (w == done) break;
          }
          ++ncomp;
        }
        frames.pop_back();
        if (!frames.empty()) low[frames.back().first] = std::min(low[frames.back().first], low[done]);
      }
    }
    return comp;
  }
};

}  // namespace msou

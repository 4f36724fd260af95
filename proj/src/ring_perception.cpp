// SPDX-License-Identifier: Apache-2.0
//
// Smallest set of smallest rings as a minimum cycle basis: Horton candidate
// cycles from per-atom BFS trees, sorted by size, reduced over GF(2).

#include <algorithm>
#include <bit>
#include <cstdint>
#include <numeric>
#include <queue>
#include <set>

#include "mvae/smiles.hpp"

namespace mvae::smiles {

namespace {

using EdgeSet = std::vector<std::uint64_t>;

struct Candidate {
  std::vector<int> atoms;   // cycle order
  std::vector<int> sorted;  // for tie-breaking
  EdgeSet edges;
};

// Bonds that lie on at least one cycle (i.e. are not bridges).
std::vector<char> ring_bonds(const MoleculeGraph &g, const std::vector<std::vector<int>> &adj) {
  const int n = static_cast<int>(g.atoms.size());
  std::vector<int> disc(n, -1), low(n, 0);
  std::vector<char> in_ring(g.bonds.size(), 1);
  int time = 0;
  // Iterative DFS: (atom, parent bond, next adjacency index)
  struct Frame {
    int atom, parent_bond;
    std::size_t next;
  };
  for (int root = 0; root < n; ++root) {
    if (disc[root] >= 0) continue;
    std::vector<Frame> stack{{root, -1, 0}};
    disc[root] = low[root] = time++;
    while (!stack.empty()) {
      Frame &f = stack.back();
      if (f.next < adj[f.atom].size()) {
        const int b = adj[f.atom][f.next++];
        if (b == f.parent_bond) continue;
        const int to = g.other(b, f.atom);
        if (disc[to] < 0) {
          disc[to] = low[to] = time++;
          stack.push_back({to, b, 0});
        } else {
          low[f.atom] = std::min(low[f.atom], disc[to]);
        }
      } else {
        const Frame done = f;
        stack.pop_back();
        if (!stack.empty()) {
          Frame &parent = stack.back();
          low[parent.atom] = std::min(low[parent.atom], low[done.atom]);
          if (low[done.atom] > disc[parent.atom]) in_ring[done.parent_bond] = 0;
        }
      }
    }
  }
  return in_ring;
}

}  // namespace

std::vector<std::vector<int>> perceive_rings(const MoleculeGraph &g) {
  const int n = static_cast<int>(g.atoms.size());
  const int m = static_cast<int>(g.bonds.size());
  if (m < 3) return {};
  const auto full_adj = g.adjacency();
  const auto in_ring = ring_bonds(g, full_adj);

  // Ring-bond subgraph, neighbours visited in ascending atom order.
  std::vector<std::vector<std::pair<int, int>>> adj(n);  // (neighbour, bond)
  int ring_edge_count = 0;
  for (int b = 0; b < m; ++b) {
    if (!in_ring[b]) continue;
    ++ring_edge_count;
    adj[g.bonds[b].begin].emplace_back(g.bonds[b].end, b);
    adj[g.bonds[b].end].emplace_back(g.bonds[b].begin, b);
  }
  if (ring_edge_count == 0) return {};
  for (auto &a : adj) std::sort(a.begin(), a.end());

  // Cyclomatic number of the ring subgraph.
  int ring_atoms = 0, components = 0;
  {
    std::vector<char> seen(n, 0);
    for (int s = 0; s < n; ++s) {
      if (adj[s].empty() || seen[s]) continue;
      ++components;
      std::vector<int> stack{s};
      seen[s] = 1;
      while (!stack.empty()) {
        const int a = stack.back();
        stack.pop_back();
        ++ring_atoms;
        for (auto [to, b] : adj[a]) {
          if (!seen[to]) {
            seen[to] = 1;
            stack.push_back(to);
          }
        }
      }
    }
  }
  const int nrings = ring_edge_count - ring_atoms + components;
  const std::size_t words = (m + 63) / 64;

  std::vector<Candidate> candidates;
  std::set<EdgeSet> seen_cycles;
  std::vector<int> dist(n), parent(n), parent_bond(n);
  for (int root = 0; root < n; ++root) {
    if (adj[root].empty()) continue;
    std::fill(dist.begin(), dist.end(), -1);
    std::queue<int> q;
    q.push(root);
    dist[root] = 0;
    parent[root] = -1;
    while (!q.empty()) {
      const int a = q.front();
      q.pop();
      for (auto [to, b] : adj[a]) {
        if (dist[to] >= 0) continue;
        dist[to] = dist[a] + 1;
        parent[to] = a;
        parent_bond[to] = b;
        q.push(to);
      }
    }
    auto path = [&](int to) {
      std::vector<int> p;
      for (int a = to; a != -1; a = parent[a]) p.push_back(a);
      std::reverse(p.begin(), p.end());
      return p;  // root ... to
    };
    for (int b = 0; b < m; ++b) {
      if (!in_ring[b]) continue;
      const int x = g.bonds[b].begin, y = g.bonds[b].end;
      if (dist[x] < 0 || dist[y] < 0) continue;
      if (parent[x] == y && parent_bond[x] == b) continue;
      if (parent[y] == x && parent_bond[y] == b) continue;
      auto px = path(x), py = path(y);
      std::vector<int> sx(px.begin() + 1, px.end()), sy(py.begin() + 1, py.end());
      std::sort(sx.begin(), sx.end());
      std::sort(sy.begin(), sy.end());
      std::vector<int> common;
      std::set_intersection(sx.begin(), sx.end(), sy.begin(), sy.end(),
                            std::back_inserter(common));
      if (!common.empty()) continue;

      Candidate c;
      c.atoms = px;
      for (auto it = py.rbegin(); it != py.rend() - 1; ++it) c.atoms.push_back(*it);
      c.edges.assign(words, 0);
      auto mark = [&](int bond) { c.edges[bond / 64] |= std::uint64_t{1} << (bond % 64); };
      mark(b);
      for (std::size_t i = 1; i < px.size(); ++i) mark(parent_bond[px[i]]);
      for (std::size_t i = 1; i < py.size(); ++i) mark(parent_bond[py[i]]);
      if (!seen_cycles.insert(c.edges).second) continue;
      c.sorted = c.atoms;
      std::sort(c.sorted.begin(), c.sorted.end());
      candidates.push_back(std::move(c));
    }
  }

  std::sort(candidates.begin(), candidates.end(), [](const Candidate &a, const Candidate &b) {
    if (a.atoms.size() != b.atoms.size()) return a.atoms.size() < b.atoms.size();
    return a.sorted < b.sorted;
  });

  // Greedy independence test over GF(2); basis rows kept reduced by pivot.
  std::vector<EdgeSet> basis;
  std::vector<int> pivots;
  std::vector<std::vector<int>> rings;
  auto lowest_bit = [&](const EdgeSet &e) {
    for (std::size_t w = 0; w < e.size(); ++w)
      if (e[w]) return static_cast<int>(w * 64 + std::countr_zero(e[w]));
    return -1;
  };
  for (auto &c : candidates) {
    if (static_cast<int>(rings.size()) == nrings) break;
    EdgeSet v = c.edges;
    for (std::size_t i = 0; i < basis.size(); ++i) {
      const int p = pivots[i];
      if (v[p / 64] >> (p % 64) & 1U) {
        for (std::size_t w = 0; w < words; ++w) v[w] ^= basis[i][w];
      }
    }
    const int p = lowest_bit(v);
    if (p < 0) continue;
    for (std::size_t i = 0; i < basis.size(); ++i) {
      if (basis[i][p / 64] >> (p % 64) & 1U) {
        for (std::size_t w = 0; w < words; ++w) basis[i][w] ^= v[w];
      }
    }
    basis.push_back(std::move(v));
    pivots.push_back(p);
    rings.push_back(std::move(c.atoms));
  }
  return rings;
}

}  // namespace mvae::smiles

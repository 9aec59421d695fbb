#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "clusterattn/cluster.hpp"
#include "clusterattn/error.hpp"
#include "clusterattn/graph.hpp"
#include "clusterattn/random.hpp"
#include "clusterattn/types.hpp"

namespace clusterattn {

struct PartitionConfig {
  Index k = 1;
  double balance_eps = 0.1;
  std::uint64_t seed = 0;
  Index refine_passes = 4;
  // Coarsen until at most this many nodes remain; 0 means max(2k, 64).
  Index coarsen_stop = 0;
};

struct Partition {
  std::vector<Index> labels;
  Index k_effective = 0;
  Index cut_edges = 0;
  double imbalance = 0.0;
  bool within_balance = true;
};

// Working graph of the multilevel scheme: CSR with integer edge weights
// (merged parallel edges) and node weights (merged vertex counts).
struct WeightedGraph {
  std::vector<Index> offsets = {0};
  std::vector<Index> neighbors;
  std::vector<std::int64_t> edge_weights;
  std::vector<std::int64_t> node_weights;

  Index num_nodes() const { return static_cast<Index>(node_weights.size()); }

  std::int64_t total_weight() const {
    std::int64_t t = 0;
    for (auto w : node_weights) t += w;
    return t;
  }

  Index degree(Index u) const {
    return offsets[static_cast<std::size_t>(u) + 1] - offsets[static_cast<std::size_t>(u)];
  }

  template <typename Scalar>
  static WeightedGraph from_graph(const Graph<Scalar>& g) {
    WeightedGraph w;
    w.offsets = g.csr_offsets();
    w.neighbors = g.csr_neighbors();
    w.edge_weights.assign(w.neighbors.size(), 1);
    w.node_weights.assign(static_cast<std::size_t>(g.num_nodes()), 1);
    return w;
  }
};

struct MatchingResult {
  // Matched pairs only; unmatched nodes carry over as singletons.
  std::vector<std::pair<Index, Index>> pairs;
  // Fine node -> coarse node.
  std::vector<Index> coarse_of;
  WeightedGraph coarser;
};

// Maximal matching by visiting nodes in the given order; each unmatched
// node pairs with its heaviest-edge unmatched neighbor, ties broken by
// lowest neighbor index. Coarse ids are assigned in visit order.
inline MatchingResult heavy_edge_matching_ordered(const WeightedGraph& g,
                                                  std::span<const Index> order) {
  const Index n = g.num_nodes();
  if (static_cast<Index>(order.size()) != n)
    throw InvalidConfig("visit order must cover every node once");
  MatchingResult res;
  res.coarse_of.assign(static_cast<std::size_t>(n), -1);
  std::vector<Index> mate(static_cast<std::size_t>(n), -1);
  Index next_coarse = 0;
  for (Index v : order) {
    if (mate[static_cast<std::size_t>(v)] >= 0) continue;
    Index best = -1;
    std::int64_t best_w = 0;
    for (Index e = g.offsets[static_cast<std::size_t>(v)];
         e < g.offsets[static_cast<std::size_t>(v) + 1]; ++e) {
      const Index u = g.neighbors[static_cast<std::size_t>(e)];
      if (mate[static_cast<std::size_t>(u)] >= 0 || u == v) continue;
      const std::int64_t w = g.edge_weights[static_cast<std::size_t>(e)];
      if (w > best_w || (w == best_w && (best < 0 || u < best))) {
        best = u;
        best_w = w;
      }
    }
    if (best >= 0) {
      mate[static_cast<std::size_t>(v)] = best;
      mate[static_cast<std::size_t>(best)] = v;
      res.pairs.emplace_back(v, best);
      res.coarse_of[static_cast<std::size_t>(v)] = next_coarse;
      res.coarse_of[static_cast<std::size_t>(best)] = next_coarse;
      ++next_coarse;
    } else {
      mate[static_cast<std::size_t>(v)] = v;
      res.coarse_of[static_cast<std::size_t>(v)] = next_coarse;
      ++next_coarse;
    }
  }

  // Contract: sum parallel edges, drop edges internal to a pair.
  const Index m = next_coarse;
  std::map<std::pair<Index, Index>, std::int64_t> agg;
  for (Index u = 0; u < n; ++u) {
    const Index cu = res.coarse_of[static_cast<std::size_t>(u)];
    for (Index e = g.offsets[static_cast<std::size_t>(u)];
         e < g.offsets[static_cast<std::size_t>(u) + 1]; ++e) {
      const Index cv = res.coarse_of[static_cast<std::size_t>(g.neighbors[static_cast<std::size_t>(e)])];
      if (cu == cv) continue;
      agg[{cu, cv}] += g.edge_weights[static_cast<std::size_t>(e)];
    }
  }
  WeightedGraph& c = res.coarser;
  c.node_weights.assign(static_cast<std::size_t>(m), 0);
  for (Index u = 0; u < n; ++u)
    c.node_weights[static_cast<std::size_t>(res.coarse_of[static_cast<std::size_t>(u)])] +=
        g.node_weights[static_cast<std::size_t>(u)];
  c.offsets.assign(static_cast<std::size_t>(m) + 1, 0);
  for (const auto& [key, w] : agg) c.offsets[static_cast<std::size_t>(key.first) + 1]++;
  for (std::size_t i = 1; i < c.offsets.size(); ++i) c.offsets[i] += c.offsets[i - 1];
  c.neighbors.resize(agg.size());
  c.edge_weights.resize(agg.size());
  std::vector<Index> cursor(c.offsets.begin(), c.offsets.end() - 1);
  for (const auto& [key, w] : agg) {
    const auto pos = static_cast<std::size_t>(cursor[static_cast<std::size_t>(key.first)]++);
    c.neighbors[pos] = key.second;
    c.edge_weights[pos] = w;
  }
  return res;
}

inline MatchingResult heavy_edge_matching(const WeightedGraph& g, std::uint64_t seed) {
  Rng rng(seed);
  const auto order = rng.permutation(g.num_nodes());
  return heavy_edge_matching_ordered(g, order);
}

template <typename Scalar>
MatchingResult heavy_edge_matching(const Graph<Scalar>& g, std::uint64_t seed) {
  return heavy_edge_matching(WeightedGraph::from_graph(g), seed);
}

inline std::int64_t weighted_cut(const WeightedGraph& g, const std::vector<Index>& labels) {
  std::int64_t cut = 0;
  for (Index u = 0; u < g.num_nodes(); ++u)
    for (Index e = g.offsets[static_cast<std::size_t>(u)];
         e < g.offsets[static_cast<std::size_t>(u) + 1]; ++e) {
      const Index v = g.neighbors[static_cast<std::size_t>(e)];
      if (u < v && labels[static_cast<std::size_t>(u)] != labels[static_cast<std::size_t>(v)])
        cut += g.edge_weights[static_cast<std::size_t>(e)];
    }
  return cut;
}

namespace detail {

// Connected-component node lists, ordered by each component's lowest node.
inline std::vector<std::vector<Index>> components(const WeightedGraph& g) {
  const Index n = g.num_nodes();
  std::vector<Index> comp(static_cast<std::size_t>(n), -1);
  std::vector<std::vector<Index>> lists;
  for (Index s = 0; s < n; ++s) {
    if (comp[static_cast<std::size_t>(s)] >= 0) continue;
    const Index id = static_cast<Index>(lists.size());
    lists.emplace_back();
    std::deque<Index> queue{s};
    comp[static_cast<std::size_t>(s)] = id;
    while (!queue.empty()) {
      const Index u = queue.front();
      queue.pop_front();
      lists.back().push_back(u);
      for (Index e = g.offsets[static_cast<std::size_t>(u)];
           e < g.offsets[static_cast<std::size_t>(u) + 1]; ++e) {
        const Index v = g.neighbors[static_cast<std::size_t>(e)];
        if (comp[static_cast<std::size_t>(v)] < 0) {
          comp[static_cast<std::size_t>(v)] = id;
          queue.push_back(v);
        }
      }
    }
  }
  return lists;
}

// Greedy initial k-way labels on the (possibly coarsened) graph.
//
// When k <= number of connected components and packing whole components
// onto parts keeps the result balanced (or the components all have equal
// weight), components are packed largest-first onto the lightest part,
// which keeps the cut at zero. Otherwise parts are grown by BFS from
// seeded starts, claiming nodes until the ideal weight is reached;
// isolated nodes are assigned to the currently lightest part afterwards.
inline std::vector<Index> initial_partition(const WeightedGraph& g, Index k,
                                            double balance_eps, Rng& rng) {
  const Index n = g.num_nodes();
  std::vector<Index> labels(static_cast<std::size_t>(n), -1);
  if (k <= 0 || n == 0) return labels;
  std::vector<std::int64_t> part_w(static_cast<std::size_t>(k), 0);

  const auto lightest_part = [&]() {
    Index best = 0;
    for (Index p = 1; p < k; ++p)
      if (part_w[static_cast<std::size_t>(p)] < part_w[static_cast<std::size_t>(best)]) best = p;
    return best;
  };

  const auto comp_lists = components(g);
  if (static_cast<Index>(comp_lists.size()) >= k) {
    // Component packing: sort by weight descending, tie on lowest node.
    std::vector<std::pair<std::int64_t, Index>> order;
    order.reserve(comp_lists.size());
    for (Index c = 0; c < static_cast<Index>(comp_lists.size()); ++c) {
      std::int64_t w = 0;
      for (Index u : comp_lists[static_cast<std::size_t>(c)])
        w += g.node_weights[static_cast<std::size_t>(u)];
      order.emplace_back(w, c);
    }
    std::sort(order.begin(), order.end(), [&](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return comp_lists[static_cast<std::size_t>(a.second)].front() <
             comp_lists[static_cast<std::size_t>(b.second)].front();
    });
    Index next_empty = 0;  // fill each part at least once before balancing
    for (const auto& [w, c] : order) {
      const Index p = next_empty < k ? next_empty++ : lightest_part();
      for (Index u : comp_lists[static_cast<std::size_t>(c)])
        labels[static_cast<std::size_t>(u)] = p;
      part_w[static_cast<std::size_t>(p)] += w;
    }
    const bool equal_components =
        std::all_of(order.begin(), order.end(),
                    [&](const auto& e) { return e.first == order.front().first; });
    const double ideal = static_cast<double>(g.total_weight()) / static_cast<double>(k);
    const double imb =
        static_cast<double>(*std::max_element(part_w.begin(), part_w.end())) / ideal - 1.0;
    if (equal_components || imb <= balance_eps) return labels;
    // Unequal components and the packing is too lopsided: regrow below.
    std::fill(labels.begin(), labels.end(), -1);
    std::fill(part_w.begin(), part_w.end(), 0);
  }

  // Graph growing. Isolated nodes are kept out of the BFS phase.
  std::vector<Index> unclaimed;
  for (Index u = 0; u < n; ++u)
    if (g.degree(u) > 0) unclaimed.push_back(u);
  const double ideal = static_cast<double>(g.total_weight()) / static_cast<double>(k);
  Index remaining = n;
  std::vector<bool> claimed(static_cast<std::size_t>(n), false);

  const auto pick_seed = [&]() -> Index {
    while (!unclaimed.empty()) {
      const auto i = static_cast<std::size_t>(rng.uniform_index(unclaimed.size()));
      const Index u = unclaimed[i];
      unclaimed[i] = unclaimed.back();
      unclaimed.pop_back();
      if (!claimed[static_cast<std::size_t>(u)]) return u;
    }
    return -1;
  };

  for (Index p = 0; p + 1 < k; ++p) {
    std::deque<Index> queue;
    const auto claim = [&](Index u) {
      claimed[static_cast<std::size_t>(u)] = true;
      labels[static_cast<std::size_t>(u)] = p;
      part_w[static_cast<std::size_t>(p)] += g.node_weights[static_cast<std::size_t>(u)];
      --remaining;
      queue.push_back(u);
    };
    // Leave at least one node for each later part.
    while (static_cast<double>(part_w[static_cast<std::size_t>(p)]) < ideal &&
           remaining > k - p - 1) {
      if (queue.empty()) {
        const Index s = pick_seed();
        if (s < 0) break;
        claim(s);
        continue;
      }
      const Index u = queue.front();
      queue.pop_front();
      for (Index e = g.offsets[static_cast<std::size_t>(u)];
           e < g.offsets[static_cast<std::size_t>(u) + 1] &&
           static_cast<double>(part_w[static_cast<std::size_t>(p)]) < ideal &&
           remaining > k - p - 1;
           ++e) {
        const Index v = g.neighbors[static_cast<std::size_t>(e)];
        if (!claimed[static_cast<std::size_t>(v)]) claim(v);
      }
    }
  }
  // Last part takes the remaining non-isolated nodes.
  for (Index u = 0; u < n; ++u)
    if (!claimed[static_cast<std::size_t>(u)] && g.degree(u) > 0) {
      labels[static_cast<std::size_t>(u)] = k - 1;
      part_w[static_cast<std::size_t>(k - 1)] += g.node_weights[static_cast<std::size_t>(u)];
      claimed[static_cast<std::size_t>(u)] = true;
    }
  // Isolated nodes go to the currently lightest part.
  for (Index u = 0; u < n; ++u)
    if (!claimed[static_cast<std::size_t>(u)]) {
      const Index p = lightest_part();
      labels[static_cast<std::size_t>(u)] = p;
      part_w[static_cast<std::size_t>(p)] += g.node_weights[static_cast<std::size_t>(u)];
    }
  return labels;
}

}  // namespace detail

// Boundary refinement by single-node moves. A move needs positive gain
// (weighted cut decrease), or zero gain with a strict imbalance
// improvement; either way the target part must stay under the balance
// cap and the source part may not empty. Returns the weighted cut after
// each pass, which is non-increasing.
inline std::vector<std::int64_t> fm_refine(const WeightedGraph& g,
                                           std::vector<Index>& labels, Index k,
                                           double balance_eps, Index passes) {
  const Index n = g.num_nodes();
  std::vector<std::int64_t> part_w(static_cast<std::size_t>(k), 0);
  std::vector<Index> part_n(static_cast<std::size_t>(k), 0);
  for (Index u = 0; u < n; ++u) {
    part_w[static_cast<std::size_t>(labels[static_cast<std::size_t>(u)])] +=
        g.node_weights[static_cast<std::size_t>(u)];
    part_n[static_cast<std::size_t>(labels[static_cast<std::size_t>(u)])]++;
  }
  const double ideal = static_cast<double>(g.total_weight()) / static_cast<double>(k);
  const auto max_w = static_cast<std::int64_t>(std::floor((1.0 + balance_eps) * ideal));

  std::vector<std::int64_t> history;
  std::vector<std::int64_t> conn(static_cast<std::size_t>(k), 0);
  for (Index pass = 0; pass < passes; ++pass) {
    bool moved = false;
    for (Index u = 0; u < n; ++u) {
      const Index own = labels[static_cast<std::size_t>(u)];
      if (part_n[static_cast<std::size_t>(own)] <= 1) continue;
      std::fill(conn.begin(), conn.end(), 0);
      for (Index e = g.offsets[static_cast<std::size_t>(u)];
           e < g.offsets[static_cast<std::size_t>(u) + 1]; ++e)
        conn[static_cast<std::size_t>(
            labels[static_cast<std::size_t>(g.neighbors[static_cast<std::size_t>(e)])])] +=
            g.edge_weights[static_cast<std::size_t>(e)];
      const std::int64_t wu = g.node_weights[static_cast<std::size_t>(u)];
      Index best = -1;
      std::int64_t best_gain = 0;
      for (Index p = 0; p < k; ++p) {
        if (p == own) continue;
        if (part_w[static_cast<std::size_t>(p)] + wu > max_w) continue;
        const std::int64_t gain =
            conn[static_cast<std::size_t>(p)] - conn[static_cast<std::size_t>(own)];
        const bool rebalances =
            part_w[static_cast<std::size_t>(own)] - part_w[static_cast<std::size_t>(p)] > wu;
        if (gain <= 0 && !(gain == 0 && rebalances)) continue;
        if (best < 0 || gain > best_gain) {  // ties keep the lowest part index
          best = p;
          best_gain = gain;
        }
      }
      if (best >= 0) {
        part_w[static_cast<std::size_t>(own)] -= wu;
        part_n[static_cast<std::size_t>(own)]--;
        part_w[static_cast<std::size_t>(best)] += wu;
        part_n[static_cast<std::size_t>(best)]++;
        labels[static_cast<std::size_t>(u)] = best;
        moved = true;
      }
    }
    history.push_back(weighted_cut(g, labels));
    if (!moved) break;
  }
  return history;
}

// Exact cut count and imbalance for an arbitrary labeling. The ideal part
// size uses the number of distinct labels present.
template <typename Scalar>
std::pair<Index, double> cut_and_balance(const Graph<Scalar>& g,
                                         const std::vector<Index>& labels) {
  const Index n = g.num_nodes();
  if (static_cast<Index>(labels.size()) != n)
    throw ShapeMismatch("labels length != num_nodes");
  for (Index l : labels)
    if (l < 0 || l >= n) throw LabelOutOfRange("label outside [0, num_nodes)");
  Index cut = 0;
  for (Index u = 0; u < n; ++u)
    for (Index v : g.neighbors(u))
      if (u < v && labels[static_cast<std::size_t>(u)] != labels[static_cast<std::size_t>(v)])
        ++cut;
  std::map<Index, Index> sizes;
  for (Index l : labels) sizes[l]++;
  if (sizes.empty()) return {0, 0.0};
  Index max_size = 0;
  for (const auto& [l, s] : sizes) max_size = std::max(max_size, s);
  const double ideal = static_cast<double>(n) / static_cast<double>(sizes.size());
  return {cut, static_cast<double>(max_size) / ideal - 1.0};
}

// Deterministic multilevel k-way partition: heavy-edge-matching
// coarsening, greedy initial partition, FM refinement while uncoarsening.
template <typename Scalar>
Partition multilevel_partition(const Graph<Scalar>& g, const PartitionConfig& cfg) {
  if (cfg.k <= 0) throw InvalidConfig("k must be at least 1");
  if (cfg.balance_eps < 0) throw InvalidConfig("balance_eps must be nonnegative");
  if (cfg.refine_passes < 0) throw InvalidConfig("refine_passes must be nonnegative");
  const Index n = g.num_nodes();
  Partition part;
  part.k_effective = std::min(cfg.k, n);
  if (n == 0) return part;
  const Index k = part.k_effective;
  const Index coarsen_stop =
      cfg.coarsen_stop > 0 ? cfg.coarsen_stop : std::max<Index>(2 * k, 64);

  Rng rng(cfg.seed);
  std::vector<WeightedGraph> levels{WeightedGraph::from_graph(g)};
  std::vector<MatchingResult> matchings;
  while (levels.back().num_nodes() > coarsen_stop) {
    MatchingResult m = heavy_edge_matching_ordered(
        levels.back(), rng.permutation(levels.back().num_nodes()));
    if (m.pairs.empty()) break;  // no contraction possible
    levels.push_back(m.coarser);
    matchings.push_back(std::move(m));
  }

  std::vector<Index> labels =
      detail::initial_partition(levels.back(), k, cfg.balance_eps, rng);
  fm_refine(levels.back(), labels, k, cfg.balance_eps, cfg.refine_passes);
  for (std::size_t lvl = matchings.size(); lvl-- > 0;) {
    std::vector<Index> fine(static_cast<std::size_t>(levels[lvl].num_nodes()));
    for (Index u = 0; u < levels[lvl].num_nodes(); ++u)
      fine[static_cast<std::size_t>(u)] =
          labels[static_cast<std::size_t>(matchings[lvl].coarse_of[static_cast<std::size_t>(u)])];
    labels = std::move(fine);
    fm_refine(levels[lvl], labels, k, cfg.balance_eps, cfg.refine_passes);
  }

  // Compress labels so exactly k_effective nonempty clusters remain.
  std::vector<Index> remap(static_cast<std::size_t>(k), -1);
  Index next = 0;
  for (Index& l : labels) {
    if (remap[static_cast<std::size_t>(l)] < 0) remap[static_cast<std::size_t>(l)] = next++;
    l = remap[static_cast<std::size_t>(l)];
  }
  part.k_effective = next;
  part.labels = std::move(labels);
  const auto [cut, imb] = cut_and_balance(g, part.labels);
  part.cut_edges = cut;
  part.imbalance = imb;
  part.within_balance = imb <= cfg.balance_eps + 1e-12;
  return part;
}

// Hard cluster assignment from a partition: node n gets weight
// 1/|V_{label(n)}| in its own cluster, nothing elsewhere.
template <typename Scalar>
ClusterAssignment<Scalar> hard_cam(const Partition& p) {
  const Index n = static_cast<Index>(p.labels.size());
  std::vector<Index> sizes(static_cast<std::size_t>(p.k_effective), 0);
  for (Index l : p.labels) sizes[static_cast<std::size_t>(l)]++;
  std::vector<CamEntry<Scalar>> entries;
  entries.reserve(static_cast<std::size_t>(n));
  for (Index u = 0; u < n; ++u) {
    const Index l = p.labels[static_cast<std::size_t>(u)];
    entries.push_back({u, l, Scalar(1) / static_cast<Scalar>(sizes[static_cast<std::size_t>(l)])});
  }
  return ClusterAssignment<Scalar>::make(n, p.k_effective, std::move(entries), true);
}

}  // namespace clusterattn

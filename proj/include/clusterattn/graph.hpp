#pragma once

#include <algorithm>
#include <span>
#include <utility>
#include <vector>

#include "clusterattn/error.hpp"
#include "clusterattn/types.hpp"

namespace clusterattn {

// Undirected graph in CSR form plus a dense node-feature matrix.
// Adjacency is stored symmetrically (both directions), deduplicated,
// without self-loops, neighbors sorted per row. Immutable once built.
template <typename Scalar>
class Graph {
 public:
  Graph() = default;

  Index num_nodes() const { return num_nodes_; }
  Index num_edges() const {
    return static_cast<Index>(neighbors_.size()) / 2;
  }
  Index feat_dim() const { return features_.cols(); }

  std::span<const Index> neighbors(Index u) const {
    const auto b = static_cast<std::size_t>(offsets_[static_cast<std::size_t>(u)]);
    const auto e = static_cast<std::size_t>(offsets_[static_cast<std::size_t>(u) + 1]);
    return {neighbors_.data() + b, e - b};
  }

  Index degree(Index u) const {
    return offsets_[static_cast<std::size_t>(u) + 1] - offsets_[static_cast<std::size_t>(u)];
  }

  const std::vector<Index>& csr_offsets() const { return offsets_; }
  const std::vector<Index>& csr_neighbors() const { return neighbors_; }
  const MatrixX<Scalar>& features() const { return features_; }

  // Dense symmetric 0/1 adjacency; oracle-sized graphs only.
  MatrixX<Scalar> adjacency_dense() const {
    MatrixX<Scalar> a = MatrixX<Scalar>::Zero(num_nodes_, num_nodes_);
    for (Index u = 0; u < num_nodes_; ++u)
      for (Index v : neighbors(u)) a(u, v) = Scalar(1);
    return a;
  }

  SparseMatrixX<Scalar> adjacency_sparse() const {
    std::vector<Eigen::Triplet<Scalar>> trips;
    trips.reserve(neighbors_.size());
    for (Index u = 0; u < num_nodes_; ++u)
      for (Index v : neighbors(u)) trips.emplace_back(u, v, Scalar(1));
    SparseMatrixX<Scalar> a(num_nodes_, num_nodes_);
    a.setFromTriplets(trips.begin(), trips.end());
    return a;
  }

  template <typename S>
  friend Graph<S> build_graph(const std::vector<std::pair<Index, Index>>&, Index,
                              MatrixX<S>);

 private:
  Index num_nodes_ = 0;
  std::vector<Index> offsets_ = {0};
  std::vector<Index> neighbors_;
  MatrixX<Scalar> features_;
};

// Builds the CSR graph from an edge list: endpoints are symmetrized,
// duplicates collapse to one undirected edge, self-loops are dropped.
template <typename Scalar>
Graph<Scalar> build_graph(const std::vector<std::pair<Index, Index>>& edges,
                          Index num_nodes, MatrixX<Scalar> features) {
  if (num_nodes < 0) throw InvalidConfig("num_nodes must be nonnegative");
  if (features.rows() != num_nodes)
    throw ShapeMismatch("feature rows != num_nodes");

  std::vector<std::pair<Index, Index>> dir;
  dir.reserve(edges.size() * 2);
  for (const auto& [u, v] : edges) {
    if (u < 0 || u >= num_nodes || v < 0 || v >= num_nodes)
      throw IndexOutOfRange("edge endpoint out of range");
    if (u == v) continue;
    dir.emplace_back(u, v);
    dir.emplace_back(v, u);
  }
  std::sort(dir.begin(), dir.end());
  dir.erase(std::unique(dir.begin(), dir.end()), dir.end());

  Graph<Scalar> g;
  g.num_nodes_ = num_nodes;
  g.features_ = std::move(features);
  g.offsets_.assign(static_cast<std::size_t>(num_nodes) + 1, 0);
  g.neighbors_.resize(dir.size());
  for (const auto& [u, v] : dir) g.offsets_[static_cast<std::size_t>(u) + 1]++;
  for (std::size_t i = 1; i < g.offsets_.size(); ++i) g.offsets_[i] += g.offsets_[i - 1];
  std::vector<Index> cursor(g.offsets_.begin(), g.offsets_.end() - 1);
  for (const auto& [u, v] : dir)
    g.neighbors_[static_cast<std::size_t>(cursor[static_cast<std::size_t>(u)]++)] = v;
  return g;
}

// Convenience: features default to an n x 1 zero matrix.
template <typename Scalar>
Graph<Scalar> build_graph(const std::vector<std::pair<Index, Index>>& edges,
                          Index num_nodes) {
  return build_graph<Scalar>(edges, num_nodes,
                             MatrixX<Scalar>::Zero(num_nodes, 1));
}

inline void check_permutation(const std::vector<Index>& perm, Index n) {
  if (static_cast<Index>(perm.size()) != n)
    throw InvalidPermutation("permutation length != num_nodes");
  std::vector<bool> seen(static_cast<std::size_t>(n), false);
  for (Index p : perm) {
    if (p < 0 || p >= n || seen[static_cast<std::size_t>(p)])
      throw InvalidPermutation("not a bijection on [0, num_nodes)");
    seen[static_cast<std::size_t>(p)] = true;
  }
}

// Relabels node u as perm[u]; feature row u moves to row perm[u].
template <typename Scalar>
Graph<Scalar> permute_graph(const Graph<Scalar>& g, const std::vector<Index>& perm) {
  const Index n = g.num_nodes();
  check_permutation(perm, n);
  std::vector<std::pair<Index, Index>> edges;
  edges.reserve(static_cast<std::size_t>(g.num_edges()));
  for (Index u = 0; u < n; ++u)
    for (Index v : g.neighbors(u))
      if (u < v)
        edges.emplace_back(perm[static_cast<std::size_t>(u)],
                           perm[static_cast<std::size_t>(v)]);
  MatrixX<Scalar> feats(n, g.feat_dim());
  for (Index u = 0; u < n; ++u)
    feats.row(perm[static_cast<std::size_t>(u)]) = g.features().row(u);
  return build_graph<Scalar>(edges, n, std::move(feats));
}

template <typename Scalar>
bool graphs_equal(const Graph<Scalar>& a, const Graph<Scalar>& b) {
  return a.num_nodes() == b.num_nodes() && a.csr_offsets() == b.csr_offsets() &&
         a.csr_neighbors() == b.csr_neighbors() && a.features() == b.features();
}

}  // namespace clusterattn

#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "clusterattn/error.hpp"
#include "clusterattn/graph.hpp"
#include "clusterattn/types.hpp"

namespace clusterattn {

template <typename Scalar>
struct CamEntry {
  Index node;
  Index cluster;
  Scalar weight;

  friend bool operator==(const CamEntry&, const CamEntry&) = default;
};

// Sparse n x m cluster assignment matrix C; entry (t, j) is the weight of
// node t in cluster j. A hard assignment puts each node in exactly one
// cluster with weight 1/|V_j|, so every column sums to 1.
template <typename Scalar>
class ClusterAssignment {
 public:
  ClusterAssignment() = default;

  static ClusterAssignment make(Index num_nodes, Index num_clusters,
                                std::vector<CamEntry<Scalar>> entries,
                                bool hard = false) {
    ClusterAssignment c;
    c.num_nodes_ = num_nodes;
    c.num_clusters_ = num_clusters;
    c.hard_ = hard;
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
      return std::pair(a.cluster, a.node) < std::pair(b.cluster, b.node);
    });
    c.entries_ = std::move(entries);
    c.validate();
    c.build_matrix();
    return c;
  }

  Index num_nodes() const { return num_nodes_; }
  Index num_clusters() const { return num_clusters_; }
  bool is_hard() const { return hard_; }
  const std::vector<CamEntry<Scalar>>& entries() const { return entries_; }
  const SparseMatrixX<Scalar>& matrix() const { return matrix_; }

  MatrixX<Scalar> to_dense() const { return MatrixX<Scalar>(matrix_); }

  // Node permutation: row t of C moves to row perm[t].
  ClusterAssignment permuted_rows(const std::vector<Index>& perm) const {
    check_permutation(perm, num_nodes_);
    std::vector<CamEntry<Scalar>> e = entries_;
    for (auto& entry : e) entry.node = perm[static_cast<std::size_t>(entry.node)];
    return make(num_nodes_, num_clusters_, std::move(e), hard_);
  }

  // Cluster permutation: column j of C moves to column perm[j].
  ClusterAssignment permuted_columns(const std::vector<Index>& perm) const {
    check_permutation(perm, num_clusters_);
    std::vector<CamEntry<Scalar>> e = entries_;
    for (auto& entry : e)
      entry.cluster = perm[static_cast<std::size_t>(entry.cluster)];
    return make(num_nodes_, num_clusters_, std::move(e), hard_);
  }

 private:
  void validate() const {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const auto& e = entries_[i];
      if (e.node < 0 || e.node >= num_nodes_)
        throw IndexOutOfRange("cluster assignment references invalid node");
      if (e.cluster < 0 || e.cluster >= num_clusters_)
        throw IndexOutOfRange("cluster assignment references invalid cluster");
      if (!(e.weight >= Scalar(0)))
        throw InvalidConfig("cluster assignment weight must be nonnegative");
      if (i > 0 && entries_[i - 1].node == e.node && entries_[i - 1].cluster == e.cluster)
        throw InvalidConfig("duplicate (node, cluster) assignment entry");
    }
    if (!hard_) return;
    // Hard assignment: one entry per node, weight 1/|V_j|, columns sum to 1.
    std::vector<Index> per_node(static_cast<std::size_t>(num_nodes_), 0);
    std::vector<Index> cluster_size(static_cast<std::size_t>(num_clusters_), 0);
    for (const auto& e : entries_) {
      per_node[static_cast<std::size_t>(e.node)]++;
      cluster_size[static_cast<std::size_t>(e.cluster)]++;
    }
    for (Index c : per_node)
      if (c != 1) throw InvalidConfig("hard assignment requires exactly one cluster per node");
    for (const auto& e : entries_) {
      const auto sz = cluster_size[static_cast<std::size_t>(e.cluster)];
      if (std::abs(static_cast<double>(e.weight) - 1.0 / static_cast<double>(sz)) > 1e-12)
        throw InvalidConfig("hard assignment weight must be 1/|V_j|");
    }
  }

  void build_matrix() {
    std::vector<Eigen::Triplet<Scalar>> trips;
    trips.reserve(entries_.size());
    for (const auto& e : entries_) trips.emplace_back(e.node, e.cluster, e.weight);
    matrix_.resize(num_nodes_, num_clusters_);
    matrix_.setFromTriplets(trips.begin(), trips.end());
    matrix_.makeCompressed();
  }

  Index num_nodes_ = 0;
  Index num_clusters_ = 0;
  bool hard_ = false;
  std::vector<CamEntry<Scalar>> entries_;
  SparseMatrixX<Scalar> matrix_;
};

// Coarsened graph: pooled cluster features C^T X and cluster adjacency
// C^T A C, kept in raw weighted form. The adjacency is stored sparse at
// every size; consumers wanting a dense view materialize it on demand.
template <typename Scalar>
struct CoarseGraph {
  MatrixX<Scalar> cluster_features;  // m x feat_dim
  SparseMatrixX<Scalar> adj;         // m x m, symmetric, entries > 0

  Index num_clusters() const { return adj.rows(); }

  MatrixX<Scalar> adj_dense() const { return MatrixX<Scalar>(adj); }

  // Connectivity pattern before any self-loop injection.
  MatrixXb binary_mask() const {
    MatrixXb mask = MatrixXb::Constant(adj.rows(), adj.cols(), false);
    for (Index j = 0; j < adj.outerSize(); ++j)
      for (typename SparseMatrixX<Scalar>::InnerIterator it(adj, j); it; ++it)
        if (it.value() > Scalar(0)) mask(it.row(), it.col()) = true;
    return mask;
  }
};

template <typename Scalar>
CoarseGraph<Scalar> coarsen(const Graph<Scalar>& g,
                            const ClusterAssignment<Scalar>& c) {
  if (c.num_nodes() != g.num_nodes())
    throw ShapeMismatch("cluster assignment node count != graph node count");
  CoarseGraph<Scalar> coarse;
  const SparseMatrixX<Scalar>& cam = c.matrix();
  coarse.cluster_features = cam.transpose() * g.features();
  SparseMatrixX<Scalar> a = g.adjacency_sparse();
  SparseMatrixX<Scalar> prod = cam.transpose() * a * cam;
  // Entries are sums of nonnegative products; drop explicit zeros so the
  // stored pattern coincides with the strictly positive support.
  prod.prune([](auto, auto, const Scalar& v) { return v > Scalar(0); });
  coarse.adj = std::move(prod);
  return coarse;
}

}  // namespace clusterattn

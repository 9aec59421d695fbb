#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "clusterattn/cluster.hpp"
#include "clusterattn/error.hpp"
#include "clusterattn/kernels.hpp"
#include "clusterattn/random.hpp"
#include "clusterattn/types.hpp"

namespace clusterattn {

// Bi-level queries/keys and node values. Cluster-level rows (Q, K) live in
// the cluster space, node-level query rows q are pooled per cluster, and
// k/v rows are per node.
template <typename Scalar>
struct BiLevelQkv {
  MatrixX<Scalar> q_cluster;       // m x d_C
  MatrixX<Scalar> q_node_level;    // m x d_N
  MatrixX<Scalar> k_cluster;       // m x d_C
  MatrixX<Scalar> k_node;          // n x d_N
  MatrixX<Scalar> v_node;          // n x d_v

  Index num_clusters() const { return q_cluster.rows(); }
  Index num_nodes() const { return k_node.rows(); }
};

struct AttentionConfig {
  enum class MaskMode { Binary, Weighted };

  BiLevelKernel kernel;
  FeatureMapKind node_feature_map = FeatureMapKind::EluPlusOne;
  ClusterKernel cluster_kernel;
  MaskMode mask_mode = MaskMode::Binary;
  bool self_loops = true;
  double denom_floor = 1e-30;
};

// Projections from hidden features to the bi-level spaces; matrices are
// stored (in_dim x out_dim) and applied on the right.
template <typename Scalar>
struct ProjectionWeights {
  MatrixX<Scalar> w_key_node;       // d x d_N
  MatrixX<Scalar> w_key_cluster;    // d x d_C
  MatrixX<Scalar> w_query_node;     // d x d_N
  MatrixX<Scalar> w_query_cluster;  // d x d_C
  MatrixX<Scalar> w_value;          // d x d_v
  std::uint64_t init_seed = 0;

  // Glorot-uniform init: entries uniform on [-a, a], a = sqrt(6/(in+out)).
  // tie_queries reuses the node-level query projection at the cluster
  // level (requires d_node == d_cluster).
  static ProjectionWeights glorot(Index feat_dim, Index d_node, Index d_cluster,
                                  Index d_value, std::uint64_t seed,
                                  bool tie_queries = false) {
    if (tie_queries && d_node != d_cluster)
      throw InvalidConfig("tied queries require d_node == d_cluster");
    Rng rng(seed);
    const auto draw = [&rng](Index in, Index out) {
      return glorot_matrix<Scalar>(rng, in, out);
    };
    ProjectionWeights w;
    w.init_seed = seed;
    w.w_key_node = draw(feat_dim, d_node);
    w.w_key_cluster = draw(feat_dim, d_cluster);
    w.w_query_node = draw(feat_dim, d_node);
    w.w_query_cluster = tie_queries ? w.w_query_node : draw(feat_dim, d_cluster);
    w.w_value = draw(feat_dim, d_value);
    return w;
  }
};

// k_t = W_k h_t and v_t = W_val h_t per node; K_j, q_i, Q_i are projected
// cluster-pooled features sum_s C_sj h_s.
template <typename Scalar>
BiLevelQkv<Scalar> project_bilevel(const MatrixX<Scalar>& h,
                                   const ClusterAssignment<Scalar>& cam,
                                   const ProjectionWeights<Scalar>& w) {
  if (h.rows() != cam.num_nodes())
    throw ShapeMismatch("feature rows != cluster assignment node count");
  const Index d = h.cols();
  if (w.w_key_node.rows() != d || w.w_key_cluster.rows() != d ||
      w.w_query_node.rows() != d || w.w_query_cluster.rows() != d ||
      w.w_value.rows() != d)
    throw ShapeMismatch("projection input dim != feature dim");
  if (w.w_key_node.cols() != w.w_query_node.cols() ||
      w.w_key_cluster.cols() != w.w_query_cluster.cols())
    throw ShapeMismatch("query/key output dims disagree");
  const MatrixX<Scalar> pooled = cam.matrix().transpose() * h;
  BiLevelQkv<Scalar> qkv;
  qkv.k_node = h * w.w_key_node;
  qkv.v_node = h * w.w_value;
  qkv.k_cluster = pooled * w.w_key_cluster;
  qkv.q_node_level = pooled * w.w_query_node;
  qkv.q_cluster = pooled * w.w_query_cluster;
  return qkv;
}

namespace detail {

// Cluster-pair gate from the coarse adjacency: either the binary
// connectivity pattern or the raw coarsening weights. Self-loop injection
// guarantees a strictly positive diagonal; in weighted mode an existing
// positive diagonal weight is kept.
template <typename Scalar>
SparseMatrixX<Scalar> masked_gate(const CoarseGraph<Scalar>& coarse,
                                  const AttentionConfig& cfg) {
  const Index m = coarse.num_clusters();
  std::vector<Eigen::Triplet<Scalar>> trips;
  trips.reserve(static_cast<std::size_t>(coarse.adj.nonZeros()) +
                static_cast<std::size_t>(m));
  std::vector<bool> has_diag(static_cast<std::size_t>(m), false);
  for (Index outer = 0; outer < coarse.adj.outerSize(); ++outer)
    for (typename SparseMatrixX<Scalar>::InnerIterator it(coarse.adj, outer); it; ++it) {
      if (!(it.value() > Scalar(0))) continue;
      const Scalar v =
          cfg.mask_mode == AttentionConfig::MaskMode::Binary ? Scalar(1) : it.value();
      trips.emplace_back(it.row(), it.col(), v);
      if (it.row() == it.col()) has_diag[static_cast<std::size_t>(it.row())] = true;
    }
  if (cfg.self_loops)
    for (Index i = 0; i < m; ++i)
      if (!has_diag[static_cast<std::size_t>(i)]) trips.emplace_back(i, i, Scalar(1));
  SparseMatrixX<Scalar> gate(m, m);
  gate.setFromTriplets(trips.begin(), trips.end());
  gate.makeCompressed();
  return gate;
}

// Gate with the cluster kernel folded in: entry (i, j) is
// mask_ij * kappa_C(Q_i, K_j). One kernel evaluation per coarse edge.
template <typename Scalar>
SparseMatrixX<Scalar> kernel_gate(const SparseMatrixX<Scalar>& mask,
                                  const MatrixX<Scalar>& q_cluster,
                                  const MatrixX<Scalar>& k_cluster,
                                  const AttentionConfig& cfg) {
  SparseMatrixX<Scalar> gate = mask;
  for (Index outer = 0; outer < gate.outerSize(); ++outer)
    for (typename SparseMatrixX<Scalar>::InnerIterator it(gate, outer); it; ++it)
      it.valueRef() *= cluster_kernel(cfg.cluster_kernel,
                                      q_cluster.row(it.row()),
                                      k_cluster.row(it.col()));
  return gate;
}

template <typename Scalar>
void check_qkv(const BiLevelQkv<Scalar>& qkv, const CoarseGraph<Scalar>& coarse,
               const ClusterAssignment<Scalar>& cam) {
  const Index m = cam.num_clusters();
  const Index n = cam.num_nodes();
  if (qkv.q_cluster.rows() != m || qkv.k_cluster.rows() != m ||
      qkv.q_node_level.rows() != m || qkv.k_node.rows() != n ||
      qkv.v_node.rows() != n || coarse.num_clusters() != m)
    throw ShapeMismatch("qkv/coarse/cluster-assignment sizes disagree");
  if (qkv.q_cluster.cols() != qkv.k_cluster.cols() ||
      qkv.q_node_level.cols() != qkv.k_node.cols())
    throw ShapeMismatch("query/key dims disagree");
  if (!qkv.q_cluster.allFinite() || !qkv.k_cluster.allFinite() ||
      !qkv.v_node.allFinite())
    throw NonFiniteInput("queries, keys and values must be finite");
}

// Per-node flattened psi(k_t) v_t^T rows, column index a + d_N*b for
// entry (a, b), i.e. the column-major flattening used by the readout.
template <typename Scalar>
MatrixX<Scalar> key_value_rows(const MatrixX<Scalar>& psi_k,
                               const MatrixX<Scalar>& v) {
  const Index n = psi_k.rows(), dn = psi_k.cols(), dv = v.cols();
  MatrixX<Scalar> w(n, dn * dv);
  for (Index t = 0; t < n; ++t)
    for (Index b = 0; b < dv; ++b)
      w.row(t).segment(b * dn, dn) = v(t, b) * psi_k.row(t);
  return w;
}

}  // namespace detail

// Reference form: the explicit double sum over clusters j and the nodes
// assigned to them, evaluated for every cluster pair regardless of gate
// sparsity. Serves as the oracle the linear-time paths are checked
// against; cost grows with (num clusters) x (num nodes).
//
// If attn_weights is given it receives, per query cluster i, the m x n
// matrix of normalized attention weights over (cluster j, node t).
template <typename Scalar>
MatrixX<Scalar> attention_reference(const BiLevelQkv<Scalar>& qkv,
                                    const CoarseGraph<Scalar>& coarse,
                                    const ClusterAssignment<Scalar>& cam,
                                    const AttentionConfig& cfg,
                                    std::vector<MatrixX<Scalar>>* attn_weights = nullptr) {
  detail::check_qkv(qkv, coarse, cam);
  if (!(cfg.denom_floor > 0)) throw InvalidConfig("denom_floor must be positive");
  if (cfg.kernel.combine == BiLevelKernel::Combine::Convex) check_alpha(cfg.kernel.alpha);
  const Index m = cam.num_clusters();
  const Index dv = qkv.v_node.cols();
  const MatrixX<Scalar> gate = MatrixX<Scalar>(detail::masked_gate(coarse, cfg));
  const MatrixX<Scalar> psi_q = feature_map(cfg.node_feature_map, qkv.q_node_level);
  const MatrixX<Scalar> psi_k = feature_map(cfg.node_feature_map, qkv.k_node);
  const SparseMatrixX<Scalar>& c = cam.matrix();

  MatrixX<Scalar> out(m, dv);
  if (attn_weights) attn_weights->assign(static_cast<std::size_t>(m), MatrixX<Scalar>());
  for (Index i = 0; i < m; ++i) {
    Scalar den = 0;
    RowVectorX<Scalar> num = RowVectorX<Scalar>::Zero(dv);
    MatrixX<Scalar> w_i;
    if (attn_weights) w_i = MatrixX<Scalar>::Zero(m, cam.num_nodes());
    for (Index j = 0; j < m; ++j) {
      const Scalar k_c = cluster_kernel(cfg.cluster_kernel,
                                        qkv.q_cluster.row(i),
                                        qkv.k_cluster.row(j));
      for (typename SparseMatrixX<Scalar>::InnerIterator it(c, j); it; ++it) {
        const Index t = it.row();
        const Scalar k_n = psi_q.row(i).dot(psi_k.row(t));
        const Scalar term =
            gate(i, j) * it.value() * bilevel_kernel(cfg.kernel, k_c, k_n);
        den += term;
        num += term * qkv.v_node.row(t);
        if (attn_weights) w_i(j, t) = term;
      }
    }
    if (!(den >= static_cast<Scalar>(cfg.denom_floor)))
      throw DegenerateAttention("attention denominator below floor");
    out.row(i) = num / den;
    if (attn_weights) (*attn_weights)[static_cast<std::size_t>(i)] = w_i / den;
  }
  return out;
}

// Linear-time product-kernel form, as cluster-wise message passing:
//  1. aggregate psi(k_t) v_t^T and psi(k_t) within each cluster,
//  2. evaluate the cluster-kernel gate on each coarse edge,
//  3. propagate the aggregates along gated edges,
//  4. contract with psi(q_i) per receiving cluster.
// Numerically equal to attention_reference with the product kernel.
template <typename Scalar>
MatrixX<Scalar> attention_tensor(const BiLevelQkv<Scalar>& qkv,
                                 const CoarseGraph<Scalar>& coarse,
                                 const ClusterAssignment<Scalar>& cam,
                                 const AttentionConfig& cfg) {
  detail::check_qkv(qkv, coarse, cam);
  if (cfg.kernel.combine != BiLevelKernel::Combine::Tensor)
    throw InvalidConfig("attention_tensor requires the product kernel");
  if (!(cfg.denom_floor > 0)) throw InvalidConfig("denom_floor must be positive");
  const Index m = cam.num_clusters();
  const Index dn = qkv.k_node.cols();
  const Index dv = qkv.v_node.cols();
  const MatrixX<Scalar> psi_q = feature_map(cfg.node_feature_map, qkv.q_node_level);
  const MatrixX<Scalar> psi_k = feature_map(cfg.node_feature_map, qkv.k_node);

  const MatrixX<Scalar> kv_rows = detail::key_value_rows(psi_k, qkv.v_node);
  const MatrixX<Scalar> agg_kv = cam.matrix().transpose() * kv_rows;  // m x dn*dv
  const MatrixX<Scalar> agg_k = cam.matrix().transpose() * psi_k;    // m x dn

  const SparseMatrixX<Scalar> gate = detail::kernel_gate(
      detail::masked_gate(coarse, cfg), qkv.q_cluster, qkv.k_cluster, cfg);
  const MatrixX<Scalar> msg_kv = gate * agg_kv;
  const MatrixX<Scalar> msg_k = gate * agg_k;

  MatrixX<Scalar> out(m, dv);
  RowVectorX<Scalar> row(dn * dv);
  for (Index i = 0; i < m; ++i) {
    const Scalar den = psi_q.row(i).dot(msg_k.row(i));
    if (!(den >= static_cast<Scalar>(cfg.denom_floor)))
      throw DegenerateAttention("attention denominator below floor");
    row = msg_kv.row(i);
    const Eigen::Map<const MatrixX<Scalar>> mat(row.data(), dn, dv);
    out.row(i) = (psi_q.row(i) * mat) / den;
  }
  return out;
}

// Linear-time convex-combination form. The cluster-kernel part needs only
// one evaluation per coarse edge; the node-kernel part reuses the
// aggregates of the product form, propagated along unkerneled gates.
template <typename Scalar>
MatrixX<Scalar> attention_convex(const BiLevelQkv<Scalar>& qkv,
                                 const CoarseGraph<Scalar>& coarse,
                                 const ClusterAssignment<Scalar>& cam,
                                 const AttentionConfig& cfg) {
  detail::check_qkv(qkv, coarse, cam);
  if (cfg.kernel.combine != BiLevelKernel::Combine::Convex)
    throw InvalidConfig("attention_convex requires the convex kernel");
  check_alpha(cfg.kernel.alpha);
  if (!(cfg.denom_floor > 0)) throw InvalidConfig("denom_floor must be positive");
  const auto alpha = static_cast<Scalar>(cfg.kernel.alpha);
  const Scalar beta = Scalar(1) - alpha;
  const Index m = cam.num_clusters();
  const Index dn = qkv.k_node.cols();
  const Index dv = qkv.v_node.cols();
  const MatrixX<Scalar> psi_q = feature_map(cfg.node_feature_map, qkv.q_node_level);
  const MatrixX<Scalar> psi_k = feature_map(cfg.node_feature_map, qkv.k_node);

  const SparseMatrixX<Scalar> mask = detail::masked_gate(coarse, cfg);
  const SparseMatrixX<Scalar> gate =
      detail::kernel_gate(mask, qkv.q_cluster, qkv.k_cluster, cfg);

  const MatrixX<Scalar> agg_v = cam.matrix().transpose() * qkv.v_node;  // m x dv
  const VectorX<Scalar> col_sum =
      cam.matrix().transpose() * VectorX<Scalar>::Ones(cam.num_nodes());
  const MatrixX<Scalar> kv_rows = detail::key_value_rows(psi_k, qkv.v_node);
  const MatrixX<Scalar> agg_kv = cam.matrix().transpose() * kv_rows;
  const MatrixX<Scalar> agg_k = cam.matrix().transpose() * psi_k;

  const MatrixX<Scalar> msg_v = gate * agg_v;
  const VectorX<Scalar> msg_sum = gate * col_sum;
  const MatrixX<Scalar> msg_kv = mask * agg_kv;
  const MatrixX<Scalar> msg_k = mask * agg_k;

  MatrixX<Scalar> out(m, dv);
  RowVectorX<Scalar> row(dn * dv);
  for (Index i = 0; i < m; ++i) {
    const Scalar den = alpha * msg_sum(i) + beta * psi_q.row(i).dot(msg_k.row(i));
    if (!(den >= static_cast<Scalar>(cfg.denom_floor)))
      throw DegenerateAttention("attention denominator below floor");
    row = msg_kv.row(i);
    const Eigen::Map<const MatrixX<Scalar>> mat(row.data(), dn, dv);
    out.row(i) = (alpha * msg_v.row(i) + beta * (psi_q.row(i) * mat)) / den;
  }
  return out;
}

// Cluster-kernel-only special case: the node kernel drops out and each
// query mixes the pooled cluster values of its neighborhood.
template <typename Scalar>
MatrixX<Scalar> cluster_level_attention(const BiLevelQkv<Scalar>& qkv,
                                        const CoarseGraph<Scalar>& coarse,
                                        const ClusterAssignment<Scalar>& cam,
                                        const AttentionConfig& cfg) {
  detail::check_qkv(qkv, coarse, cam);
  if (!(cfg.denom_floor > 0)) throw InvalidConfig("denom_floor must be positive");
  const Index m = cam.num_clusters();
  const SparseMatrixX<Scalar> gate = detail::kernel_gate(
      detail::masked_gate(coarse, cfg), qkv.q_cluster, qkv.k_cluster, cfg);
  const MatrixX<Scalar> agg_v = cam.matrix().transpose() * qkv.v_node;
  const VectorX<Scalar> col_sum =
      cam.matrix().transpose() * VectorX<Scalar>::Ones(cam.num_nodes());
  const MatrixX<Scalar> num = gate * agg_v;
  const VectorX<Scalar> den = gate * col_sum;
  MatrixX<Scalar> out(m, qkv.v_node.cols());
  for (Index i = 0; i < m; ++i) {
    if (!(den(i) >= static_cast<Scalar>(cfg.denom_floor)))
      throw DegenerateAttention("attention denominator below floor");
    out.row(i) = num.row(i) / den(i);
  }
  return out;
}

// Node-kernel-only special case: gates carry the mask weights alone.
template <typename Scalar>
MatrixX<Scalar> node_level_attention(const BiLevelQkv<Scalar>& qkv,
                                     const CoarseGraph<Scalar>& coarse,
                                     const ClusterAssignment<Scalar>& cam,
                                     const AttentionConfig& cfg) {
  detail::check_qkv(qkv, coarse, cam);
  if (!(cfg.denom_floor > 0)) throw InvalidConfig("denom_floor must be positive");
  const Index m = cam.num_clusters();
  const Index dn = qkv.k_node.cols();
  const Index dv = qkv.v_node.cols();
  const MatrixX<Scalar> psi_q = feature_map(cfg.node_feature_map, qkv.q_node_level);
  const MatrixX<Scalar> psi_k = feature_map(cfg.node_feature_map, qkv.k_node);
  const SparseMatrixX<Scalar> mask = detail::masked_gate(coarse, cfg);
  const MatrixX<Scalar> agg_kv =
      cam.matrix().transpose() * detail::key_value_rows(psi_k, qkv.v_node);
  const MatrixX<Scalar> agg_k = cam.matrix().transpose() * psi_k;
  const MatrixX<Scalar> msg_kv = mask * agg_kv;
  const MatrixX<Scalar> msg_k = mask * agg_k;
  MatrixX<Scalar> out(m, dv);
  RowVectorX<Scalar> row(dn * dv);
  for (Index i = 0; i < m; ++i) {
    const Scalar den = psi_q.row(i).dot(msg_k.row(i));
    if (!(den >= static_cast<Scalar>(cfg.denom_floor)))
      throw DegenerateAttention("attention denominator below floor");
    row = msg_kv.row(i);
    const Eigen::Map<const MatrixX<Scalar>> mat(row.data(), dn, dv);
    out.row(i) = (psi_q.row(i) * mat) / den;
  }
  return out;
}

// Masked row-softmax attention between pooled cluster embeddings: the
// supplied cluster features act as both queries and keys, gated by the
// coarse connectivity. Row i is
//   sum_j gate_ij exp(x_i . x_j / sqrt(d)) V_j / (same without V_j).
template <typename Scalar>
MatrixX<Scalar> coarse_softmax_attention(const MatrixX<Scalar>& cluster_feats,
                                         const CoarseGraph<Scalar>& coarse,
                                         const MatrixX<Scalar>& values,
                                         const AttentionConfig& cfg) {
  const Index m = coarse.num_clusters();
  if (cluster_feats.rows() != m || values.rows() != m)
    throw ShapeMismatch("cluster features/values rows != cluster count");
  if (!(cfg.denom_floor > 0)) throw InvalidConfig("denom_floor must be positive");
  const SparseMatrixX<Scalar> gate =
      detail::kernel_gate(detail::masked_gate(coarse, cfg), cluster_feats,
                          cluster_feats, cfg);
  const MatrixX<Scalar> num = gate * values;
  const VectorX<Scalar> den = gate * VectorX<Scalar>::Ones(m);
  MatrixX<Scalar> out(m, values.cols());
  for (Index i = 0; i < m; ++i) {
    if (!(den(i) >= static_cast<Scalar>(cfg.denom_floor)))
      throw DegenerateAttention("masked softmax row has no support");
    out.row(i) = num.row(i) / den(i);
  }
  return out;
}

}  // namespace clusterattn

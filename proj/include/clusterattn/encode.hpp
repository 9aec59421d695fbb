#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "clusterattn/error.hpp"
#include "clusterattn/graph.hpp"
#include "clusterattn/types.hpp"

namespace clusterattn {

struct PipelineConfig {
  Index gcn_layers = 2;
  Index hidden_dim = 16;
  Index rwse_steps = 8;
  bool use_rwse = true;
  bool use_residual_ln = true;
  std::uint64_t seed = 0;
};

namespace detail {

// Row-stochastic random-walk matrix P = D^-1 A; isolated nodes walk in
// place (P_ii = 1).
template <typename Scalar>
SparseMatrixX<Scalar> random_walk_matrix(const Graph<Scalar>& g) {
  const Index n = g.num_nodes();
  std::vector<Eigen::Triplet<Scalar>> trips;
  trips.reserve(static_cast<std::size_t>(2 * g.num_edges() + n));
  for (Index u = 0; u < n; ++u) {
    const Index deg = g.degree(u);
    if (deg == 0) {
      trips.emplace_back(u, u, Scalar(1));
      continue;
    }
    const Scalar p = Scalar(1) / static_cast<Scalar>(deg);
    for (Index v : g.neighbors(u)) trips.emplace_back(u, v, p);
  }
  SparseMatrixX<Scalar> m(n, n);
  m.setFromTriplets(trips.begin(), trips.end());
  return m;
}

}  // namespace detail

// Random-walk structural encoding: column t-1 holds diag(P^t) for
// t = 1..steps. Small graphs use dense power accumulation; larger ones
// walk blocks of unit vectors through the sparse matrix so memory stays
// linear in the graph size.
template <typename Scalar>
MatrixX<Scalar> rwse(const Graph<Scalar>& g, Index steps) {
  if (steps < 1) throw InvalidConfig("rwse needs at least one step");
  const Index n = g.num_nodes();
  MatrixX<Scalar> enc(n, steps);
  if (n == 0) return enc;
  const SparseMatrixX<Scalar> p = detail::random_walk_matrix(g);
  if (n <= 512) {
    const MatrixX<Scalar> pd(p);
    MatrixX<Scalar> acc = pd;
    for (Index t = 0; t < steps; ++t) {
      enc.col(t) = acc.diagonal();
      if (t + 1 < steps) acc = acc * pd;
    }
    return enc;
  }
  constexpr Index kBlock = 64;
  for (Index start = 0; start < n; start += kBlock) {
    const Index width = std::min(kBlock, n - start);
    MatrixX<Scalar> block = MatrixX<Scalar>::Zero(n, width);
    for (Index c = 0; c < width; ++c) block(start + c, c) = Scalar(1);
    for (Index t = 0; t < steps; ++t) {
      block = p * block;
      for (Index c = 0; c < width; ++c) enc(start + c, t) = block(start + c, c);
    }
  }
  return enc;
}

// Graph convolution with renormalized symmetric propagation:
// X' = relu(D^-1/2 (A + I) D^-1/2 X W).
template <typename Scalar>
MatrixX<Scalar> gcn_layer(const Graph<Scalar>& g, const MatrixX<Scalar>& x,
                          const MatrixX<Scalar>& w) {
  const Index n = g.num_nodes();
  if (x.rows() != n) throw ShapeMismatch("feature rows != num_nodes");
  if (w.rows() != x.cols()) throw ShapeMismatch("weight rows != feature dim");
  const MatrixX<Scalar> y = x * w;
  VectorX<Scalar> inv_sqrt(n);
  for (Index u = 0; u < n; ++u)
    inv_sqrt(u) = Scalar(1) / std::sqrt(static_cast<Scalar>(g.degree(u) + 1));
  MatrixX<Scalar> out(n, y.cols());
  for (Index u = 0; u < n; ++u) {
    RowVectorX<Scalar> acc = inv_sqrt(u) * inv_sqrt(u) * y.row(u);  // self-loop
    for (Index v : g.neighbors(u)) acc += inv_sqrt(u) * inv_sqrt(v) * y.row(v);
    out.row(u) = acc.cwiseMax(Scalar(0));
  }
  return out;
}

// Layer norm of x + delta with affine parameters, epsilon 1e-5,
// population variance.
template <typename Scalar>
VectorX<Scalar> residual_layer_norm(const VectorX<Scalar>& x,
                                    const VectorX<Scalar>& delta,
                                    const VectorX<Scalar>& gain,
                                    const VectorX<Scalar>& bias) {
  const Index d = x.size();
  if (delta.size() != d || gain.size() != d || bias.size() != d)
    throw ShapeMismatch("layer norm operands must have equal length");
  if (d < 2) throw ShapeMismatch("layer norm needs length >= 2");
  const VectorX<Scalar> z = x + delta;
  const Scalar mean = z.mean();
  const Scalar var = (z.array() - mean).square().sum() / static_cast<Scalar>(d);
  const Scalar denom = std::sqrt(var + static_cast<Scalar>(1e-5));
  return (((z.array() - mean) / denom) * gain.array() + bias.array()).matrix();
}

// Column-wise mean over cluster outputs. Each column is summed in value
// order, so reordering the rows cannot change the result.
template <typename Scalar>
VectorX<Scalar> mean_pool(const MatrixX<Scalar>& cluster_outputs) {
  const Index m = cluster_outputs.rows();
  if (m == 0) throw EmptyInput("mean pool of zero rows");
  VectorX<Scalar> out(cluster_outputs.cols());
  std::vector<Scalar> column(static_cast<std::size_t>(m));
  for (Index j = 0; j < cluster_outputs.cols(); ++j) {
    for (Index i = 0; i < m; ++i) column[static_cast<std::size_t>(i)] = cluster_outputs(i, j);
    std::sort(column.begin(), column.end());
    Scalar sum = 0;
    for (Scalar v : column) sum += v;
    out(j) = sum / static_cast<Scalar>(m);
  }
  return out;
}

}  // namespace clusterattn

#pragma once

#include <algorithm>
#include <cmath>

#include "clusterattn/error.hpp"
#include "clusterattn/types.hpp"

namespace clusterattn {

// Node-level feature map psi. elu-plus-one is strictly positive on finite
// input; relu is nonnegative (and can vanish, see DegenerateAttention).
enum class FeatureMapKind { EluPlusOne, Relu };

template <typename Scalar>
Scalar feature_map_scalar(FeatureMapKind kind, Scalar x) {
  if (kind == FeatureMapKind::EluPlusOne)
    return x > Scalar(0) ? x + Scalar(1) : std::exp(x);
  return x > Scalar(0) ? x : Scalar(0);
}

template <typename Derived>
MatrixX<typename Derived::Scalar> feature_map(FeatureMapKind kind,
                                              const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  if (!x.allFinite()) throw NonFiniteInput("feature map input must be finite");
  MatrixX<Scalar> out(x.rows(), x.cols());
  for (Index j = 0; j < x.cols(); ++j)
    for (Index i = 0; i < x.rows(); ++i)
      out(i, j) = feature_map_scalar(kind, x(i, j));
  return out;
}

// Cluster-level kernel: exp(Q.K / sqrt(d_k)), logits clamped to
// +-logit_clamp before exponentiation as an overflow guard.
struct ClusterKernel {
  Index dim = 0;  // d_k used in the sqrt scaling
  double logit_clamp = 40.0;
};

template <typename Derived1, typename Derived2>
typename Derived1::Scalar cluster_kernel(const ClusterKernel& kind,
                                         const Eigen::MatrixBase<Derived1>& q,
                                         const Eigen::MatrixBase<Derived2>& k) {
  using Scalar = typename Derived1::Scalar;
  if (q.size() != k.size()) throw ShapeMismatch("cluster kernel arity mismatch");
  if (kind.dim <= 0) throw InvalidConfig("cluster kernel dim must be positive");
  const Scalar logit = q.dot(k) / std::sqrt(static_cast<Scalar>(kind.dim));
  const Scalar clamp = static_cast<Scalar>(kind.logit_clamp);
  return std::exp(std::clamp(logit, -clamp, clamp));
}

// Bi-level kernel combination of a cluster kernel value kC and a node
// kernel value kN: either their product or the convex sum
// alpha*kC + (1-alpha)*kN.
struct BiLevelKernel {
  enum class Combine { Tensor, Convex };
  Combine combine = Combine::Tensor;
  double alpha = 0.5;  // convex only
};

inline void check_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw InvalidAlpha("alpha must lie in [0, 1]");
}

template <typename Scalar>
Scalar bilevel_kernel(const BiLevelKernel& kind, Scalar k_cluster, Scalar k_node) {
  if (kind.combine == BiLevelKernel::Combine::Tensor) return k_cluster * k_node;
  check_alpha(kind.alpha);
  const Scalar a = static_cast<Scalar>(kind.alpha);
  return a * k_cluster + (Scalar(1) - a) * k_node;
}

// Feature map realizing the product kernel: flattened outer product,
// row-major over (phi index, psi index), so
// <phi(a) (x) psi(b), phi(c) (x) psi(d)> = <phi(a), phi(c)> <psi(b), psi(d)>.
template <typename Scalar>
VectorX<Scalar> tensor_product_feature_map(const VectorX<Scalar>& phi,
                                           const VectorX<Scalar>& psi) {
  VectorX<Scalar> out(phi.size() * psi.size());
  for (Index i = 0; i < phi.size(); ++i)
    out.segment(i * psi.size(), psi.size()) = phi(i) * psi;
  return out;
}

// Feature map realizing the convex sum kernel: weighted concatenation
// sqrt(alpha)*phi followed by sqrt(1-alpha)*psi.
template <typename Scalar>
VectorX<Scalar> convex_concat_feature_map(double alpha, const VectorX<Scalar>& phi,
                                          const VectorX<Scalar>& psi) {
  check_alpha(alpha);
  VectorX<Scalar> out(phi.size() + psi.size());
  out.head(phi.size()) = std::sqrt(static_cast<Scalar>(alpha)) * phi;
  out.tail(psi.size()) = std::sqrt(static_cast<Scalar>(1.0 - alpha)) * psi;
  return out;
}

}  // namespace clusterattn

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "clusterattn/kernels.hpp"
#include "clusterattn/random.hpp"

using namespace clusterattn;

namespace {

VectorX<double> vec(std::initializer_list<double> xs) {
  VectorX<double> v(static_cast<Index>(xs.size()));
  Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

}  // namespace

TEST_CASE("elu-plus-one feature map") {
  CHECK(feature_map(FeatureMapKind::EluPlusOne, vec({0}))(0) == doctest::Approx(1.0));
  auto out = feature_map(FeatureMapKind::EluPlusOne, vec({1, -1}));
  CHECK(out(0) == doctest::Approx(2.0));
  CHECK(out(1) == doctest::Approx(std::exp(-1.0)));
}

TEST_CASE("relu feature map") {
  auto out = feature_map(FeatureMapKind::Relu, vec({-2, 3}));
  CHECK(out(0) == 0.0);
  CHECK(out(1) == 3.0);
}

TEST_CASE("feature map rejects non-finite input") {
  CHECK_THROWS_AS(
      feature_map(FeatureMapKind::EluPlusOne,
                  vec({std::numeric_limits<double>::quiet_NaN()})),
      NonFiniteInput);
  CHECK_THROWS_AS(feature_map(FeatureMapKind::Relu,
                              vec({std::numeric_limits<double>::infinity()})),
                  NonFiniteInput);
}

TEST_CASE("feature map positivity") {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const double x = rng.normal() * 20.0;
    CHECK(feature_map_scalar(FeatureMapKind::EluPlusOne, x) > 0.0);
    CHECK(feature_map_scalar(FeatureMapKind::Relu, x) >= 0.0);
  }
}

TEST_CASE("cluster kernel worked values") {
  ClusterKernel kind{.dim = 2};
  CHECK(cluster_kernel(kind, vec({0, 0}), vec({0, 0})) == doctest::Approx(1.0));
  CHECK(cluster_kernel(kind, vec({1, 0}), vec({0, 1})) == doctest::Approx(1.0));
  CHECK(cluster_kernel(kind, vec({1, 0}), vec({1, 0})) ==
        doctest::Approx(std::exp(1.0 / std::sqrt(2.0))));
  CHECK_THROWS_AS(cluster_kernel(kind, vec({1, 0}), vec({1, 0, 0})), ShapeMismatch);
}

TEST_CASE("cluster kernel clamps extreme logits") {
  ClusterKernel kind{.dim = 1};
  CHECK(cluster_kernel(kind, vec({100.0}), vec({100.0})) ==
        doctest::Approx(std::exp(40.0)));
  CHECK(cluster_kernel(kind, vec({100.0}), vec({-100.0})) ==
        doctest::Approx(std::exp(-40.0)));
  CHECK(cluster_kernel(kind, vec({3.0}), vec({-4.0})) > 0.0);
}

TEST_CASE("bilevel kernel combinations") {
  CHECK(bilevel_kernel({BiLevelKernel::Combine::Tensor, 0.0}, 2.0, 3.0) == 6.0);
  CHECK(bilevel_kernel({BiLevelKernel::Combine::Convex, 1.0}, 5.0, 123.0) == 5.0);
  CHECK(bilevel_kernel({BiLevelKernel::Combine::Convex, 0.25}, 4.0, 8.0) ==
        doctest::Approx(7.0));
  CHECK_THROWS_AS(bilevel_kernel({BiLevelKernel::Combine::Convex, 1.5}, 1.0, 1.0),
                  InvalidAlpha);
  CHECK_THROWS_AS(bilevel_kernel({BiLevelKernel::Combine::Convex, -0.1}, 1.0, 1.0),
                  InvalidAlpha);
}

TEST_CASE("bilevel kernel symmetry under symmetric base kernels") {
  Rng rng(6);
  ClusterKernel kind{.dim = 3};
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = random_normal_matrix<double>(rng, 3, 1);
    const auto b = random_normal_matrix<double>(rng, 3, 1);
    const double kc_ab = cluster_kernel(kind, VectorX<double>(a), VectorX<double>(b));
    const double kc_ba = cluster_kernel(kind, VectorX<double>(b), VectorX<double>(a));
    const double kn = rng.uniform();
    CHECK(bilevel_kernel({BiLevelKernel::Combine::Tensor, 0.0}, kc_ab, kn) ==
          doctest::Approx(bilevel_kernel({BiLevelKernel::Combine::Tensor, 0.0}, kc_ba, kn)));
    CHECK(bilevel_kernel({BiLevelKernel::Combine::Convex, 0.3}, kc_ab, kn) ==
          doctest::Approx(bilevel_kernel({BiLevelKernel::Combine::Convex, 0.3}, kc_ba, kn)));
  }
}

TEST_CASE("tensor product feature map layout") {
  auto out = tensor_product_feature_map(vec({1, 2}), vec({3, 4}));
  REQUIRE(out.size() == 4);
  CHECK(out(0) == 3);
  CHECK(out(1) == 4);
  CHECK(out(2) == 6);
  CHECK(out(3) == 8);
  // unit second factor reproduces the first
  CHECK(tensor_product_feature_map(vec({5, -2, 7}), vec({1})) == vec({5, -2, 7}));
}

TEST_CASE("tensor product feature map realizes the product kernel") {
  Rng rng(8);
  for (int trial = 0; trial < 400; ++trial) {
    const Index dc = 1 + static_cast<Index>(rng.uniform_index(8));
    const Index dn = 1 + static_cast<Index>(rng.uniform_index(8));
    const VectorX<double> a = random_normal_matrix<double>(rng, dc, 1);
    const VectorX<double> b = random_normal_matrix<double>(rng, dn, 1);
    const VectorX<double> c = random_normal_matrix<double>(rng, dc, 1);
    const VectorX<double> d = random_normal_matrix<double>(rng, dn, 1);
    // independent double-loop inner product
    double slow = 0.0;
    for (Index i = 0; i < dc; ++i)
      for (Index j = 0; j < dn; ++j) slow += a(i) * b(j) * c(i) * d(j);
    const double via_map =
        tensor_product_feature_map(a, b).dot(tensor_product_feature_map(c, d));
    CHECK(std::abs(via_map - a.dot(c) * b.dot(d)) <= 1e-12);
    CHECK(std::abs(via_map - slow) <= 1e-12);
  }
}

TEST_CASE("convex concatenation feature map") {
  auto at_one = convex_concat_feature_map(1.0, vec({1, 2}), vec({3}));
  CHECK(at_one(0) == 1);
  CHECK(at_one(1) == 2);
  CHECK(at_one(2) == 0);
  auto half = convex_concat_feature_map(0.5, vec({2}), vec({2}));
  CHECK(half(0) == doctest::Approx(std::sqrt(2.0)));
  CHECK(half(1) == doctest::Approx(std::sqrt(2.0)));
  CHECK_THROWS_AS(convex_concat_feature_map(1.2, vec({1}), vec({1})), InvalidAlpha);
}

TEST_CASE("convex concatenation realizes the convex sum kernel") {
  Rng rng(9);
  for (int trial = 0; trial < 400; ++trial) {
    const Index dc = 1 + static_cast<Index>(rng.uniform_index(8));
    const Index dn = 1 + static_cast<Index>(rng.uniform_index(8));
    const double alpha = rng.uniform();
    const VectorX<double> a = random_normal_matrix<double>(rng, dc, 1);
    const VectorX<double> b = random_normal_matrix<double>(rng, dn, 1);
    const VectorX<double> c = random_normal_matrix<double>(rng, dc, 1);
    const VectorX<double> d = random_normal_matrix<double>(rng, dn, 1);
    const double via_map = convex_concat_feature_map(alpha, a, b)
                               .dot(convex_concat_feature_map(alpha, c, d));
    CHECK(std::abs(via_map - (alpha * a.dot(c) + (1.0 - alpha) * b.dot(d))) <= 1e-12);
  }
}

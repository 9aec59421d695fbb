#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "clusterattn/attention.hpp"
#include "clusterattn/io.hpp"
#include "clusterattn/random.hpp"

namespace clusterattn {

// Tolerances of the verification suites, fixed here once.
namespace tol {
inline constexpr double oracle = 1e-8;
inline constexpr double feature_map_identity = 1e-12;
inline constexpr double softmax_reduction = 1e-10;
inline constexpr double endpoint = 1e-12;
inline constexpr double normalization = 1e-12;
inline constexpr double permutation = 1e-12;
}  // namespace tol

struct VerifyOptions {
  std::uint64_t seed = 0;
  int trials = 50;
  // Test hook: added to every fast-path output entry before comparison,
  // turning the oracle suites into a negative control when nonzero.
  double corrupt_fast = 0.0;
};

struct SuiteResult {
  std::string name;
  double max_error = 0.0;
  double tolerance = 0.0;
  int instances = 0;
  int degenerate = 0;  // instances where both routes raised DegenerateAttention
  bool pass = true;
  double seconds = 0.0;
};

struct VerifyReport {
  std::uint64_t seed = 0;
  int trials = 0;
  std::vector<SuiteResult> suites;
  bool pass = true;

  const SuiteResult& suite(const std::string& name) const {
    for (const auto& s : suites)
      if (s.name == name) return s;
    throw InvalidConfig("unknown suite: " + name);
  }
};

// One randomly drawn attention problem. Instances alternate hard and soft
// assignments, both feature maps and both mask modes; self-loops stay on
// so non-degenerate denominators are the common case.
struct RandomInstance {
  Graph<double> graph;
  ClusterAssignment<double> cam;
  CoarseGraph<double> coarse;
  BiLevelQkv<double> qkv;
  AttentionConfig cfg;
};

namespace detail {

inline Graph<double> random_er_graph(Rng& rng, Index n, double expected_degree,
                                     Index feat_dim) {
  std::vector<std::pair<Index, Index>> edges;
  const double p = std::min(1.0, expected_degree / std::max<double>(1.0, n - 1));
  for (Index u = 0; u < n; ++u)
    for (Index v = u + 1; v < n; ++v)
      if (rng.uniform() < p) edges.emplace_back(u, v);
  return build_graph<double>(edges, n, random_normal_matrix<double>(rng, n, feat_dim));
}

inline ClusterAssignment<double> random_hard_cam(Rng& rng, Index n, Index m) {
  std::vector<Index> labels(static_cast<std::size_t>(n));
  for (Index t = 0; t < n; ++t) labels[static_cast<std::size_t>(t)] = t % m;
  rng.shuffle(labels);
  std::vector<Index> sizes(static_cast<std::size_t>(m), 0);
  for (Index l : labels) sizes[static_cast<std::size_t>(l)]++;
  std::vector<CamEntry<double>> entries;
  entries.reserve(static_cast<std::size_t>(n));
  for (Index t = 0; t < n; ++t) {
    const Index l = labels[static_cast<std::size_t>(t)];
    entries.push_back({t, l, 1.0 / static_cast<double>(sizes[static_cast<std::size_t>(l)])});
  }
  return ClusterAssignment<double>::make(n, m, std::move(entries), true);
}

inline ClusterAssignment<double> random_soft_cam(Rng& rng, Index n, Index m) {
  std::vector<CamEntry<double>> entries;
  for (Index j = 0; j < m; ++j) entries.push_back({j % n, j, rng.uniform(0.5, 1.5)});
  for (Index t = 0; t < n; ++t) {
    const Index extra = 1 + static_cast<Index>(rng.uniform_index(2));
    for (Index r = 0; r < extra; ++r)
      entries.push_back(
          {t, static_cast<Index>(rng.uniform_index(static_cast<std::uint64_t>(m))),
           rng.uniform(0.1, 1.0)});
  }
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    return std::pair(a.node, a.cluster) < std::pair(b.node, b.cluster);
  });
  entries.erase(std::unique(entries.begin(), entries.end(),
                            [](const auto& a, const auto& b) {
                              return a.node == b.node && a.cluster == b.cluster;
                            }),
                entries.end());
  return ClusterAssignment<double>::make(n, m, std::move(entries), false);
}

inline RandomInstance make_random_instance(Rng& rng, int salt) {
  RandomInstance inst;
  const Index n = 20 + static_cast<Index>(rng.uniform_index(181));  // <= 200
  const Index m = 2 + static_cast<Index>(rng.uniform_index(15));    // 2..16
  const Index d = 4 + static_cast<Index>(rng.uniform_index(13));    // <= 16
  const Index d_node = 4 + static_cast<Index>(rng.uniform_index(13));
  const Index d_cluster = 4 + static_cast<Index>(rng.uniform_index(13));
  const Index d_value = 4 + static_cast<Index>(rng.uniform_index(13));
  inst.graph = random_er_graph(rng, n, rng.uniform(2.0, 8.0), d);
  inst.cam = salt % 2 == 0 ? random_hard_cam(rng, n, m) : random_soft_cam(rng, n, m);
  inst.coarse = coarsen(inst.graph, inst.cam);
  const auto weights = ProjectionWeights<double>::glorot(d, d_node, d_cluster,
                                                         d_value, rng.next_u64());
  inst.qkv = project_bilevel(inst.graph.features(), inst.cam, weights);
  inst.cfg.node_feature_map =
      salt % 4 < 2 ? FeatureMapKind::EluPlusOne : FeatureMapKind::Relu;
  inst.cfg.cluster_kernel = {.dim = d_cluster};
  inst.cfg.mask_mode = salt % 8 < 4 ? AttentionConfig::MaskMode::Binary
                                    : AttentionConfig::MaskMode::Weighted;
  return inst;
}

template <typename F>
std::optional<MatrixX<double>> run_or_degenerate(F&& f) {
  try {
    return std::forward<F>(f)();
  } catch (const DegenerateAttention&) {
    return std::nullopt;
  }
}

// max_t |a_t - b_t| / max(1, |b_t|), with b the reference.
inline double relative_error(const MatrixX<double>& a, const MatrixX<double>& b) {
  double worst = 0.0;
  for (Index i = 0; i < b.rows(); ++i)
    for (Index j = 0; j < b.cols(); ++j)
      worst = std::max(worst,
                       std::abs(a(i, j) - b(i, j)) / std::max(1.0, std::abs(b(i, j))));
  return worst;
}

class SuiteTimer {
 public:
  explicit SuiteTimer(SuiteResult& r) : result_(r), start_(clock::now()) {}
  ~SuiteTimer() {
    result_.seconds =
        std::chrono::duration<double>(clock::now() - start_).count();
  }

 private:
  using clock = std::chrono::steady_clock;
  SuiteResult& result_;
  clock::time_point start_;
};

}  // namespace detail

// Runs every identity and invariant suite on seeded random instances and
// reports the worst observed errors against the pinned tolerances.
//
// Suite sizing: the oracle suites use `trials` instances, the feature-map
// identities use 20 tuples per trial, and the remaining suites use
// min(trials, 20) instances.
inline VerifyReport run_verification(const VerifyOptions& opts) {
  if (opts.trials < 1) throw InvalidConfig("verification needs at least one trial");
  VerifyReport report;
  report.seed = opts.seed;
  report.trials = opts.trials;
  Rng master(opts.seed);
  const std::uint64_t seed_oracle = master.next_u64();
  const std::uint64_t seed_prop = master.next_u64();
  const std::uint64_t seed_reduction = master.next_u64();
  const std::uint64_t seed_endpoint = master.next_u64();
  const std::uint64_t seed_perm = master.next_u64();
  const int few = std::min(opts.trials, 20);

  SuiteResult tensor_suite{.name = "tensor_vs_reference", .tolerance = tol::oracle};
  SuiteResult convex_suite{.name = "convex_vs_reference", .tolerance = tol::oracle};
  SuiteResult norm_suite{.name = "normalization", .tolerance = tol::normalization};
  {
    detail::SuiteTimer t1(tensor_suite);
    Rng rng(seed_oracle);
    const auto check_normalization = [&](const std::vector<MatrixX<double>>& weights) {
      for (const auto& w : weights) {
        norm_suite.max_error = std::max(norm_suite.max_error, std::abs(w.sum() - 1.0));
        norm_suite.max_error =
            std::max(norm_suite.max_error, std::max(0.0, -w.minCoeff()));
      }
      norm_suite.instances++;
    };
    for (int trial = 0; trial < opts.trials; ++trial) {
      RandomInstance inst = detail::make_random_instance(rng, trial);

      inst.cfg.kernel = {BiLevelKernel::Combine::Tensor, 0.5};
      std::vector<MatrixX<double>> weights;
      auto ref = detail::run_or_degenerate([&] {
        return attention_reference(inst.qkv, inst.coarse, inst.cam, inst.cfg, &weights);
      });
      auto fast = detail::run_or_degenerate(
          [&] { return attention_tensor(inst.qkv, inst.coarse, inst.cam, inst.cfg); });
      tensor_suite.instances++;
      if (ref.has_value() != fast.has_value()) {
        tensor_suite.pass = false;  // one route degenerated, the other did not
      } else if (!ref) {
        tensor_suite.degenerate++;
      } else {
        if (opts.corrupt_fast != 0.0) fast->array() += opts.corrupt_fast;
        tensor_suite.max_error =
            std::max(tensor_suite.max_error, detail::relative_error(*fast, *ref));
        check_normalization(weights);
      }

      inst.cfg.kernel.combine = BiLevelKernel::Combine::Convex;
      for (const double alpha : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        inst.cfg.kernel.alpha = alpha;
        std::vector<MatrixX<double>> cw;
        auto cref = detail::run_or_degenerate([&] {
          return attention_reference(inst.qkv, inst.coarse, inst.cam, inst.cfg, &cw);
        });
        auto cfast = detail::run_or_degenerate(
            [&] { return attention_convex(inst.qkv, inst.coarse, inst.cam, inst.cfg); });
        convex_suite.instances++;
        if (cref.has_value() != cfast.has_value()) {
          convex_suite.pass = false;
        } else if (!cref) {
          convex_suite.degenerate++;
        } else {
          if (opts.corrupt_fast != 0.0) cfast->array() += opts.corrupt_fast;
          convex_suite.max_error =
              std::max(convex_suite.max_error, detail::relative_error(*cfast, *cref));
          check_normalization(cw);
        }
      }
    }
  }
  tensor_suite.pass = tensor_suite.pass && tensor_suite.max_error <= tensor_suite.tolerance;
  convex_suite.pass = convex_suite.pass && convex_suite.max_error <= convex_suite.tolerance;
  norm_suite.pass = norm_suite.max_error <= norm_suite.tolerance;

  // Feature-map identities, checked with explicitly computable maps
  // (identity at the cluster level, identity or elu-plus-one at the node
  // level) against independent double-loop inner products.
  SuiteResult prop_tensor{.name = "feature_map_product_identity",
                          .tolerance = tol::feature_map_identity};
  SuiteResult prop_convex{.name = "feature_map_concat_identity",
                          .tolerance = tol::feature_map_identity};
  {
    detail::SuiteTimer t(prop_tensor);
    Rng rng(seed_prop);
    for (int tuple = 0; tuple < opts.trials * 20; ++tuple) {
      const Index dc = 1 + static_cast<Index>(rng.uniform_index(8));
      const Index dn = 1 + static_cast<Index>(rng.uniform_index(8));
      const VectorX<double> big_q = random_normal_matrix<double>(rng, dc, 1);
      const VectorX<double> big_k = random_normal_matrix<double>(rng, dc, 1);
      VectorX<double> q = random_normal_matrix<double>(rng, dn, 1);
      VectorX<double> k = random_normal_matrix<double>(rng, dn, 1);
      if (tuple % 2 == 1) {
        q = feature_map(FeatureMapKind::EluPlusOne, q);
        k = feature_map(FeatureMapKind::EluPlusOne, k);
      }
      const double kernel_c = big_q.dot(big_k);
      const double kernel_n = q.dot(k);

      double slow = 0.0;  // independent double loop over (cluster, node) coords
      for (Index a = 0; a < dc; ++a)
        for (Index b = 0; b < dn; ++b)
          slow += (big_q(a) * q(b)) * (big_k(a) * k(b));
      const VectorX<double> lhs = tensor_product_feature_map(big_q, q);
      const VectorX<double> rhs = tensor_product_feature_map(big_k, k);
      prop_tensor.max_error = std::max(
          {prop_tensor.max_error, std::abs(kernel_c * kernel_n - slow),
           std::abs(kernel_c * kernel_n - lhs.dot(rhs))});
      prop_tensor.instances++;

      const double alpha = rng.uniform();
      double slow_cat = 0.0;
      for (Index a = 0; a < dc; ++a) slow_cat += alpha * big_q(a) * big_k(a);
      for (Index b = 0; b < dn; ++b) slow_cat += (1.0 - alpha) * q(b) * k(b);
      const VectorX<double> lc = convex_concat_feature_map(alpha, big_q, q);
      const VectorX<double> rc = convex_concat_feature_map(alpha, big_k, k);
      const double expected = alpha * kernel_c + (1.0 - alpha) * kernel_n;
      prop_convex.max_error =
          std::max({prop_convex.max_error, std::abs(expected - slow_cat),
                    std::abs(expected - lc.dot(rc))});
      prop_convex.instances++;
    }
    prop_convex.seconds = 0.0;  // timed jointly under prop_tensor
  }
  prop_tensor.pass = prop_tensor.max_error <= prop_tensor.tolerance;
  prop_convex.pass = prop_convex.max_error <= prop_convex.tolerance;

  // Product-kernel attention with a constant node feature map and hard
  // 1/|V_j| weights must reproduce masked softmax attention over the
  // mean-pooled clusters.
  SuiteResult reduction{.name = "pooled_softmax_reduction",
                        .tolerance = tol::softmax_reduction};
  {
    detail::SuiteTimer t(reduction);
    Rng rng(seed_reduction);
    for (int trial = 0; trial < few; ++trial) {
      RandomInstance inst = detail::make_random_instance(rng, 2 * trial);  // hard CAMs
      const Index m = inst.cam.num_clusters();
      const MatrixX<double> feats =
          random_normal_matrix<double>(rng, m, inst.qkv.q_cluster.cols());
      inst.qkv.q_cluster = feats;
      inst.qkv.k_cluster = feats;
      // Zero node-level inputs: elu(0)+1 = 1, a constant map.
      inst.qkv.q_node_level.setZero();
      inst.qkv.k_node.setZero();
      inst.cfg.node_feature_map = FeatureMapKind::EluPlusOne;
      inst.cfg.kernel = {BiLevelKernel::Combine::Tensor, 0.5};
      inst.cfg.cluster_kernel = {.dim = feats.cols()};

      const MatrixX<double> pooled_values =
          inst.cam.matrix().transpose() * inst.qkv.v_node;
      const MatrixX<double> expected =
          coarse_softmax_attention(feats, inst.coarse, pooled_values, inst.cfg);
      const MatrixX<double> got =
          attention_tensor(inst.qkv, inst.coarse, inst.cam, inst.cfg);
      reduction.max_error =
          std::max(reduction.max_error, detail::relative_error(got, expected));
      reduction.instances++;
    }
  }
  reduction.pass = reduction.max_error <= reduction.tolerance;

  // Convex endpoints equal the single-granularity attention variants.
  SuiteResult end_one{.name = "convex_alpha_one_endpoint", .tolerance = tol::endpoint};
  SuiteResult end_zero{.name = "convex_alpha_zero_endpoint", .tolerance = tol::endpoint};
  {
    detail::SuiteTimer t(end_one);
    Rng rng(seed_endpoint);
    for (int trial = 0; trial < few; ++trial) {
      RandomInstance inst = detail::make_random_instance(rng, trial);
      inst.cfg.kernel = {BiLevelKernel::Combine::Convex, 1.0};
      const MatrixX<double> cluster_only =
          cluster_level_attention(inst.qkv, inst.coarse, inst.cam, inst.cfg);
      const MatrixX<double> at_one =
          attention_convex(inst.qkv, inst.coarse, inst.cam, inst.cfg);
      end_one.max_error =
          std::max(end_one.max_error, detail::relative_error(at_one, cluster_only));
      end_one.instances++;

      inst.cfg.kernel.alpha = 0.0;
      auto node_only = detail::run_or_degenerate(
          [&] { return node_level_attention(inst.qkv, inst.coarse, inst.cam, inst.cfg); });
      auto at_zero = detail::run_or_degenerate(
          [&] { return attention_convex(inst.qkv, inst.coarse, inst.cam, inst.cfg); });
      end_zero.instances++;
      if (node_only.has_value() != at_zero.has_value()) {
        end_zero.pass = false;
      } else if (!node_only) {
        end_zero.degenerate++;
      } else {
        end_zero.max_error =
            std::max(end_zero.max_error, detail::relative_error(*at_zero, *node_only));
      }
    }
    end_zero.seconds = 0.0;  // timed jointly under end_one
  }
  end_one.pass = end_one.max_error <= end_one.tolerance;
  end_zero.pass = end_zero.pass && end_zero.max_error <= end_zero.tolerance;

  // Permutation equivariance: renaming nodes leaves every cluster output
  // unchanged; renaming clusters permutes the output rows identically.
  SuiteResult perm_node{.name = "node_permutation_equivariance",
                        .tolerance = tol::permutation};
  SuiteResult perm_cluster{.name = "cluster_permutation_equivariance",
                           .tolerance = tol::permutation};
  {
    detail::SuiteTimer t(perm_node);
    Rng rng(seed_perm);
    for (int trial = 0; trial < few; ++trial) {
      RandomInstance inst = detail::make_random_instance(rng, 2 * trial);  // hard CAMs
      inst.cfg.node_feature_map = FeatureMapKind::EluPlusOne;
      if (trial % 2 == 0)
        inst.cfg.kernel = {BiLevelKernel::Combine::Tensor, 0.5};
      else
        inst.cfg.kernel = {BiLevelKernel::Combine::Convex, 0.5};
      const auto run = [&](const BiLevelQkv<double>& qkv, const CoarseGraph<double>& coarse,
                           const ClusterAssignment<double>& cam) {
        return inst.cfg.kernel.combine == BiLevelKernel::Combine::Tensor
                   ? attention_tensor(qkv, coarse, cam, inst.cfg)
                   : attention_convex(qkv, coarse, cam, inst.cfg);
      };
      const auto weights = ProjectionWeights<double>::glorot(
          inst.graph.feat_dim(), inst.qkv.q_node_level.cols(),
          inst.qkv.q_cluster.cols(), inst.qkv.v_node.cols(), rng.next_u64());
      const BiLevelQkv<double> qkv0 =
          project_bilevel(inst.graph.features(), inst.cam, weights);
      const MatrixX<double> out0 = run(qkv0, inst.coarse, inst.cam);

      const auto node_perm = rng.permutation(inst.graph.num_nodes());
      const Graph<double> pg = permute_graph(inst.graph, node_perm);
      const ClusterAssignment<double> pcam = inst.cam.permuted_rows(node_perm);
      const CoarseGraph<double> pcoarse = coarsen(pg, pcam);
      const BiLevelQkv<double> pqkv = project_bilevel(pg.features(), pcam, weights);
      perm_node.max_error = std::max(
          perm_node.max_error, detail::relative_error(run(pqkv, pcoarse, pcam), out0));
      perm_node.instances++;

      const auto cluster_perm = rng.permutation(inst.cam.num_clusters());
      const ClusterAssignment<double> ccam = inst.cam.permuted_columns(cluster_perm);
      const CoarseGraph<double> ccoarse = coarsen(inst.graph, ccam);
      const BiLevelQkv<double> cqkv = project_bilevel(inst.graph.features(), ccam, weights);
      const MatrixX<double> cout = run(cqkv, ccoarse, ccam);
      MatrixX<double> expected(out0.rows(), out0.cols());
      for (Index i = 0; i < out0.rows(); ++i)
        expected.row(cluster_perm[static_cast<std::size_t>(i)]) = out0.row(i);
      perm_cluster.max_error =
          std::max(perm_cluster.max_error, detail::relative_error(cout, expected));
      perm_cluster.instances++;
    }
    perm_cluster.seconds = 0.0;  // timed jointly under perm_node
  }
  perm_node.pass = perm_node.max_error <= perm_node.tolerance;
  perm_cluster.pass = perm_cluster.max_error <= perm_cluster.tolerance;

  report.suites = {tensor_suite, convex_suite, norm_suite,   prop_tensor,
                   prop_convex,  reduction,    end_one,      end_zero,
                   perm_node,    perm_cluster};
  report.pass = std::all_of(report.suites.begin(), report.suites.end(),
                            [](const SuiteResult& s) { return s.pass; });
  return report;
}

inline ordered_json verify_report_json(const VerifyReport& report) {
  ordered_json j;
  j["config"] = {{"seed", report.seed}, {"trials", report.trials}};
  j["verdict"] = report.pass ? "PASS" : "FAIL";
  ordered_json suites = ordered_json::array();
  for (const auto& s : report.suites)
    suites.push_back({{"name", s.name},
                      {"max_error", s.max_error},
                      {"tolerance", s.tolerance},
                      {"instances", s.instances},
                      {"degenerate", s.degenerate},
                      {"pass", s.pass}});
  j["suites"] = std::move(suites);
  return j;
}

}  // namespace clusterattn

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "clusterattn/attention.hpp"
#include "clusterattn/io.hpp"
#include "clusterattn/partition.hpp"
#include "clusterattn/random.hpp"

namespace clusterattn {

struct BenchOptions {
  std::vector<Index> sizes;  // ascending, at least 3
  double clusters_per_node_ratio = 0.125;
  int repeats = 3;
  std::uint64_t seed = 0;
  Index feat_dim = 16;
  double expected_degree = 8.0;
  // Each timing sample accumulates at least this much wall time.
  double min_sample_seconds = 0.08;
};

struct BenchRow {
  Index num_nodes = 0;
  Index num_clusters = 0;
  Index num_edges = 0;
  Index coarse_edges = 0;
  double reference_seconds = 0.0;
  double fast_seconds = 0.0;
};

struct BenchReport {
  BenchOptions options;
  std::vector<BenchRow> rows;
  double reference_slope = 0.0;
  double fast_slope = 0.0;
};

namespace detail {

// G(n, p) sampler with geometric skips, O(edges) work.
inline Graph<double> er_graph(Rng& rng, Index n, double expected_degree, Index feat_dim) {
  const double p = std::min(1.0, expected_degree / std::max<double>(1.0, n - 1));
  std::vector<std::pair<Index, Index>> edges;
  const double log_q = std::log1p(-p);
  for (Index u = 0; u < n; ++u) {
    Index v = u;
    while (true) {
      const double r = std::max(rng.uniform(), 1e-300);
      v += 1 + static_cast<Index>(std::floor(std::log(r) / log_q));
      if (v >= n) break;
      edges.emplace_back(u, v);
    }
  }
  return build_graph<double>(edges, n, random_normal_matrix<double>(rng, n, feat_dim));
}

// Median wall time of f. One untimed warmup run absorbs first-touch
// costs; each sample then repeats f until min_sample wall time
// accumulates so sub-millisecond runs are still resolved.
template <typename F>
double median_seconds(F&& f, int repeats, double min_sample) {
  using clock = std::chrono::steady_clock;
  f();
  std::vector<double> samples;
  samples.reserve(static_cast<std::size_t>(repeats));
  for (int r = 0; r < repeats; ++r) {
    int iters = 1;
    while (true) {
      const auto start = clock::now();
      for (int i = 0; i < iters; ++i) f();
      const double elapsed = std::chrono::duration<double>(clock::now() - start).count();
      if (elapsed >= min_sample || iters >= 1 << 16) {
        samples.push_back(elapsed / iters);
        break;
      }
      iters *= 4;
    }
  }
  std::sort(samples.begin(), samples.end());
  return samples[samples.size() / 2];
}

// Least-squares slope of log(time) against log(n).
inline double loglog_slope(const std::vector<BenchRow>& rows, bool reference) {
  const auto n = static_cast<double>(rows.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& r : rows) {
    const double x = std::log(static_cast<double>(r.num_nodes));
    const double y = std::log(reference ? r.reference_seconds : r.fast_seconds);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace detail

// Times the explicit reference form against the message-passing form on
// seeded random graphs with m = n * ratio clusters, and fits log-log
// slopes. The fast path is expected near slope 1, the reference near 2.
inline BenchReport run_benchmark(const BenchOptions& opts) {
  if (opts.sizes.size() < 3) throw InvalidConfig("benchmark needs at least 3 sizes");
  if (!std::is_sorted(opts.sizes.begin(), opts.sizes.end()) ||
      std::adjacent_find(opts.sizes.begin(), opts.sizes.end()) != opts.sizes.end())
    throw InvalidConfig("benchmark sizes must be strictly ascending");
  if (opts.repeats < 1) throw InvalidConfig("benchmark needs at least one repeat");
  if (!(opts.clusters_per_node_ratio > 0.0 && opts.clusters_per_node_ratio <= 1.0))
    throw InvalidConfig("cluster ratio must lie in (0, 1]");

  BenchReport report;
  report.options = opts;
  Rng rng(opts.seed);
  for (const Index n : opts.sizes) {
    const auto m = std::max<Index>(
        2, static_cast<Index>(std::llround(n * opts.clusters_per_node_ratio)));
    const Graph<double> g = detail::er_graph(rng, n, opts.expected_degree, opts.feat_dim);
    const Partition part =
        multilevel_partition(g, PartitionConfig{.k = m, .seed = rng.next_u64()});
    const ClusterAssignment<double> cam = hard_cam<double>(part);
    const CoarseGraph<double> coarse = coarsen(g, cam);
    const auto weights = ProjectionWeights<double>::glorot(
        opts.feat_dim, opts.feat_dim, opts.feat_dim, opts.feat_dim, rng.next_u64());
    const BiLevelQkv<double> qkv = project_bilevel(g.features(), cam, weights);
    AttentionConfig cfg;
    cfg.kernel = {BiLevelKernel::Combine::Tensor, 0.5};
    cfg.cluster_kernel = {.dim = opts.feat_dim};

    BenchRow row;
    row.num_nodes = n;
    row.num_clusters = part.k_effective;
    row.num_edges = g.num_edges();
    Index diag = 0;
    for (Index i = 0; i < coarse.adj.rows(); ++i)
      if (coarse.adj.coeff(i, i) > 0) ++diag;
    row.coarse_edges = (coarse.adj.nonZeros() - diag) / 2;
    row.reference_seconds = detail::median_seconds(
        [&] { attention_reference(qkv, coarse, cam, cfg); }, opts.repeats,
        opts.min_sample_seconds);
    row.fast_seconds = detail::median_seconds(
        [&] { attention_tensor(qkv, coarse, cam, cfg); }, opts.repeats,
        opts.min_sample_seconds);
    report.rows.push_back(row);
  }
  report.reference_slope = detail::loglog_slope(report.rows, true);
  report.fast_slope = detail::loglog_slope(report.rows, false);
  return report;
}

inline ordered_json bench_report_json(const BenchReport& report) {
  ordered_json j;
  ordered_json sizes = ordered_json::array();
  for (Index n : report.options.sizes) sizes.push_back(n);
  j["config"] = {{"sizes", std::move(sizes)},
                 {"clusters_per_node_ratio", report.options.clusters_per_node_ratio},
                 {"repeats", report.options.repeats},
                 {"seed", report.options.seed},
                 {"feat_dim", report.options.feat_dim},
                 {"expected_degree", report.options.expected_degree}};
  ordered_json rows = ordered_json::array();
  for (const auto& r : report.rows)
    rows.push_back({{"num_nodes", r.num_nodes},
                    {"num_clusters", r.num_clusters},
                    {"num_edges", r.num_edges},
                    {"coarse_edges", r.coarse_edges},
                    {"reference_seconds", r.reference_seconds},
                    {"fast_seconds", r.fast_seconds}});
  j["rows"] = std::move(rows);
  j["reference_slope"] = report.reference_slope;
  j["fast_slope"] = report.fast_slope;
  return j;
}

}  // namespace clusterattn

#include <cstdint>
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "clusterattn/bench.hpp"
#include "clusterattn/io.hpp"
#include "clusterattn/pipeline.hpp"
#include "clusterattn/verify.hpp"

namespace {

using namespace clusterattn;

int cmd_partition(const std::string& input, Index k, std::uint64_t seed) {
  const Graph<double> g = load_graph_json(input);
  const Index k_used =
      k > 0 ? k : std::max<Index>(1, (g.num_nodes() + 15) / 16);
  const Partition part =
      multilevel_partition(g, PartitionConfig{.k = k_used, .seed = seed});
  ordered_json j;
  j["config"] = {{"input", input}, {"k", k_used}, {"seed", seed}};
  j["num_nodes"] = g.num_nodes();
  j["num_edges"] = g.num_edges();
  j["k_effective"] = part.k_effective;
  j["cut_edges"] = part.cut_edges;
  j["imbalance"] = part.imbalance;
  j["within_balance"] = part.within_balance;
  ordered_json labels = ordered_json::array();
  for (Index l : part.labels) labels.push_back(l);
  j["labels"] = std::move(labels);
  std::cout << dump_json17(j) << "\n";
  return 0;
}

int cmd_forward(const RunConfig& cfg) {
  const Graph<double> g = load_graph_json(cfg.graph_path);
  const ForwardResult res = forward_pipeline(g, cfg);
  const std::string text = dump_json17(forward_report(cfg, res)) + "\n";
  write_text_file(cfg.output_path, text);
  std::cout << "wrote " << cfg.output_path << " (clusters=" << res.partition.k_effective
            << ", cut=" << res.partition.cut_edges << ")\n";
  return 0;
}

int cmd_verify(std::uint64_t seed, int trials) {
  const VerifyReport report = run_verification({.seed = seed, .trials = trials});
  for (const auto& s : report.suites)
    std::fprintf(stderr, "%-34s %s  max_error=%.3e  tol=%.0e  instances=%d%s\n",
                 s.name.c_str(), s.pass ? "PASS" : "FAIL", s.max_error, s.tolerance,
                 s.instances,
                 s.degenerate ? ("  degenerate=" + std::to_string(s.degenerate)).c_str()
                              : "");
  std::cout << dump_json17(verify_report_json(report)) << "\n";
  return report.pass ? 0 : 1;
}

int cmd_bench(const std::vector<Index>& sizes, double ratio, int repeats,
              std::uint64_t seed) {
  BenchOptions opts;
  opts.sizes = sizes;
  opts.clusters_per_node_ratio = ratio;
  opts.repeats = repeats;
  opts.seed = seed;
  const BenchReport report = run_benchmark(opts);
  std::fprintf(stderr, "%8s %8s %10s %12s %14s %14s\n", "n", "m", "edges",
               "coarse_edges", "reference_s", "fast_s");
  for (const auto& r : report.rows)
    std::fprintf(stderr, "%8lld %8lld %10lld %12lld %14.6f %14.6f\n",
                 static_cast<long long>(r.num_nodes),
                 static_cast<long long>(r.num_clusters),
                 static_cast<long long>(r.num_edges),
                 static_cast<long long>(r.coarse_edges), r.reference_seconds,
                 r.fast_seconds);
  std::fprintf(stderr, "log-log slope: reference=%.3f fast=%.3f\n",
               report.reference_slope, report.fast_slope);
  std::cout << dump_json17(bench_report_json(report)) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bi-level kernel attention over partitioned graphs"};
  app.require_subcommand(1);

  std::string input;
  clusterattn::Index k = 0;
  std::uint64_t seed = 0;

  auto* partition = app.add_subcommand("partition", "Partition a graph into k clusters");
  partition->add_option("--input", input, "graph JSON file")->required();
  partition->add_option("--k", k, "cluster count (default: ceil(n/16))");
  partition->add_option("--seed", seed, "random seed");

  clusterattn::RunConfig run;
  std::string kernel = "tensor", fmap = "elu1", mask = "binary";
  auto* forward = app.add_subcommand("forward", "Run the forward pipeline");
  forward->add_option("--input", run.graph_path, "graph JSON file")->required();
  forward->add_option("--kernel", kernel, "tensor|convex")
      ->check(CLI::IsMember({"tensor", "convex"}));
  forward->add_option("--alpha", run.kernel.alpha, "convex weight of the cluster kernel")
      ->check(CLI::Range(0.0, 1.0));
  forward->add_option("--feature-map", fmap, "elu1|relu")
      ->check(CLI::IsMember({"elu1", "relu"}));
  forward->add_option("--mask", mask, "binary|weighted")
      ->check(CLI::IsMember({"binary", "weighted"}));
  forward->add_option("--k", run.k_clusters, "cluster count (default: ceil(n/16))");
  forward->add_option("--seed", run.seed, "random seed");
  forward->add_option("--out", run.output_path, "report output file")->required();
  forward->add_option("--gcn-layers", run.pipeline.gcn_layers, "convolution layers");
  forward->add_option("--hidden", run.pipeline.hidden_dim, "hidden width");
  forward->add_option("--rwse-steps", run.pipeline.rwse_steps, "random-walk steps");
  forward->add_flag("--no-rwse", "disable the random-walk encoding");
  forward->add_flag("--no-residual-ln", "disable residual + layer norm");
  forward->add_flag("--tie-queries", run.tie_queries,
                    "share one projection for both query levels");

  int trials = 50;
  auto* verify = app.add_subcommand("verify", "Run the identity/invariant suites");
  verify->add_option("--seed", seed, "random seed");
  verify->add_option("--trials", trials, "instances per oracle suite")
      ->check(CLI::PositiveNumber);

  std::vector<clusterattn::Index> sizes = {512, 1024, 2048, 4096, 8192};
  double ratio = 0.125;
  int repeats = 3;
  auto* bench = app.add_subcommand("bench", "Time reference vs fast attention");
  bench->add_option("--sizes", sizes, "ascending node counts")->delimiter(',');
  bench->add_option("--ratio", ratio, "clusters per node");
  bench->add_option("--repeats", repeats, "timing repeats per size");
  bench->add_option("--seed", seed, "random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // help exits 0, every usage error exits 1
  }
  try {
    if (partition->parsed()) return cmd_partition(input, k, seed);
    if (forward->parsed()) {
      run.kernel.combine = kernel == "tensor"
                               ? clusterattn::BiLevelKernel::Combine::Tensor
                               : clusterattn::BiLevelKernel::Combine::Convex;
      run.feature_map = fmap == "elu1" ? clusterattn::FeatureMapKind::EluPlusOne
                                       : clusterattn::FeatureMapKind::Relu;
      run.mask_mode = mask == "binary"
                          ? clusterattn::AttentionConfig::MaskMode::Binary
                          : clusterattn::AttentionConfig::MaskMode::Weighted;
      run.pipeline.use_rwse = forward->count("--no-rwse") == 0;
      run.pipeline.use_residual_ln = forward->count("--no-residual-ln") == 0;
      run.pipeline.seed = run.seed;
      return cmd_forward(run);
    }
    if (verify->parsed()) return cmd_verify(seed, trials);
    if (bench->parsed()) return cmd_bench(sizes, ratio, repeats, seed);
  } catch (const clusterattn::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

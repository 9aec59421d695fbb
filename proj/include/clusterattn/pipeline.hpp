#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>

#include "clusterattn/attention.hpp"
#include "clusterattn/encode.hpp"
#include "clusterattn/io.hpp"
#include "clusterattn/partition.hpp"

namespace clusterattn {

struct RunConfig {
  std::string graph_path;
  std::string output_path;
  Index k_clusters = 0;  // 0 resolves to ceil(n / 16)
  BiLevelKernel kernel{BiLevelKernel::Combine::Tensor, 0.5};
  FeatureMapKind feature_map = FeatureMapKind::EluPlusOne;
  AttentionConfig::MaskMode mask_mode = AttentionConfig::MaskMode::Binary;
  bool tie_queries = false;
  PipelineConfig pipeline;
  std::uint64_t seed = 0;
};

struct ForwardResult {
  VectorX<double> embedding;
  MatrixX<double> cluster_outputs;
  Partition partition;
  Index k_requested = 0;
  Index num_nodes = 0;
  Index num_edges = 0;
};

// Full forward pass: features (+ random-walk encoding) -> graph
// convolutions -> partition -> bi-level projections -> cluster attention
// -> residual + layer norm -> mean pooling. Deterministic given
// (graph, config); all weights are Glorot draws from the run seed.
inline ForwardResult forward_pipeline(const Graph<double>& g, const RunConfig& cfg) {
  if (g.num_nodes() == 0) throw EmptyInput("forward pass needs at least one node");
  if (cfg.kernel.combine == BiLevelKernel::Combine::Convex) check_alpha(cfg.kernel.alpha);
  const Index n = g.num_nodes();
  const Index k = cfg.k_clusters > 0
                      ? cfg.k_clusters
                      : std::max<Index>(1, (n + 15) / 16);
  const Index hidden = cfg.pipeline.hidden_dim;
  if (hidden < 1) throw InvalidConfig("hidden_dim must be at least 1");
  if (cfg.pipeline.gcn_layers < 0 || cfg.pipeline.rwse_steps < 0)
    throw InvalidConfig("layer and step counts must be nonnegative");

  Rng master(cfg.seed);
  const auto next_seed = [&master]() { return master.next_u64(); };

  MatrixX<double> h = g.features();
  if (cfg.pipeline.use_rwse && cfg.pipeline.rwse_steps > 0) {
    const MatrixX<double> enc = rwse(g, cfg.pipeline.rwse_steps);
    MatrixX<double> cat(n, h.cols() + enc.cols());
    cat << h, enc;
    h = std::move(cat);
  }
  for (Index layer = 0; layer < cfg.pipeline.gcn_layers; ++layer) {
    Rng layer_rng(next_seed());
    h = gcn_layer(g, h, glorot_matrix<double>(layer_rng, h.cols(), hidden));
  }

  ForwardResult res;
  res.k_requested = k;
  res.num_nodes = n;
  res.num_edges = g.num_edges();
  res.partition = multilevel_partition(
      g, PartitionConfig{.k = k, .seed = next_seed()});
  const ClusterAssignment<double> cam = hard_cam<double>(res.partition);
  const CoarseGraph<double> coarse = coarsen(g, cam);

  const ProjectionWeights<double> weights = ProjectionWeights<double>::glorot(
      h.cols(), hidden, hidden, hidden, next_seed(), cfg.tie_queries);
  const BiLevelQkv<double> qkv = project_bilevel(h, cam, weights);

  AttentionConfig acfg;
  acfg.kernel = cfg.kernel;
  acfg.node_feature_map = cfg.feature_map;
  acfg.cluster_kernel = {.dim = hidden};
  acfg.mask_mode = cfg.mask_mode;
  const MatrixX<double> attn =
      cfg.kernel.combine == BiLevelKernel::Combine::Tensor
          ? attention_tensor(qkv, coarse, cam, acfg)
          : attention_convex(qkv, coarse, cam, acfg);

  if (cfg.pipeline.use_residual_ln) {
    // Residual base is the cluster-pooled hidden state; if its width
    // cannot match the attention output the base is zero.
    const MatrixX<double> pooled = cam.matrix().transpose() * h;
    const bool base_ok = pooled.cols() == attn.cols();
    const VectorX<double> gain = VectorX<double>::Ones(attn.cols());
    const VectorX<double> bias = VectorX<double>::Zero(attn.cols());
    MatrixX<double> normed(attn.rows(), attn.cols());
    for (Index i = 0; i < attn.rows(); ++i) {
      const VectorX<double> base = base_ok
                                       ? VectorX<double>(pooled.row(i).transpose())
                                       : VectorX<double>(VectorX<double>::Zero(attn.cols()));
      normed.row(i) =
          residual_layer_norm<double>(base, attn.row(i).transpose(), gain, bias)
              .transpose();
    }
    res.cluster_outputs = std::move(normed);
  } else {
    res.cluster_outputs = attn;
  }
  res.embedding = mean_pool(res.cluster_outputs);
  return res;
}

inline std::string kernel_name(const BiLevelKernel& k) {
  return k.combine == BiLevelKernel::Combine::Tensor ? "tensor" : "convex";
}

inline std::string feature_map_name(FeatureMapKind k) {
  return k == FeatureMapKind::EluPlusOne ? "elu1" : "relu";
}

inline std::string mask_mode_name(AttentionConfig::MaskMode m) {
  return m == AttentionConfig::MaskMode::Binary ? "binary" : "weighted";
}

inline ordered_json forward_report(const RunConfig& cfg, const ForwardResult& res) {
  ordered_json j;
  j["config"] = {{"graph_path", cfg.graph_path},
                 {"output_path", cfg.output_path},
                 {"k_clusters", res.k_requested},
                 {"kernel", kernel_name(cfg.kernel)},
                 {"alpha", cfg.kernel.alpha},
                 {"feature_map", feature_map_name(cfg.feature_map)},
                 {"mask_mode", mask_mode_name(cfg.mask_mode)},
                 {"tie_queries", cfg.tie_queries},
                 {"gcn_layers", cfg.pipeline.gcn_layers},
                 {"hidden_dim", cfg.pipeline.hidden_dim},
                 {"rwse_steps", cfg.pipeline.rwse_steps},
                 {"use_rwse", cfg.pipeline.use_rwse},
                 {"use_residual_ln", cfg.pipeline.use_residual_ln},
                 {"seed", cfg.seed}};
  j["graph"] = {{"num_nodes", res.num_nodes}, {"num_edges", res.num_edges}};
  j["partition"] = {{"k_effective", res.partition.k_effective},
                    {"cut_edges", res.partition.cut_edges},
                    {"imbalance", res.partition.imbalance},
                    {"within_balance", res.partition.within_balance}};
  j["cluster_outputs"] = matrix_to_json(res.cluster_outputs);
  j["embedding"] = vector_to_json(res.embedding);
  return j;
}

}  // namespace clusterattn

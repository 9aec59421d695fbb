#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "clusterattn/bench.hpp"
#include "clusterattn/pipeline.hpp"
#include "clusterattn/verify.hpp"

using namespace clusterattn;

namespace {

std::string temp_path(const std::string& name) {
  return std::string("cli_bench_tmp_") + name;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(CLUSTERATTN_CLI_PATH) + " " + args;
  const int status = std::system(cmd.c_str());
  return status < 0 ? status : WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("load_graph_json with default degree features") {
  const auto path = temp_path("two.json");
  write_file(path, R"({"num_nodes": 2, "edges": [[0, 1]]})");
  auto g = load_graph_json(path);
  CHECK(g.num_nodes() == 2);
  CHECK(g.num_edges() == 1);
  CHECK(g.feat_dim() == 2);  // one-hot over degrees 0..1
  CHECK(g.features()(0, 1) == 1.0);
  CHECK(g.features()(1, 1) == 1.0);
  std::remove(path.c_str());
}

TEST_CASE("load_graph_json error contracts") {
  const auto bad_edge = temp_path("bad_edge.json");
  write_file(bad_edge, R"({"num_nodes": 3, "edges": [[0, 5]]})");
  CHECK_THROWS_AS(load_graph_json(bad_edge), IndexOutOfRange);
  std::remove(bad_edge.c_str());

  const auto truncated = temp_path("trunc.json");
  write_file(truncated, R"({"num_nodes": 3, "edges": [[0, )");
  CHECK_THROWS_AS(load_graph_json(truncated), ParseError);
  std::remove(truncated.c_str());

  CHECK_THROWS_AS(load_graph_json(temp_path("missing.json")), ParseError);

  const auto ragged = temp_path("ragged.json");
  write_file(ragged, R"({"num_nodes": 2, "edges": [], "features": [[1, 2], [3]]})");
  CHECK_THROWS_AS(load_graph_json(ragged), ShapeMismatch);
  std::remove(ragged.c_str());
}

TEST_CASE("load_graph_json accepts explicit features") {
  const auto path = temp_path("feats.json");
  write_file(path,
             R"({"num_nodes": 2, "edges": [[0, 1]], "features": [[0.5, 1.5], [2.5, -3.5]]})");
  auto g = load_graph_json(path);
  CHECK(g.feat_dim() == 2);
  CHECK(g.features()(1, 1) == -3.5);
  std::remove(path.c_str());
}

TEST_CASE("dump_json17 round-trips doubles exactly") {
  ordered_json j;
  j["a"] = 0.1 + 0.2;
  j["b"] = 1.0 / 3.0;
  j["c"] = {{"nested", 2.0281149816474726}};
  j["d"] = {1.5, -2.25, 1e-30};
  const std::string text = dump_json17(j);
  const auto back = ordered_json::parse(text);
  CHECK(back["a"].get<double>() == 0.1 + 0.2);
  CHECK(back["b"].get<double>() == 1.0 / 3.0);
  CHECK(back["c"]["nested"].get<double>() == 2.0281149816474726);
  CHECK(back["d"][2].get<double>() == 1e-30);
  CHECK(text.find("0.33333333333333331") != std::string::npos);
}

TEST_CASE("forward pipeline on a single node is the normalized projection") {
  const auto path = temp_path("single.json");
  write_file(path, R"({"num_nodes": 1, "edges": []})");
  auto g = load_graph_json(path);
  RunConfig cfg;
  cfg.graph_path = path;
  cfg.seed = 11;
  cfg.pipeline.hidden_dim = 6;
  auto res = forward_pipeline(g, cfg);
  CHECK(res.partition.k_effective == 1);
  CHECK(res.cluster_outputs.rows() == 1);
  CHECK(res.embedding == VectorX<double>(res.cluster_outputs.row(0).transpose()));

  // compose the stages independently: conv twice, project, attend, norm
  Rng master(cfg.seed);
  MatrixX<double> h = g.features();
  MatrixX<double> enc = rwse(g, cfg.pipeline.rwse_steps);
  MatrixX<double> cat(1, h.cols() + enc.cols());
  cat << h, enc;
  h = cat;
  for (Index l = 0; l < cfg.pipeline.gcn_layers; ++l) {
    Rng lr(master.next_u64());
    h = gcn_layer(g, h, glorot_matrix<double>(lr, h.cols(), 6));
  }
  master.next_u64();  // partition seed
  auto cam = ClusterAssignment<double>::make(1, 1, {{0, 0, 1.0}}, true);
  auto qkv = project_bilevel(
      h, cam, ProjectionWeights<double>::glorot(h.cols(), 6, 6, 6, master.next_u64()));
  const VectorX<double> expected = residual_layer_norm<double>(
      h.row(0).transpose(), qkv.v_node.row(0).transpose(), VectorX<double>::Ones(6),
      VectorX<double>::Zero(6));
  CHECK((res.embedding - expected).cwiseAbs().maxCoeff() <= 1e-12);
  std::remove(path.c_str());
}

TEST_CASE("forward pipeline is deterministic") {
  const auto path = temp_path("det.json");
  write_file(path, R"({"num_nodes": 6, "edges": [[0,1],[1,2],[0,2],[3,4],[4,5],[3,5]]})");
  auto g = load_graph_json(path);
  RunConfig cfg;
  cfg.graph_path = path;
  cfg.k_clusters = 2;
  cfg.seed = 5;
  const std::string a = dump_json17(forward_report(cfg, forward_pipeline(g, cfg)));
  const std::string b = dump_json17(forward_report(cfg, forward_pipeline(g, cfg)));
  CHECK(a == b);
  std::remove(path.c_str());
}

TEST_CASE("twin components produce identical cluster outputs") {
  // two disjoint triangles with identical (degree) features
  const auto path = temp_path("twins.json");
  write_file(path, R"({"num_nodes": 6, "edges": [[0,1],[1,2],[0,2],[3,4],[4,5],[3,5]]})");
  auto g = load_graph_json(path);
  RunConfig cfg;
  cfg.graph_path = path;
  cfg.k_clusters = 2;
  cfg.seed = 42;
  auto res = forward_pipeline(g, cfg);
  REQUIRE(res.cluster_outputs.rows() == 2);
  CHECK(res.partition.cut_edges == 0);
  CHECK((res.cluster_outputs.row(0) - res.cluster_outputs.row(1)).cwiseAbs().maxCoeff() <=
        1e-12);
  std::remove(path.c_str());
}

TEST_CASE("run_verification structure and determinism") {
  const VerifyReport one = run_verification({.seed = 3, .trials = 1});
  CHECK(one.suites.size() == 10);
  for (const auto& s : one.suites) CHECK(s.instances >= 1);
  CHECK(one.pass);

  const VerifyReport a = run_verification({.seed = 9, .trials = 4});
  const VerifyReport b = run_verification({.seed = 9, .trials = 4});
  REQUIRE(a.suites.size() == b.suites.size());
  for (std::size_t i = 0; i < a.suites.size(); ++i) {
    CHECK(a.suites[i].max_error == b.suites[i].max_error);
    CHECK(a.suites[i].pass == b.suites[i].pass);
  }
}

TEST_CASE("run_verification fails under a corrupted fast path") {
  const VerifyReport bad = run_verification({.seed = 3, .trials = 2, .corrupt_fast = 1e-3});
  CHECK_FALSE(bad.pass);
  CHECK_FALSE(bad.suite("tensor_vs_reference").pass);
}

TEST_CASE("run_verification rejects zero trials") {
  CHECK_THROWS_AS(run_verification({.seed = 0, .trials = 0}), InvalidConfig);
}

TEST_CASE("verify report serializes cleanly") {
  const VerifyReport r = run_verification({.seed = 1, .trials = 1});
  const auto j = verify_report_json(r);
  const auto back = ordered_json::parse(dump_json17(j));
  CHECK(back["verdict"] == "PASS");
  CHECK(back["suites"].size() == 10);
  CHECK(back["config"]["seed"] == 1);
}

TEST_CASE("run_benchmark structural checks") {
  BenchOptions opts;
  opts.sizes = {32, 64, 128};
  opts.repeats = 1;
  opts.seed = 2;
  const BenchReport r = run_benchmark(opts);
  REQUIRE(r.rows.size() == 3);
  for (const auto& row : r.rows) {
    CHECK(row.reference_seconds > 0.0);
    CHECK(row.fast_seconds > 0.0);
    CHECK(row.num_clusters >= 2);
  }
  CHECK(std::isfinite(r.fast_slope));
  CHECK(std::isfinite(r.reference_slope));
  const auto back = ordered_json::parse(dump_json17(bench_report_json(r)));
  CHECK(back["rows"].size() == 3);

  opts.sizes = {64, 32};
  CHECK_THROWS_AS(run_benchmark(opts), InvalidConfig);
  opts.sizes = {32, 64};
  CHECK_THROWS_AS(run_benchmark(opts), InvalidConfig);
}

TEST_CASE("cli partition and forward round trip") {
  const auto graph = temp_path("cli_graph.json");
  write_file(graph,
             R"({"num_nodes": 8, "edges": [[0,1],[1,2],[2,3],[3,0],[4,5],[5,6],[6,7],[7,4]]})");
  CHECK(run_cli("partition --input " + graph + " --k 2 --seed 1 > " +
                temp_path("part.json")) == 0);
  const auto part = ordered_json::parse(read_file(temp_path("part.json")));
  CHECK(part["k_effective"] == 2);
  CHECK(part["cut_edges"] == 0);
  CHECK(part["labels"].size() == 8);

  const auto out1 = temp_path("fwd1.json");
  const std::string fwd = "forward --input " + graph +
                          " --kernel convex --alpha 0.25 --feature-map relu "
                          "--mask weighted --k 2 --seed 7 --out " + out1;
  CHECK(run_cli(fwd) == 0);
  const std::string r1 = read_file(out1);
  CHECK(run_cli(fwd) == 0);
  CHECK(r1 == read_file(out1));  // identical command, bit-identical report
  const auto report = ordered_json::parse(r1);
  CHECK(report["config"]["kernel"] == "convex");
  CHECK(report["config"]["alpha"].get<double>() == 0.25);
  CHECK(report["embedding"].size() == 16);
  std::remove(graph.c_str());
  std::remove(out1.c_str());
  std::remove(temp_path("part.json").c_str());
}

TEST_CASE("cli verify exits zero on pass") {
  CHECK(run_cli("verify --seed 0 --trials 2 > " + temp_path("verify.json")) == 0);
  const auto report = ordered_json::parse(read_file(temp_path("verify.json")));
  CHECK(report["verdict"] == "PASS");
  std::remove(temp_path("verify.json").c_str());
}

TEST_CASE("cli bench runs a tiny ladder") {
  CHECK(run_cli("bench --sizes 32,64,128 --ratio 0.25 --repeats 1 --seed 1 > " +
                temp_path("bench.json")) == 0);
  const auto report = ordered_json::parse(read_file(temp_path("bench.json")));
  CHECK(report["rows"].size() == 3);
  std::remove(temp_path("bench.json").c_str());
}

TEST_CASE("cli fails with exit code one on errors") {
  CHECK(run_cli("partition --input does_not_exist.json --k 2 2> /dev/null") == 1);
  const auto graph = temp_path("cli_err.json");
  write_file(graph, R"({"num_nodes": 2, "edges": [[0, 9]]})");
  CHECK(run_cli("partition --input " + graph + " 2> /dev/null") == 1);
  std::remove(graph.c_str());
  // usage errors are errors too
  CHECK(run_cli("forward 2> /dev/null") == 1);
  CHECK(run_cli("bogus 2> /dev/null") == 1);
  CHECK(run_cli("--help > /dev/null") == 0);
}

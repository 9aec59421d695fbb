#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "clusterattn/error.hpp"
#include "clusterattn/graph.hpp"
#include "clusterattn/types.hpp"

namespace clusterattn {

using ordered_json = nlohmann::ordered_json;

// Serializes a report with every float formatted to 17 significant
// digits, which round-trips doubles exactly. nlohmann's own dump() emits
// the shortest representation instead, hence this walker.
inline std::string dump_json17(const ordered_json& j) {
  std::string out;
  const auto number = [&out](double v) {
    if (!std::isfinite(v)) throw InvalidConfig("reports may not contain non-finite numbers");
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out += buf;
  };
  const std::function<void(const ordered_json&)> walk = [&](const ordered_json& node) {
    switch (node.type()) {
      case ordered_json::value_t::object: {
        out += '{';
        bool first = true;
        for (const auto& [key, value] : node.items()) {
          if (!first) out += ',';
          first = false;
          out += ordered_json(key).dump();
          out += ':';
          walk(value);
        }
        out += '}';
        break;
      }
      case ordered_json::value_t::array: {
        out += '[';
        for (std::size_t i = 0; i < node.size(); ++i) {
          if (i) out += ',';
          walk(node[i]);
        }
        out += ']';
        break;
      }
      case ordered_json::value_t::number_float:
        number(node.get<double>());
        break;
      default:
        out += node.dump();
    }
  };
  walk(j);
  return out;
}

template <typename Scalar>
ordered_json matrix_to_json(const MatrixX<Scalar>& m) {
  ordered_json rows = ordered_json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    ordered_json row = ordered_json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(static_cast<double>(m(i, j)));
    rows.push_back(std::move(row));
  }
  return rows;
}

template <typename Scalar>
ordered_json vector_to_json(const VectorX<Scalar>& v) {
  ordered_json arr = ordered_json::array();
  for (Index i = 0; i < v.size(); ++i) arr.push_back(static_cast<double>(v(i)));
  return arr;
}

// Parses {"num_nodes": int, "edges": [[u, v], ...], "features": [[...], ...]}.
// Features are optional; the default is a one-hot encoding of each node's
// degree, capped at 64 buckets.
inline Graph<double> load_graph_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open graph file: " + path);
  ordered_json doc;
  try {
    doc = ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid graph JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("num_nodes") ||
      !doc["num_nodes"].is_number_integer())
    throw ParseError("graph JSON needs an integer num_nodes");
  const Index n = doc["num_nodes"].get<Index>();
  if (n < 0) throw ParseError("num_nodes must be nonnegative");

  std::vector<std::pair<Index, Index>> edges;
  if (doc.contains("edges")) {
    if (!doc["edges"].is_array()) throw ParseError("edges must be an array of pairs");
    for (const auto& e : doc["edges"]) {
      if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() ||
          !e[1].is_number_integer())
        throw ParseError("each edge must be a pair of integers");
      edges.emplace_back(e[0].get<Index>(), e[1].get<Index>());
    }
  }

  if (doc.contains("features")) {
    const auto& f = doc["features"];
    if (!f.is_array()) throw ParseError("features must be an array of rows");
    if (static_cast<Index>(f.size()) != n)
      throw ShapeMismatch("feature rows != num_nodes");
    const Index dim = n > 0 ? static_cast<Index>(f[0].size()) : 0;
    MatrixX<double> feats(n, dim);
    for (Index i = 0; i < n; ++i) {
      const auto& row = f[static_cast<std::size_t>(i)];
      if (!row.is_array() || static_cast<Index>(row.size()) != dim)
        throw ShapeMismatch("ragged feature rows");
      for (Index j = 0; j < dim; ++j) {
        if (!row[static_cast<std::size_t>(j)].is_number())
          throw ParseError("feature entries must be numbers");
        feats(i, j) = row[static_cast<std::size_t>(j)].get<double>();
      }
    }
    return build_graph<double>(edges, n, std::move(feats));
  }

  // Degree one-hot default: build once to learn degrees, then attach.
  Graph<double> bare = build_graph<double>(edges, n);
  Index max_deg = 0;
  for (Index u = 0; u < n; ++u) max_deg = std::max(max_deg, bare.degree(u));
  const Index dim = std::min<Index>(64, max_deg + 1);
  MatrixX<double> feats = MatrixX<double>::Zero(n, std::max<Index>(dim, 1));
  for (Index u = 0; u < n; ++u)
    feats(u, std::min<Index>(bare.degree(u), dim - 1)) = 1.0;
  return build_graph<double>(edges, n, std::move(feats));
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open output file: " + path);
  out << text;
}

}  // namespace clusterattn

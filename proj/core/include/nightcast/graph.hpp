#pragma once

#include <map>
#include <string>
#include <variant>
#include <vector>

#include "nightcast/common.hpp"
#include "nightcast/tensor.hpp"

namespace nightcast {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

// Outer rings only; holes are irrelevant for shared-border tests between
// county outlines.
struct Polygon {
  std::vector<std::vector<Point>> rings;

  Point centroid() const;
};

using Geometry = std::variant<Point, Polygon>;

Point geometry_centroid(const Geometry& g);

enum class AdjacencyKind { Static, AdaptiveSnapshot };

struct AdjacencyMatrix {
  Tensor weights;  // (V, V), nonnegative
  std::vector<std::string> node_order;
  AdjacencyKind kind = AdjacencyKind::Static;

  long size() const { return weights.defined() ? weights.dim(0) : 0; }
  void validate() const;
};

struct AdjacencyRule {
  enum class Kind { Border, Knn } kind = Kind::Border;
  int k = 4;  // for knn

  static AdjacencyRule border() { return {Kind::Border, 0}; }
  static AdjacencyRule knn(int k) { return {Kind::Knn, k}; }
};

// Border rule: weight 1 iff two polygons share a boundary segment of positive
// length (corner contact does not count). Knn rule: weight 1 for each node's
// k nearest centroids, symmetrized by max. Node order is sorted county_id.
AdjacencyMatrix build_static_adjacency(
    const std::map<std::string, Geometry>& geometries, AdjacencyRule rule);

// Row-stochastic transition matrix D^-1 A; zero-degree rows stay zero.
AdjacencyMatrix normalize_adjacency(const AdjacencyMatrix& a);

// Forward and backward transitions (D_out^-1 A and D_in^-1 A^T). They
// coincide for symmetric graphs but the st-GNN consumes both supports.
std::pair<Tensor, Tensor> transition_pair(const AdjacencyMatrix& a);

// GeoJSON FeatureCollection with a county_id property per feature.
std::map<std::string, Geometry> load_geojson(const std::string& path);
std::map<std::string, Geometry> parse_geojson(const std::string& text);

// CSV edge list "src,dst,weight" with positive weights only.
void write_adjacency_csv(const std::string& path, const AdjacencyMatrix& a);
// Full matrix CSV with a node_order header row (adaptive snapshots).
void write_matrix_csv(const std::string& path, const AdjacencyMatrix& a);

}  // namespace nightcast

#include "nightcast/graph.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

using nlohmann::json;

namespace nightcast {

Point Polygon::centroid() const {
  // Area-weighted over all rings; falls back to the vertex mean for
  // degenerate (zero-area) input.
  double area2 = 0.0, cx = 0.0, cy = 0.0;
  double mx = 0.0, my = 0.0;
  long nverts = 0;
  for (const auto& ring : rings) {
    const std::size_t n = ring.size();
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const Point& a = ring[i];
      const Point& b = ring[i + 1];
      const double cross = a.x * b.y - b.x * a.y;
      area2 += cross;
      cx += (a.x + b.x) * cross;
      cy += (a.y + b.y) * cross;
      mx += a.x;
      my += a.y;
      ++nverts;
    }
  }
  if (std::abs(area2) < 1e-12) {
    if (nverts == 0) throw ValidationError("centroid of an empty polygon");
    return {mx / static_cast<double>(nverts), my / static_cast<double>(nverts)};
  }
  return {cx / (3.0 * area2), cy / (3.0 * area2)};
}

Point geometry_centroid(const Geometry& g) {
  if (std::holds_alternative<Point>(g)) return std::get<Point>(g);
  return std::get<Polygon>(g).centroid();
}

void AdjacencyMatrix::validate() const {
  if (!weights.defined() || weights.ndim() != 2 ||
      weights.dim(0) != weights.dim(1)) {
    throw ValidationError("adjacency must be a square matrix");
  }
  if (weights.dim(0) != static_cast<long>(node_order.size())) {
    throw ValidationError("adjacency dimension does not match node order");
  }
  const double* d = weights.data();
  for (long i = 0; i < weights.numel(); ++i) {
    if (!std::isfinite(d[i]) || d[i] < 0.0) {
      throw ValidationError("adjacency entries must be finite and >= 0");
    }
  }
}

namespace {

// Do segments (a,b) and (c,d) overlap collinearly with positive length?
bool segments_overlap(const Point& a, const Point& b, const Point& c,
                      const Point& d, double eps) {
  const double ux = b.x - a.x, uy = b.y - a.y;
  const double vx = d.x - c.x, vy = d.y - c.y;
  const double cross = ux * vy - uy * vx;
  const double scale = std::max({std::abs(ux), std::abs(uy), std::abs(vx),
                                 std::abs(vy), 1.0});
  if (std::abs(cross) > eps * scale) return false;  // not parallel
  // c must lie on line (a,b)
  const double wx = c.x - a.x, wy = c.y - a.y;
  if (std::abs(ux * wy - uy * wx) > eps * scale) return false;
  // 1-d overlap along the dominant axis of u
  const double len2 = ux * ux + uy * uy;
  if (len2 < eps * eps) return false;
  auto proj = [&](const Point& p) {
    return ((p.x - a.x) * ux + (p.y - a.y) * uy) / len2;
  };
  double t0 = proj(c), t1 = proj(d);
  if (t0 > t1) std::swap(t0, t1);
  const double lo = std::max(0.0, t0), hi = std::min(1.0, t1);
  return hi - lo > eps;
}

bool share_border(const Polygon& p, const Polygon& q, double eps) {
  for (const auto& ring_p : p.rings) {
    for (std::size_t i = 0; i + 1 < ring_p.size(); ++i) {
      for (const auto& ring_q : q.rings) {
        for (std::size_t j = 0; j + 1 < ring_q.size(); ++j) {
          if (segments_overlap(ring_p[i], ring_p[i + 1], ring_q[j],
                               ring_q[j + 1], eps)) {
            return true;
          }
        }
      }
    }
  }
  return false;
}

}  // namespace

AdjacencyMatrix build_static_adjacency(
    const std::map<std::string, Geometry>& geometries, AdjacencyRule rule) {
  const long V = static_cast<long>(geometries.size());
  if (V < 2) {
    throw ValidationError("build_static_adjacency: need at least 2 nodes, got " +
                          std::to_string(V));
  }

  AdjacencyMatrix a;
  a.kind = AdjacencyKind::Static;
  for (const auto& [county, g] : geometries) a.node_order.push_back(county);
  std::sort(a.node_order.begin(), a.node_order.end());
  a.weights = Tensor({V, V});

  if (rule.kind == AdjacencyRule::Kind::Border) {
    std::vector<const Polygon*> polys;
    for (const std::string& county : a.node_order) {
      const Geometry& g = geometries.at(county);
      if (!std::holds_alternative<Polygon>(g)) {
        throw ValidationError("border rule needs polygons; '" + county +
                              "' is a centroid (use knn)");
      }
      polys.push_back(&std::get<Polygon>(g));
    }
    constexpr double eps = 1e-9;
    for (long i = 0; i < V; ++i) {
      for (long j = i + 1; j < V; ++j) {
        if (share_border(*polys[static_cast<std::size_t>(i)],
                         *polys[static_cast<std::size_t>(j)], eps)) {
          a.weights[i * V + j] = 1.0;
          a.weights[j * V + i] = 1.0;
        }
      }
    }
  } else {
    if (rule.k < 1 || rule.k >= V) {
      throw ValidationError("knn rule: k must satisfy 1 <= k < |V|, got k=" +
                            std::to_string(rule.k) + ", |V|=" +
                            std::to_string(V));
    }
    std::vector<Point> centroids;
    for (const std::string& county : a.node_order) {
      centroids.push_back(geometry_centroid(geometries.at(county)));
    }
    for (long i = 0; i < V; ++i) {
      std::vector<std::pair<double, long>> dist;
      for (long j = 0; j < V; ++j) {
        if (j == i) continue;
        const double dx = centroids[static_cast<std::size_t>(i)].x -
                          centroids[static_cast<std::size_t>(j)].x;
        const double dy = centroids[static_cast<std::size_t>(i)].y -
                          centroids[static_cast<std::size_t>(j)].y;
        dist.emplace_back(dx * dx + dy * dy, j);
      }
      // ties break toward the lower node index for determinism
      std::sort(dist.begin(), dist.end());
      for (int k = 0; k < rule.k; ++k) {
        const long j = dist[static_cast<std::size_t>(k)].second;
        a.weights[i * V + j] = 1.0;
        a.weights[j * V + i] = 1.0;  // symmetrize by max
      }
    }
  }
  return a;
}

AdjacencyMatrix normalize_adjacency(const AdjacencyMatrix& a) {
  a.validate();
  const long V = a.size();
  AdjacencyMatrix out = a;
  out.weights = a.weights.clone();
  double* d = out.weights.data();
  for (long i = 0; i < V; ++i) {
    double deg = 0.0;
    for (long j = 0; j < V; ++j) deg += d[i * V + j];
    if (deg > 0.0) {
      for (long j = 0; j < V; ++j) d[i * V + j] /= deg;
    }
    // zero-degree rows stay zero: isolated nodes propagate nothing
  }
  return out;
}

std::pair<Tensor, Tensor> transition_pair(const AdjacencyMatrix& a) {
  AdjacencyMatrix forward = normalize_adjacency(a);

  AdjacencyMatrix transposed = a;
  transposed.weights = Tensor(a.weights.shape());
  const long V = a.size();
  for (long i = 0; i < V; ++i) {
    for (long j = 0; j < V; ++j) {
      transposed.weights[i * V + j] = a.weights[j * V + i];
    }
  }
  AdjacencyMatrix backward = normalize_adjacency(transposed);
  return {forward.weights, backward.weights};
}

namespace {

Polygon parse_polygon_coords(const json& coords) {
  Polygon poly;
  for (const auto& ring : coords) {
    std::vector<Point> pts;
    for (const auto& pt : ring) {
      pts.push_back({pt.at(0).get<double>(), pt.at(1).get<double>()});
    }
    if (pts.size() >= 2 &&
        (pts.front().x != pts.back().x || pts.front().y != pts.back().y)) {
      pts.push_back(pts.front());  // close unclosed rings
    }
    poly.rings.push_back(std::move(pts));
  }
  return poly;
}

}  // namespace

std::map<std::string, Geometry> parse_geojson(const std::string& text) {
  json root = json::parse(text);
  if (root.value("type", "") != "FeatureCollection") {
    throw ValidationError("geojson: expected a FeatureCollection");
  }
  std::map<std::string, Geometry> out;
  for (const auto& feature : root.at("features")) {
    const auto& props = feature.at("properties");
    if (!props.contains("county_id")) {
      throw ValidationError("geojson: feature without county_id property");
    }
    std::string county = props.at("county_id").is_string()
                             ? props.at("county_id").get<std::string>()
                             : props.at("county_id").dump();
    const auto& geom = feature.at("geometry");
    const std::string type = geom.at("type").get<std::string>();
    if (type == "Point") {
      const auto& c = geom.at("coordinates");
      out[county] = Point{c.at(0).get<double>(), c.at(1).get<double>()};
    } else if (type == "Polygon") {
      out[county] = parse_polygon_coords(geom.at("coordinates"));
    } else if (type == "MultiPolygon") {
      Polygon merged;
      for (const auto& part : geom.at("coordinates")) {
        Polygon p = parse_polygon_coords(part);
        for (auto& ring : p.rings) merged.rings.push_back(std::move(ring));
      }
      out[county] = std::move(merged);
    } else {
      throw ValidationError("geojson: unsupported geometry type '" + type +
                            "' for county '" + county + "'");
    }
  }
  return out;
}

std::map<std::string, Geometry> load_geojson(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return parse_geojson(text);
}

namespace {

void write_text_atomic(const std::string& path, const std::string& text) {
  namespace fs = std::filesystem;
  fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << text;
  }
  fs::rename(tmp, target);
}

std::string fmt_weight(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

}  // namespace

void write_adjacency_csv(const std::string& path, const AdjacencyMatrix& a) {
  std::string text = "src,dst,weight\n";
  const long V = a.size();
  for (long i = 0; i < V; ++i) {
    for (long j = 0; j < V; ++j) {
      const double w = a.weights[i * V + j];
      if (w > 0.0) {
        text += a.node_order[static_cast<std::size_t>(i)] + "," +
                a.node_order[static_cast<std::size_t>(j)] + "," +
                fmt_weight(w) + "\n";
      }
    }
  }
  write_text_atomic(path, text);
}

void write_matrix_csv(const std::string& path, const AdjacencyMatrix& a) {
  std::string text = "node";
  for (const std::string& county : a.node_order) text += "," + county;
  text += "\n";
  const long V = a.size();
  for (long i = 0; i < V; ++i) {
    text += a.node_order[static_cast<std::size_t>(i)];
    for (long j = 0; j < V; ++j) {
      text += "," + fmt_weight(a.weights[i * V + j]);
    }
    text += "\n";
  }
  write_text_atomic(path, text);
}

}  // namespace nightcast

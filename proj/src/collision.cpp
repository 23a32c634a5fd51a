#include "handseq/collision.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <unordered_map>

#include "handseq/errors.hpp"
#include "handseq/rng.hpp"

namespace handseq {

namespace {

constexpr Scalar kGoldenFraction = 0.61803398874989484820;
constexpr Scalar kBarycentricBand = 1e-9;
constexpr int kMaxRayRetries = 8;

// Fixed cast directions: the golden-ratio direction first, then seeded
// pseudorandom retries. Shared by every query for determinism.
const std::array<Vec3, kMaxRayRetries + 1>& ray_directions() {
  static const std::array<Vec3, kMaxRayRetries + 1> dirs = [] {
    std::array<Vec3, kMaxRayRetries + 1> d;
    d[0] = Vec3(1.0, kGoldenFraction, kGoldenFraction * kGoldenFraction).normalized();
    Rng rng(0x7261796469727321ull);
    for (int i = 1; i <= kMaxRayRetries; ++i) {
      Vec3 v;
      do {
        v = Vec3(rng.normal(), rng.normal(), rng.normal());
      } while (v.norm() < 1e-3);
      d[i] = v.normalized();
    }
    return d;
  }();
  return dirs;
}

enum class HitKind { kMiss, kCrossing, kOnSurface, kUncertain };

struct RayHit {
  HitKind kind = HitKind::kMiss;
  Scalar t = 0.0;
};

// Standard determinant (Moller-Trumbore) ray-triangle test with explicit
// uncertainty reporting for boundary-grazing configurations.
RayHit ray_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a, const Vec3& b,
                    const Vec3& c, Scalar surface_band) {
  RayHit hit;
  const Vec3 e1 = b - a;
  const Vec3 e2 = c - a;
  const Vec3 pvec = dir.cross(e2);
  const Scalar det = e1.dot(pvec);
  const Scalar det_scale = e1.norm() * e2.norm();

  if (std::abs(det) <= 1e-13 * det_scale) {
    // Ray (nearly) parallel to the plane: a clean miss unless it grazes.
    const Vec3 n = e1.cross(e2);
    const Scalar nn = n.norm();
    if (nn <= 0.0) {
      hit.kind = HitKind::kUncertain;
      return hit;
    }
    const Scalar plane_dist = std::abs((origin - a).dot(n) / nn);
    hit.kind = plane_dist > surface_band ? HitKind::kMiss : HitKind::kUncertain;
    return hit;
  }

  const Scalar inv_det = 1.0 / det;
  const Vec3 tvec = origin - a;
  const Scalar u = tvec.dot(pvec) * inv_det;
  const Vec3 qvec = tvec.cross(e1);
  const Scalar v = dir.dot(qvec) * inv_det;
  const Scalar t = e2.dot(qvec) * inv_det;

  const bool roughly_inside =
      u >= -kBarycentricBand && v >= -kBarycentricBand && u + v <= 1.0 + kBarycentricBand;

  if (roughly_inside && std::abs(t) <= surface_band) {
    hit.kind = HitKind::kOnSurface;
    return hit;
  }
  if (t <= surface_band || !roughly_inside) {
    hit.kind = HitKind::kMiss;  // behind the origin, or comfortably outside
    return hit;
  }
  const bool near_boundary = u <= kBarycentricBand || v <= kBarycentricBand ||
                             u + v >= 1.0 - kBarycentricBand;
  hit.kind = near_boundary ? HitKind::kUncertain : HitKind::kCrossing;
  hit.t = t;
  return hit;
}

// Closest point on a triangle (Ericson, Real-Time Collision Detection).
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a;
  const Vec3 ac = c - a;
  const Vec3 ap = p - a;
  const Scalar d1 = ab.dot(ap);
  const Scalar d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;

  const Vec3 bp = p - b;
  const Scalar d3 = ab.dot(bp);
  const Scalar d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;

  const Scalar vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    const Scalar v = d1 / (d1 - d3);
    return a + v * ab;
  }

  const Vec3 cp = p - c;
  const Scalar d5 = ab.dot(cp);
  const Scalar d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;

  const Scalar vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    const Scalar w = d2 / (d2 - d6);
    return a + w * ac;
  }

  const Scalar va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    const Scalar w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return b + w * (c - b);
  }

  const Scalar denom = 1.0 / (va + vb + vc);
  const Scalar v = vb * denom;
  const Scalar w = vc * denom;
  return a + ab * v + ac * w;
}

// Generalized winding number; exact-arithmetic-free but far from boundary
// cases by the time it is used as the final fallback.
bool winding_inside(const TriMesh& mesh, const Vec3& p) {
  const Points& verts = mesh.vertices();
  const Faces& faces = mesh.faces();
  Scalar total = 0.0;
  for (int f = 0; f < faces.rows(); ++f) {
    const Vec3 a = verts.row(faces(f, 0)).transpose() - p;
    const Vec3 b = verts.row(faces(f, 1)).transpose() - p;
    const Vec3 c = verts.row(faces(f, 2)).transpose() - p;
    const Scalar la = a.norm(), lb = b.norm(), lc = c.norm();
    const Scalar denom =
        la * lb * lc + a.dot(b) * lc + b.dot(c) * la + c.dot(a) * lb;
    const Scalar numer = a.dot(b.cross(c));
    total += 2.0 * std::atan2(numer, denom);
  }
  return total > 2.0 * M_PI;  // full solid angle is 4*pi inside, 0 outside
}

struct GridRef {
  const Vec3& origin;
  const Vec3& cell;
  const Eigen::Vector3i& dims;
};

Eigen::Vector3i cell_of(const GridRef& g, const Vec3& p) {
  Eigen::Vector3i c;
  for (int i = 0; i < 3; ++i) {
    const Scalar rel = (p[i] - g.origin[i]) / g.cell[i];
    c[i] = std::clamp(static_cast<int>(std::floor(rel)), 0, g.dims[i] - 1);
  }
  return c;
}

GridRef grid_ref(const TriMesh::Grid& g) { return {g.origin, g.cell, g.dims}; }

}  // namespace

void check_closed_manifold(const Faces& faces, int vertex_count) {
  if (faces.rows() < 4) {
    throw TopologyError("mesh needs at least 4 faces to be closed");
  }
  std::unordered_map<std::uint64_t, int> directed;
  directed.reserve(static_cast<size_t>(faces.rows()) * 3);
  const auto key = [](int a, int b) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
           static_cast<std::uint32_t>(b);
  };
  for (int f = 0; f < faces.rows(); ++f) {
    for (int e = 0; e < 3; ++e) {
      const int a = faces(f, e);
      const int b = faces(f, (e + 1) % 3);
      if (a < 0 || b < 0 || a >= vertex_count || b >= vertex_count) {
        throw ValidationError("face " + std::to_string(f) +
                              " references an out-of-range vertex");
      }
      if (a == b) {
        throw ValidationError("face " + std::to_string(f) + " repeats vertex " +
                              std::to_string(a));
      }
      if (++directed[key(a, b)] > 1) {
        throw TopologyError("directed edge (" + std::to_string(a) + "," +
                            std::to_string(b) +
                            ") appears twice; faces are inconsistently wound");
      }
    }
  }
  for (const auto& [k, count] : directed) {
    const int a = static_cast<int>(k >> 32);
    const int b = static_cast<int>(k & 0xffffffffull);
    if (directed.find(key(b, a)) == directed.end()) {
      throw TopologyError("edge (" + std::to_string(a) + "," + std::to_string(b) +
                          ") is open: shared by only one face");
    }
  }
}

TriMesh build_mesh(const Points& vertices, const Faces& faces) {
  if (!vertices.allFinite()) {
    throw ValidationError("mesh vertices contain non-finite values");
  }
  if (faces.size() > 0 &&
      (faces.minCoeff() < 0 || faces.maxCoeff() >= vertices.rows())) {
    throw ValidationError("faces reference out-of-range vertex indices");
  }
  check_closed_manifold(faces, static_cast<int>(vertices.rows()));

  for (int f = 0; f < faces.rows(); ++f) {
    const Vec3 a = vertices.row(faces(f, 0));
    const Vec3 b = vertices.row(faces(f, 1));
    const Vec3 c = vertices.row(faces(f, 2));
    const Scalar area = 0.5 * (b - a).cross(c - a).norm();
    if (!(area > 1e-14)) {
      throw ValidationError("face " + std::to_string(f) + " is degenerate (area " +
                            std::to_string(area) + ")");
    }
  }

  TriMesh mesh;
  mesh.vertices_ = vertices;
  mesh.faces_ = faces;
  mesh.bbox_min_ = vertices.colwise().minCoeff().transpose();
  mesh.bbox_max_ = vertices.colwise().maxCoeff().transpose();

  TriMesh::Grid& grid = mesh.grid_;
  const Vec3 extent = mesh.bbox_max_ - mesh.bbox_min_;
  const Scalar diag = std::max(extent.norm(), 1e-12);
  const Scalar target = diag / std::clamp(std::cbrt(static_cast<Scalar>(faces.rows())) * 2.0,
                                          4.0, 64.0);
  for (int i = 0; i < 3; ++i) {
    grid.dims[i] = std::clamp(static_cast<int>(std::ceil(extent[i] / target)), 1, 128);
    grid.cell[i] = std::max(extent[i] / grid.dims[i], 1e-12);
  }
  grid.origin = mesh.bbox_min_;
  grid.cells.assign(static_cast<size_t>(grid.dims.x()) * grid.dims.y() * grid.dims.z(), {});

  const GridRef g = grid_ref(grid);
  for (int f = 0; f < faces.rows(); ++f) {
    Vec3 lo = vertices.row(faces(f, 0));
    Vec3 hi = lo;
    for (int e = 1; e < 3; ++e) {
      lo = lo.cwiseMin(vertices.row(faces(f, e)).transpose());
      hi = hi.cwiseMax(vertices.row(faces(f, e)).transpose());
    }
    const Eigen::Vector3i c0 = cell_of(g, lo);
    const Eigen::Vector3i c1 = cell_of(g, hi);
    for (int iz = c0.z(); iz <= c1.z(); ++iz)
      for (int iy = c0.y(); iy <= c1.y(); ++iy)
        for (int ix = c0.x(); ix <= c1.x(); ++ix)
          grid.cells[static_cast<size_t>(grid.index(ix, iy, iz))].push_back(f);
  }
  return mesh;
}

namespace {

// Walks grid cells along the ray (Amanatides-Woo), collecting candidate
// triangles once each. The grid only prunes; every cell the ray touches is
// visited and triangles are stored per overlapped cell, so no crossing can
// be missed.
void gather_ray_candidates(const TriMesh& mesh, const Vec3& origin, const Vec3& dir,
                           std::vector<int>& stamp, int query_id,
                           std::vector<int>& out) {
  out.clear();
  const Vec3& bmin = mesh.bbox_min();
  const Vec3& bmax = mesh.bbox_max();

  Scalar t_entry = 0.0;
  Scalar t_exit = std::numeric_limits<Scalar>::infinity();
  for (int i = 0; i < 3; ++i) {
    if (std::abs(dir[i]) < 1e-300) {
      if (origin[i] < bmin[i] || origin[i] > bmax[i]) return;
      continue;
    }
    Scalar t0 = (bmin[i] - origin[i]) / dir[i];
    Scalar t1 = (bmax[i] - origin[i]) / dir[i];
    if (t0 > t1) std::swap(t0, t1);
    t_entry = std::max(t_entry, t0);
    t_exit = std::min(t_exit, t1);
  }
  if (t_entry > t_exit) return;

  Vec3 start = origin + dir * t_entry;
  start = start.cwiseMax(bmin).cwiseMin(bmax);

  const GridRef g = grid_ref(mesh.grid());
  Eigen::Vector3i cell = cell_of(g, start);

  Eigen::Vector3i step;
  Vec3 t_max, t_delta;
  for (int i = 0; i < 3; ++i) {
    if (dir[i] > 0) {
      step[i] = 1;
      const Scalar boundary = g.origin[i] + (cell[i] + 1) * g.cell[i];
      t_max[i] = t_entry + (boundary - start[i]) / dir[i];
      t_delta[i] = g.cell[i] / dir[i];
    } else if (dir[i] < 0) {
      step[i] = -1;
      const Scalar boundary = g.origin[i] + cell[i] * g.cell[i];
      t_max[i] = t_entry + (boundary - start[i]) / dir[i];
      t_delta[i] = -g.cell[i] / dir[i];
    } else {
      step[i] = 0;
      t_max[i] = std::numeric_limits<Scalar>::infinity();
      t_delta[i] = std::numeric_limits<Scalar>::infinity();
    }
  }

  while (true) {
    for (const int f :
         mesh.grid().cells[static_cast<size_t>(mesh.grid().index(cell.x(), cell.y(), cell.z()))]) {
      if (stamp[f] != query_id) {
        stamp[f] = query_id;
        out.push_back(f);
      }
    }
    int axis = 0;
    if (t_max[1] < t_max[axis]) axis = 1;
    if (t_max[2] < t_max[axis]) axis = 2;
    if (t_max[axis] > t_exit) break;
    cell[axis] += step[axis];
    if (cell[axis] < 0 || cell[axis] >= g.dims[axis]) break;
    t_max[axis] += t_delta[axis];
  }
}

enum class PointClass { kInside, kOutside, kRetry };

PointClass classify_with_direction(const TriMesh& mesh, const Vec3& p, const Vec3& dir,
                                   Scalar surface_band, std::vector<int>& stamp,
                                   int query_id, std::vector<int>& candidates) {
  gather_ray_candidates(mesh, p, dir, stamp, query_id, candidates);
  int crossings = 0;
  for (const int f : candidates) {
    const Vec3 a = mesh.vertices().row(mesh.faces()(f, 0));
    const Vec3 b = mesh.vertices().row(mesh.faces()(f, 1));
    const Vec3 c = mesh.vertices().row(mesh.faces()(f, 2));
    const RayHit hit = ray_triangle(p, dir, a, b, c, surface_band);
    switch (hit.kind) {
      case HitKind::kOnSurface:
        return PointClass::kOutside;  // surface points classify as outside
      case HitKind::kUncertain:
        return PointClass::kRetry;
      case HitKind::kCrossing:
        ++crossings;
        break;
      case HitKind::kMiss:
        break;
    }
  }
  return (crossings % 2 == 1) ? PointClass::kInside : PointClass::kOutside;
}

}  // namespace

std::vector<char> inside_mask(const Points& points, const TriMesh& mesh) {
  const int n = static_cast<int>(points.rows());
  std::vector<char> mask(static_cast<size_t>(n), 0);
  const Scalar diag = (mesh.bbox_max() - mesh.bbox_min()).norm();
  const Scalar surface_band = std::max(1e-10 * diag, 1e-14);

  std::vector<int> stamp(static_cast<size_t>(mesh.faces().rows()), -1);
  std::vector<int> candidates;
  int query_id = 0;

  for (int i = 0; i < n; ++i) {
    const Vec3 p = points.row(i);
    // Cheap reject: outside the bounding box is outside the mesh.
    if ((p.array() < mesh.bbox_min().array()).any() ||
        (p.array() > mesh.bbox_max().array()).any()) {
      continue;
    }
    PointClass result = PointClass::kRetry;
    for (int attempt = 0; attempt <= kMaxRayRetries && result == PointClass::kRetry;
         ++attempt) {
      result = classify_with_direction(mesh, p, ray_directions()[attempt], surface_band,
                                       stamp, ++query_id, candidates);
    }
    if (result == PointClass::kRetry) {
      result = winding_inside(mesh, p) ? PointClass::kInside : PointClass::kOutside;
    }
    mask[static_cast<size_t>(i)] = result == PointClass::kInside ? 1 : 0;
  }
  return mask;
}

NearestVertexResult nearest_vertex_distance(const Points& points, const Points& vertex_set) {
  const int n = static_cast<int>(points.rows());
  const int m = static_cast<int>(vertex_set.rows());
  if (m < 1) throw ContractError("nearest_vertex_distance: empty vertex set");

  NearestVertexResult res;
  res.distances.assign(static_cast<size_t>(n), 0.0);
  res.indices.assign(static_cast<size_t>(n), 0);

  // Uniform grid over the vertex set with expanding-shell queries.
  const Vec3 bmin = vertex_set.colwise().minCoeff().transpose();
  const Vec3 bmax = vertex_set.colwise().maxCoeff().transpose();
  const Vec3 extent = bmax - bmin;
  const Scalar diag = std::max(extent.norm(), 1e-12);
  const Scalar target = diag / std::clamp(std::cbrt(static_cast<Scalar>(m)) * 1.5, 2.0, 64.0);

  Eigen::Vector3i dims;
  Vec3 cell;
  for (int i = 0; i < 3; ++i) {
    dims[i] = std::clamp(static_cast<int>(std::ceil(extent[i] / target)), 1, 128);
    cell[i] = std::max(extent[i] / dims[i], 1e-12);
  }
  std::vector<std::vector<int>> cells(
      static_cast<size_t>(dims.x()) * dims.y() * dims.z());
  const GridRef g{bmin, cell, dims};
  const auto flat = [&](int ix, int iy, int iz) {
    return (iz * dims.y() + iy) * dims.x() + ix;
  };
  for (int v = 0; v < m; ++v) {
    const Eigen::Vector3i c = cell_of(g, vertex_set.row(v).transpose());
    cells[static_cast<size_t>(flat(c.x(), c.y(), c.z()))].push_back(v);
  }
  const Scalar h_min = cell.minCoeff();
  const int max_ring = dims.maxCoeff();

  for (int i = 0; i < n; ++i) {
    const Vec3 p = points.row(i);
    const Eigen::Vector3i c0 = cell_of(g, p);
    Scalar best = std::numeric_limits<Scalar>::infinity();
    int best_idx = -1;

    for (int ring = 0; ring <= max_ring; ++ring) {
      // All unvisited vertices are at least (ring-1)*h_min away; once that
      // bound strictly exceeds the best distance, no closer or equal-tie
      // candidate remains.
      if (best_idx >= 0 && static_cast<Scalar>(ring - 1) * h_min > best) break;
      for (int iz = c0.z() - ring; iz <= c0.z() + ring; ++iz) {
        if (iz < 0 || iz >= dims.z()) continue;
        for (int iy = c0.y() - ring; iy <= c0.y() + ring; ++iy) {
          if (iy < 0 || iy >= dims.y()) continue;
          for (int ix = c0.x() - ring; ix <= c0.x() + ring; ++ix) {
            if (ix < 0 || ix >= dims.x()) continue;
            const int cheb = std::max({std::abs(ix - c0.x()), std::abs(iy - c0.y()),
                                       std::abs(iz - c0.z())});
            if (cheb != ring) continue;
            for (const int v : cells[static_cast<size_t>(flat(ix, iy, iz))]) {
              const Scalar d = (vertex_set.row(v).transpose() - p).norm();
              if (d < best || (d == best && v < best_idx)) {
                best = d;
                best_idx = v;
              }
            }
          }
        }
      }
    }
    res.distances[static_cast<size_t>(i)] = best;
    res.indices[static_cast<size_t>(i)] = best_idx;
  }
  return res;
}

std::vector<Scalar> point_to_surface_distance(const Points& points, const TriMesh& mesh) {
  const int n = static_cast<int>(points.rows());
  std::vector<Scalar> out(static_cast<size_t>(n), 0.0);

  const GridRef g = grid_ref(mesh.grid());
  const Scalar h_min = mesh.grid().cell.minCoeff();
  // Query cells are clamped into the grid, so every cell lies within
  // maxCoeff() rings of any query; all faces are seen by then.
  const int max_ring = mesh.grid().dims.maxCoeff();
  std::vector<int> stamp(static_cast<size_t>(mesh.faces().rows()), -1);

  for (int i = 0; i < n; ++i) {
    const Vec3 p = points.row(i);
    const Eigen::Vector3i c0 = cell_of(g, p);
    Scalar best = std::numeric_limits<Scalar>::infinity();
    bool found = false;

    for (int ring = 0; ring <= max_ring; ++ring) {
      // Any face not yet encountered overlaps no scanned cell and is at
      // least (ring-1)*h_min away.
      if (found && static_cast<Scalar>(ring - 1) * h_min > best) break;
      for (int iz = c0.z() - ring; iz <= c0.z() + ring; ++iz) {
        if (iz < 0 || iz >= g.dims.z()) continue;
        for (int iy = c0.y() - ring; iy <= c0.y() + ring; ++iy) {
          if (iy < 0 || iy >= g.dims.y()) continue;
          for (int ix = c0.x() - ring; ix <= c0.x() + ring; ++ix) {
            if (ix < 0 || ix >= g.dims.x()) continue;
            const int cheb = std::max({std::abs(ix - c0.x()), std::abs(iy - c0.y()),
                                       std::abs(iz - c0.z())});
            if (cheb != ring) continue;
            for (const int f :
                 mesh.grid().cells[static_cast<size_t>(mesh.grid().index(ix, iy, iz))]) {
              if (stamp[f] == i) continue;
              stamp[f] = i;
              const Vec3 a = mesh.vertices().row(mesh.faces()(f, 0));
              const Vec3 b = mesh.vertices().row(mesh.faces()(f, 1));
              const Vec3 c = mesh.vertices().row(mesh.faces()(f, 2));
              const Scalar d = (closest_point_on_triangle(p, a, b, c) - p).norm();
              if (d < best) {
                best = d;
                found = true;
              }
            }
          }
        }
      }
    }
    out[static_cast<size_t>(i)] = best;
  }
  return out;
}

CollisionReport penetration_report(const TriMesh& mesh_right, const TriMesh& mesh_left) {
  CollisionReport report;
  report.inside_mask_right_in_left = inside_mask(mesh_right.vertices(), mesh_left);
  report.inside_mask_left_in_right = inside_mask(mesh_left.vertices(), mesh_right);

  std::vector<int> penetrating;
  for (int v = 0; v < mesh_right.vertices().rows(); ++v) {
    if (report.inside_mask_right_in_left[static_cast<size_t>(v)]) {
      penetrating.push_back(v);
    }
  }
  // Depth and count follow the right-vertices-to-left-surface direction;
  // the opposite mask is kept for diagnostics only.
  report.penetrating_count = static_cast<int>(penetrating.size());
  if (!penetrating.empty()) {
    Points pts(static_cast<int>(penetrating.size()), 3);
    for (size_t k = 0; k < penetrating.size(); ++k) {
      pts.row(static_cast<int>(k)) = mesh_right.vertices().row(penetrating[k]);
    }
    const std::vector<Scalar> depths = point_to_surface_distance(pts, mesh_left);
    for (size_t k = 0; k < penetrating.size(); ++k) {
      report.per_vertex_depth[penetrating[k]] = depths[k];
      report.max_depth = std::max(report.max_depth, depths[k]);
    }
  }
  return report;
}

}  // namespace handseq

#pragma once

#include <map>
#include <utility>
#include <vector>

#include "handseq/types.hpp"

namespace handseq {

// Closed 2-manifold triangle mesh with a uniform-grid triangle index.
// Immutable after build_mesh; all queries are const and thread-safe.
class TriMesh {
 public:
  // Uniform grid over triangle bounding boxes: prune-only, never changes
  // query results.
  struct Grid {
    Vec3 origin = Vec3::Zero();
    Vec3 cell = Vec3::Ones();
    Eigen::Vector3i dims = Eigen::Vector3i::Ones();
    std::vector<std::vector<int>> cells;

    int index(int ix, int iy, int iz) const {
      return (iz * dims.y() + iy) * dims.x() + ix;
    }
  };

  const Points& vertices() const { return vertices_; }
  const Faces& faces() const { return faces_; }
  const Vec3& bbox_min() const { return bbox_min_; }
  const Vec3& bbox_max() const { return bbox_max_; }
  const Grid& grid() const { return grid_; }

  friend TriMesh build_mesh(const Points& vertices, const Faces& faces);

 private:
  Points vertices_;
  Faces faces_;
  Vec3 bbox_min_ = Vec3::Zero();
  Vec3 bbox_max_ = Vec3::Zero();
  Grid grid_;
};

struct CollisionReport {
  std::vector<char> inside_mask_right_in_left;
  std::vector<char> inside_mask_left_in_right;
  Scalar max_depth = 0.0;  // meters
  int penetrating_count = 0;
  // Depth of each penetrating right-hand vertex to the left surface.
  std::map<int, Scalar> per_vertex_depth;
};

// Validates topology (closed, 2-manifold, no degenerate faces) and builds
// the acceleration grid. Throws TopologyError / ValidationError.
TriMesh build_mesh(const Points& vertices, const Faces& faces);

// Shared with the hand model loader: every undirected edge must appear in
// exactly two faces with opposite orientations.
void check_closed_manifold(const Faces& faces, int vertex_count);

// Ray-parity containment. Points on the surface classify as outside.
// Deterministic for any thread count.
std::vector<char> inside_mask(const Points& points, const TriMesh& mesh);

struct NearestVertexResult {
  std::vector<Scalar> distances;
  std::vector<int> indices;  // ties resolved to the lowest index
};

// Exact minimum distance from each point to the vertex set.
NearestVertexResult nearest_vertex_distance(const Points& points, const Points& vertex_set);

// Exact minimum point-to-triangle distance over all faces.
std::vector<Scalar> point_to_surface_distance(const Points& points, const TriMesh& mesh);

// Both inside masks plus depths of penetrating right-hand vertices measured
// to the left surface; max_depth is 0 exactly when nothing penetrates.
CollisionReport penetration_report(const TriMesh& mesh_right, const TriMesh& mesh_left);

}  // namespace handseq

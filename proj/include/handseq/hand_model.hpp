#pragma once

#include <array>
#include <cstdint>
#include <utility>

#include "handseq/types.hpp"

namespace handseq {

enum class HandSide { kRight, kLeft };

// Parametric hand: blendshapes + linear blend skinning + joint regression.
//
// Basis matrices store one displacement field per column; row 3*v + c is
// coordinate c of vertex v. The first node_count() rows of joint_regressor
// double as the kinematic pivots: pivot k = row k applied to the
// shape-blended rest template.
struct HandModel {
  HandSide side = HandSide::kRight;
  Points template_vertices;           // V x 3, meters
  Faces faces;                        // F x 3
  MatX shape_basis;                   // 3V x B
  MatX pose_basis;                    // 3V x P, P == 0 or 9*(K-1)
  MatX skin_weights;                  // V x K, rows sum to 1
  MatX joint_regressor;               // J x V, rows sum to 1, J >= K
  Eigen::VectorXi kinematic_parents;  // K, parents[0] == -1, parents[k] < k
  MatX pose_pca;                      // D x 3*(K-1), 0x0 when unused

  int vertex_count() const { return static_cast<int>(template_vertices.rows()); }
  int face_count() const { return static_cast<int>(faces.rows()); }
  int node_count() const { return static_cast<int>(kinematic_parents.size()); }
  int joint_count() const { return static_cast<int>(joint_regressor.rows()); }
  int shape_count() const { return static_cast<int>(shape_basis.cols()); }
  bool has_pose_pca() const { return pose_pca.size() > 0; }
  // Length of a valid theta vector for this model.
  int theta_size() const {
    return has_pose_pca() ? static_cast<int>(pose_pca.rows()) : 3 * node_count();
  }
};

struct HandParamsFrame {
  VecX theta;  // axis-angle per node (root first) or PCA coefficients
  VecX beta;
  Vec3 translation = Vec3::Zero();
};

struct MeshFrame {
  Points vertices;  // V x 3
  Points joints;    // J x 3
};

// Throws ValidationError / TopologyError naming the violated invariant.
void validate_model(const HandModel& model);

// Deterministic watertight articulated stand-in: palm slab plus two tapered
// fingers. V=66, F=128, K=5, J=5, B=2 (palm width, finger length).
HandModel generate_mini_hand(std::uint64_t seed);

// Reflects a model across the x=0 plane, rewinding faces to stay outward.
HandModel mirror_model(const HandModel& model);

// Axis-angle exponential map; exact at the zero vector.
Mat3 rodrigues(const Vec3& axis_angle);
// d(rodrigues)/d(axis_angle), one 3x3 per input component.
std::array<Mat3, 3> rodrigues_jacobian(const Vec3& axis_angle);

MeshFrame forward(const HandModel& model, const HandParamsFrame& frame);

struct ForwardJacobian {
  // Row layout 3*point + coordinate; d/dtranslation is the identity on
  // every vertex and joint and is not materialized.
  MatX dvertices_dtheta;  // 3V x theta_size
  MatX dvertices_dbeta;   // 3V x B
  MatX djoints_dtheta;    // 3J x theta_size
  MatX djoints_dbeta;     // 3J x B
};

ForwardJacobian forward_jacobian(const HandModel& model, const HandParamsFrame& frame);

// Shifts the left hand into the right hand's coordinate system.
std::pair<MeshFrame, MeshFrame> compose_two_hands(const MeshFrame& right,
                                                  const MeshFrame& left,
                                                  const Vec3& relative_translation);

}  // namespace handseq

#include "handseq/hand_model.hpp"

#include <Eigen/Geometry>
#include <cmath>
#include <string>
#include <vector>

#include "handseq/collision.hpp"
#include "handseq/errors.hpp"
#include "handseq/rng.hpp"

namespace handseq {

namespace {

using RowMajor3 = Eigen::Matrix<Scalar, Eigen::Dynamic, 3, Eigen::RowMajor>;

Mat3 cross_matrix(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

// Expands PCA coefficients (if any) to the 3K axis-angle vector; the root
// rotation is identity under the PCA parameterization.
VecX full_pose(const HandModel& model, const VecX& theta) {
  if (!model.has_pose_pca()) return theta;
  const int nodes = model.node_count();
  VecX full = VecX::Zero(3 * nodes);
  full.tail(3 * (nodes - 1)) = model.pose_pca.transpose() * theta;
  return full;
}

Points unflatten(const VecX& flat) {
  return Eigen::Map<const RowMajor3>(flat.data(), flat.size() / 3, 3);
}

void check_frame_dims(const HandModel& model, const HandParamsFrame& frame) {
  if (frame.theta.size() != model.theta_size()) {
    throw ContractError("theta size " + std::to_string(frame.theta.size()) +
                        " does not match model pose space " +
                        std::to_string(model.theta_size()));
  }
  if (frame.beta.size() != model.shape_count()) {
    throw ContractError("beta size " + std::to_string(frame.beta.size()) +
                        " does not match model shape count " +
                        std::to_string(model.shape_count()));
  }
  if (!frame.theta.allFinite() || !frame.beta.allFinite() ||
      !frame.translation.allFinite()) {
    throw ContractError("non-finite hand parameters");
  }
}

struct PosedState {
  Points shaped;       // V x 3 rest template after shape blending
  Points skinned_src;  // shaped plus pose correctives
  Points pivots;       // K x 3 rest pivots
  std::vector<Mat3> local;
  std::vector<Mat3> global_rot;
  std::vector<Vec3> global_pos;
};

PosedState pose_state(const HandModel& model, const HandParamsFrame& frame) {
  const int nodes = model.node_count();
  PosedState s;
  s.shaped = model.template_vertices;
  if (model.shape_count() > 0) {
    s.shaped += unflatten(model.shape_basis * frame.beta);
  }
  s.pivots = model.joint_regressor.topRows(nodes) * s.shaped;

  const VecX pose = full_pose(model, frame.theta);
  s.local.resize(nodes);
  for (int k = 0; k < nodes; ++k) {
    s.local[k] = rodrigues(pose.segment<3>(3 * k));
  }

  s.skinned_src = s.shaped;
  if (model.pose_basis.cols() > 0) {
    VecX feat(9 * (nodes - 1));
    for (int k = 1; k < nodes; ++k) {
      const Mat3 d = s.local[k] - Mat3::Identity();
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) feat[9 * (k - 1) + 3 * r + c] = d(r, c);
    }
    s.skinned_src += unflatten(model.pose_basis * feat);
  }

  s.global_rot.resize(nodes);
  s.global_pos.resize(nodes);
  s.global_rot[0] = s.local[0];
  s.global_pos[0] = s.pivots.row(0).transpose();
  for (int k = 1; k < nodes; ++k) {
    const int par = model.kinematic_parents[k];
    s.global_rot[k] = s.global_rot[par] * s.local[k];
    s.global_pos[k] =
        s.global_rot[par] * (s.pivots.row(k) - s.pivots.row(par)).transpose() +
        s.global_pos[par];
  }
  return s;
}

}  // namespace

Mat3 rodrigues(const Vec3& axis_angle) {
  const Scalar angle = axis_angle.stableNorm();  // squaring must not overflow
  const Mat3 vx = cross_matrix(axis_angle);
  if (angle < 1e-8) {
    // Second-order Taylor, exact at zero.
    return Mat3::Identity() + vx + 0.5 * (vx * vx);
  }
  const Mat3 nx = vx / angle;
  return Mat3::Identity() + std::sin(angle) * nx + (1.0 - std::cos(angle)) * (nx * nx);
}

std::array<Mat3, 3> rodrigues_jacobian(const Vec3& axis_angle) {
  std::array<Mat3, 3> out;
  const Scalar angle = axis_angle.stableNorm();
  if (angle < 1e-6) {
    const Mat3 vx = cross_matrix(axis_angle);
    for (int i = 0; i < 3; ++i) {
      const Mat3 ex = cross_matrix(Vec3::Unit(i));
      out[i] = ex + 0.5 * (ex * vx + vx * ex);
    }
    return out;
  }
  // Gallego & Yezzi closed form.
  const Mat3 rot = rodrigues(axis_angle);
  const Mat3 vx = cross_matrix(axis_angle);
  const Scalar sq = angle * angle;
  for (int i = 0; i < 3; ++i) {
    const Vec3 e = Vec3::Unit(i);
    const Vec3 w = axis_angle.cross((Mat3::Identity() - rot) * e);
    out[i] = ((axis_angle[i] * vx + cross_matrix(w)) / sq) * rot;
  }
  return out;
}

void validate_model(const HandModel& model) {
  const int verts = model.vertex_count();
  const int nodes = model.node_count();
  const int joints = model.joint_count();

  if (verts < 4) throw ValidationError("model needs at least 4 vertices");
  if (!model.template_vertices.allFinite()) {
    throw ValidationError("template_vertices contains non-finite values");
  }
  if (nodes < 1) throw ValidationError("kinematic tree is empty");
  if (model.kinematic_parents[0] != -1) {
    throw ValidationError("kinematic_parents: root (index 0) must have parent -1");
  }
  for (int k = 1; k < nodes; ++k) {
    const int par = model.kinematic_parents[k];
    if (par < 0 || par >= k) {
      throw ValidationError("kinematic_parents: node " + std::to_string(k) +
                            " has parent " + std::to_string(par) +
                            ", expected a prior index");
    }
  }

  if (model.skin_weights.rows() != verts || model.skin_weights.cols() != nodes) {
    throw ValidationError("skin_weights must be V x K");
  }
  for (int v = 0; v < verts; ++v) {
    if (model.skin_weights.row(v).minCoeff() < 0.0) {
      throw ValidationError("skin_weights row " + std::to_string(v) +
                            " has a negative weight");
    }
    const Scalar sum = model.skin_weights.row(v).sum();
    if (std::abs(sum - 1.0) > 1e-6) {
      throw ValidationError("skin_weights row " + std::to_string(v) +
                            " sums to " + std::to_string(sum) + ", expected 1");
    }
  }

  if (joints < nodes) {
    throw ValidationError("joint_regressor needs at least K rows (pivots)");
  }
  if (model.joint_regressor.cols() != verts) {
    throw ValidationError("joint_regressor must be J x V");
  }
  for (int j = 0; j < joints; ++j) {
    const Scalar sum = model.joint_regressor.row(j).sum();
    if (std::abs(sum - 1.0) > 1e-6) {
      throw ValidationError("joint_regressor row " + std::to_string(j) +
                            " sums to " + std::to_string(sum) + ", expected 1");
    }
  }

  if (model.shape_basis.cols() > 0 && model.shape_basis.rows() != 3 * verts) {
    throw ValidationError("shape_basis must have 3V rows");
  }
  if (model.pose_basis.cols() > 0) {
    if (model.pose_basis.rows() != 3 * verts) {
      throw ValidationError("pose_basis must have 3V rows");
    }
    if (model.pose_basis.cols() != 9 * (nodes - 1)) {
      throw ValidationError("pose_basis must have 9*(K-1) columns");
    }
  }
  if (model.has_pose_pca() && model.pose_pca.cols() != 3 * (nodes - 1)) {
    throw ValidationError("pose_pca must have 3*(K-1) columns");
  }

  if (model.faces.size() > 0 &&
      (model.faces.minCoeff() < 0 || model.faces.maxCoeff() >= verts)) {
    throw ValidationError("faces reference out-of-range vertex indices");
  }
  check_closed_manifold(model.faces, verts);
}

MeshFrame forward(const HandModel& model, const HandParamsFrame& frame) {
  check_frame_dims(model, frame);
  const int verts = model.vertex_count();
  const int nodes = model.node_count();
  const PosedState s = pose_state(model, frame);

  Points posed = Points::Zero(verts, 3);
  for (int k = 0; k < nodes; ++k) {
    const Vec3 shift = s.global_pos[k] - s.global_rot[k] * s.pivots.row(k).transpose();
    Points contrib = s.skinned_src * s.global_rot[k].transpose();
    contrib.rowwise() += shift.transpose();
    posed += model.skin_weights.col(k).asDiagonal() * contrib;
  }
  posed.rowwise() += frame.translation.transpose();

  MeshFrame out;
  out.vertices = posed;
  out.joints = model.joint_regressor * posed;
  return out;
}

ForwardJacobian forward_jacobian(const HandModel& model, const HandParamsFrame& frame) {
  check_frame_dims(model, frame);
  const int verts = model.vertex_count();
  const int nodes = model.node_count();
  const int shapes = model.shape_count();
  const PosedState s = pose_state(model, frame);
  const VecX pose = full_pose(model, frame.theta);

  // Full axis-angle jacobian first; PCA spaces are chained at the end.
  MatX dv_dpose = MatX::Zero(3 * verts, 3 * nodes);
  std::vector<Mat3> drot(nodes);
  std::vector<Vec3> dpos(nodes);
  std::vector<char> touched(nodes);

  for (int m = 0; m < nodes; ++m) {
    const std::array<Mat3, 3> dlocal = rodrigues_jacobian(pose.segment<3>(3 * m));
    for (int comp = 0; comp < 3; ++comp) {
      std::fill(touched.begin(), touched.end(), 0);
      touched[m] = 1;
      drot[m] = m == 0 ? dlocal[comp]
                       : Mat3(s.global_rot[model.kinematic_parents[m]] * dlocal[comp]);
      dpos[m] = Vec3::Zero();
      for (int k = m + 1; k < nodes; ++k) {
        const int par = model.kinematic_parents[k];
        if (!touched[par]) continue;
        touched[k] = 1;
        drot[k] = drot[par] * s.local[k];
        dpos[k] = drot[par] * (s.pivots.row(k) - s.pivots.row(par)).transpose() + dpos[par];
      }

      // Pose correctives add a source-displacement term for non-root nodes.
      Points dsrc;
      const bool has_corr = model.pose_basis.cols() > 0 && m >= 1;
      if (has_corr) {
        VecX dfeat = VecX::Zero(9);
        for (int r = 0; r < 3; ++r)
          for (int c = 0; c < 3; ++c) dfeat[3 * r + c] = dlocal[comp](r, c);
        dsrc = unflatten(model.pose_basis.middleCols(9 * (m - 1), 9) * dfeat);
      }

      Points acc = Points::Zero(verts, 3);
      for (int k = 0; k < nodes; ++k) {
        if (!touched[k] && !has_corr) continue;
        Points term = Points::Zero(verts, 3);
        if (touched[k]) {
          Points shifted = s.skinned_src;
          shifted.rowwise() -= s.pivots.row(k);
          term += shifted * drot[k].transpose();
          term.rowwise() += dpos[k].transpose();
        }
        if (has_corr) {
          term += dsrc * s.global_rot[k].transpose();
        }
        acc += model.skin_weights.col(k).asDiagonal() * term;
      }
      const int col = 3 * m + comp;
      dv_dpose.col(col) = Eigen::Map<const VecX>(RowMajor3(acc).data(), 3 * verts);
    }
  }

  ForwardJacobian jac;
  if (model.has_pose_pca()) {
    // Root stays identity under PCA, so only non-root columns contribute.
    jac.dvertices_dtheta = dv_dpose.rightCols(3 * (nodes - 1)) * model.pose_pca.transpose();
  } else {
    jac.dvertices_dtheta = std::move(dv_dpose);
  }

  jac.dvertices_dbeta = MatX::Zero(3 * verts, shapes);
  for (int b = 0; b < shapes; ++b) {
    const Points dshaped = unflatten(model.shape_basis.col(b));
    const Points dpivots = model.joint_regressor.topRows(nodes) * dshaped;
    dpos[0] = dpivots.row(0).transpose();
    for (int k = 1; k < nodes; ++k) {
      const int par = model.kinematic_parents[k];
      dpos[k] = s.global_rot[par] * (dpivots.row(k) - dpivots.row(par)).transpose() +
                dpos[par];
    }
    Points acc = Points::Zero(verts, 3);
    for (int k = 0; k < nodes; ++k) {
      Points dshift = dshaped;
      dshift.rowwise() -= dpivots.row(k);
      Points term = dshift * s.global_rot[k].transpose();
      term.rowwise() += dpos[k].transpose();
      acc += model.skin_weights.col(k).asDiagonal() * term;
    }
    jac.dvertices_dbeta.col(b) = Eigen::Map<const VecX>(RowMajor3(acc).data(), 3 * verts);
  }

  const int joints = model.joint_count();
  const auto expand = [&](const MatX& dv) {
    MatX dj = MatX::Zero(3 * joints, dv.cols());
    for (int j = 0; j < joints; ++j) {
      for (int v = 0; v < verts; ++v) {
        const Scalar w = model.joint_regressor(j, v);
        if (w == 0.0) continue;
        dj.middleRows(3 * j, 3) += w * dv.middleRows(3 * v, 3);
      }
    }
    return dj;
  };
  jac.djoints_dtheta = expand(jac.dvertices_dtheta);
  jac.djoints_dbeta = expand(jac.dvertices_dbeta);
  return jac;
}

std::pair<MeshFrame, MeshFrame> compose_two_hands(const MeshFrame& right,
                                                  const MeshFrame& left,
                                                  const Vec3& relative_translation) {
  if (!relative_translation.allFinite()) {
    throw ContractError("relative translation must be finite");
  }
  MeshFrame shifted = left;
  shifted.vertices.rowwise() += relative_translation.transpose();
  shifted.joints.rowwise() += relative_translation.transpose();
  return {right, shifted};
}

// ---------------------------------------------------------------------------
// Mini hand
// ---------------------------------------------------------------------------

namespace {

constexpr int kGridCols = 6;  // palm grid samples across x
constexpr int kRingsPerFinger = 5;

int top_index(int i, int j) { return j * kGridCols + i; }
int bottom_index(int i, int j) { return 12 + j * kGridCols + i; }

struct FingerLayout {
  int column = 0;      // palm grid column the finger grows from
  int first_ring = 0;  // vertex index of ring 1
  int apex = 0;
};

}  // namespace

HandModel generate_mini_hand(std::uint64_t seed) {
  Rng rng(seed ^ 0x6d696e6968616e64ull);  // decorrelate small seeds

  const Scalar width = rng.uniform(0.070, 0.090);
  const Scalar length = rng.uniform(0.035, 0.050);
  const Scalar height = rng.uniform(0.016, 0.024);
  const Scalar seg_a = rng.uniform(0.011, 0.015);
  const Scalar seg_b = rng.uniform(0.011, 0.015);
  const Scalar taper = rng.uniform(0.05, 0.10);

  const int verts = 66;
  Points vertices(verts, 3);

  for (int j = 0; j < 2; ++j) {
    for (int i = 0; i < kGridCols; ++i) {
      const Scalar x = width * i / (kGridCols - 1);
      const Scalar z = height * j;
      vertices.row(top_index(i, j)) = Vec3(x, length, z);
      vertices.row(bottom_index(i, j)) = Vec3(x, 0.0, z);
    }
  }

  const FingerLayout fingers[2] = {{1, 24, 44}, {3, 45, 65}};
  const Scalar seg_len[2] = {seg_a, seg_b};
  for (int f = 0; f < 2; ++f) {
    const int i = fingers[f].column;
    const Scalar xlo = width * i / (kGridCols - 1);
    const Scalar xhi = width * (i + 1) / (kGridCols - 1);
    const Scalar cx = 0.5 * (xlo + xhi);
    const Scalar cz = 0.5 * height;
    for (int ring = 1; ring <= kRingsPerFinger; ++ring) {
      const Scalar y = length + seg_len[f] * ring;
      const Scalar scale = 1.0 - taper * ring / kRingsPerFinger;
      const Scalar corners[4][2] = {
          {xlo, 0.0}, {xhi, 0.0}, {xhi, height}, {xlo, height}};
      for (int c = 0; c < 4; ++c) {
        const Scalar x = cx + scale * (corners[c][0] - cx);
        const Scalar z = cz + scale * (corners[c][1] - cz);
        vertices.row(fingers[f].first_ring + 4 * (ring - 1) + c) = Vec3(x, y, z);
      }
    }
    vertices.row(fingers[f].apex) =
        Vec3(cx, length + seg_len[f] * kRingsPerFinger + 0.4 * seg_len[f], cz);
  }

  // Faces, outward wound. Palm first.
  std::vector<std::array<int, 3>> tri;
  tri.reserve(128);
  const auto quad = [&](int a, int b, int c, int d) {
    tri.push_back({a, b, c});
    tri.push_back({a, c, d});
  };
  const auto quad_rev = [&](int a, int b, int c, int d) {
    tri.push_back({a, c, b});
    tri.push_back({a, d, c});
  };

  for (int i = 0; i < 5; ++i) {  // bottom, -y
    quad(bottom_index(i, 0), bottom_index(i + 1, 0), bottom_index(i + 1, 1),
         bottom_index(i, 1));
  }
  for (const int i : {0, 2, 4}) {  // closed top cells, +y
    quad_rev(top_index(i, 0), top_index(i + 1, 0), top_index(i + 1, 1),
             top_index(i, 1));
  }
  for (int i = 0; i < 5; ++i) {  // z = 0 side
    quad_rev(bottom_index(i, 0), bottom_index(i + 1, 0), top_index(i + 1, 0),
             top_index(i, 0));
  }
  for (int i = 0; i < 5; ++i) {  // z = height side
    quad(bottom_index(i, 1), bottom_index(i + 1, 1), top_index(i + 1, 1),
         top_index(i, 1));
  }
  quad(bottom_index(0, 0), bottom_index(0, 1), top_index(0, 1), top_index(0, 0));
  quad_rev(bottom_index(kGridCols - 1, 0), bottom_index(kGridCols - 1, 1),
           top_index(kGridCols - 1, 1), top_index(kGridCols - 1, 0));

  for (int f = 0; f < 2; ++f) {
    const int i = fingers[f].column;
    std::array<int, 4> below = {top_index(i, 0), top_index(i + 1, 0),
                                top_index(i + 1, 1), top_index(i, 1)};
    for (int ring = 1; ring <= kRingsPerFinger; ++ring) {
      std::array<int, 4> above;
      for (int c = 0; c < 4; ++c) above[c] = fingers[f].first_ring + 4 * (ring - 1) + c;
      for (int c = 0; c < 4; ++c) {
        quad_rev(below[c], below[(c + 1) % 4], above[(c + 1) % 4], above[c]);
      }
      below = above;
    }
    for (int c = 0; c < 4; ++c) {
      tri.push_back({below[(c + 1) % 4], below[c], fingers[f].apex});
    }
  }

  Faces faces(static_cast<int>(tri.size()), 3);
  for (size_t t = 0; t < tri.size(); ++t) {
    faces.row(static_cast<int>(t)) << tri[t][0], tri[t][1], tri[t][2];
  }

  HandModel model;
  model.side = HandSide::kRight;
  model.template_vertices = vertices;
  model.faces = faces;

  // Shape space: component 0 widens the palm, component 1 stretches fingers.
  model.shape_basis = MatX::Zero(3 * verts, 2);
  for (int v = 0; v < verts; ++v) {
    model.shape_basis(3 * v + 0, 0) = 0.12 * (vertices(v, 0) - 0.5 * width);
    model.shape_basis(3 * v + 1, 1) = 0.15 * std::max(0.0, vertices(v, 1) - length);
  }
  model.pose_basis = MatX(3 * verts, 0);

  // Nodes: palm root, then (lower, upper) per finger.
  const int nodes = 5;
  model.kinematic_parents = Eigen::VectorXi(nodes);
  model.kinematic_parents << -1, 0, 1, 0, 3;

  model.skin_weights = MatX::Zero(verts, nodes);
  for (int v = 0; v < 24; ++v) model.skin_weights(v, 0) = 1.0;
  for (int f = 0; f < 2; ++f) {
    const int lower = 1 + 2 * f;
    const int upper = lower + 1;
    const Scalar ring_weights[kRingsPerFinger][2] = {
        {1.0, 0.0}, {0.8, 0.2}, {0.2, 0.8}, {0.0, 1.0}, {0.0, 1.0}};
    for (int ring = 1; ring <= kRingsPerFinger; ++ring) {
      for (int c = 0; c < 4; ++c) {
        const int v = fingers[f].first_ring + 4 * (ring - 1) + c;
        model.skin_weights(v, lower) = ring_weights[ring - 1][0];
        model.skin_weights(v, upper) = ring_weights[ring - 1][1];
      }
    }
    model.skin_weights(fingers[f].apex, upper) = 1.0;
  }

  model.joint_regressor = MatX::Zero(nodes, verts);
  for (int v = 0; v < 24; ++v) model.joint_regressor(0, v) = 1.0 / 24.0;
  for (int f = 0; f < 2; ++f) {
    const int lower = 1 + 2 * f;
    const int upper = lower + 1;
    const int i = fingers[f].column;
    const int base[4] = {top_index(i, 0), top_index(i + 1, 0), top_index(i + 1, 1),
                         top_index(i, 1)};
    for (const int v : base) model.joint_regressor(lower, v) = 0.25;
    for (int ring = 2; ring <= 3; ++ring) {
      for (int c = 0; c < 4; ++c) {
        model.joint_regressor(upper, fingers[f].first_ring + 4 * (ring - 1) + c) = 0.125;
      }
    }
  }

  validate_model(model);
  return model;
}

HandModel mirror_model(const HandModel& model) {
  HandModel out = model;
  out.side = model.side == HandSide::kRight ? HandSide::kLeft : HandSide::kRight;
  out.template_vertices.col(0) *= -1.0;
  for (int v = 0; v < model.vertex_count(); ++v) {
    if (out.shape_basis.cols() > 0) out.shape_basis.row(3 * v) *= -1.0;
    if (out.pose_basis.cols() > 0) out.pose_basis.row(3 * v) *= -1.0;
  }
  out.faces.col(1).swap(out.faces.col(2));
  return out;
}

}  // namespace handseq

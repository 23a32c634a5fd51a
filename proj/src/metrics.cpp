#include "handseq/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "handseq/errors.hpp"

namespace handseq {

namespace {

void check_pair(const PointSeq& pred, const PointSeq& gt, size_t min_frames,
                const char* name) {
  if (pred.size() != gt.size()) {
    throw ContractError(std::string(name) + ": sequence lengths differ");
  }
  if (pred.size() < min_frames) {
    throw ContractError(std::string(name) + ": needs at least " +
                        std::to_string(min_frames) + " frames");
  }
  for (size_t t = 0; t < pred.size(); ++t) {
    if (pred[t].rows() != gt[t].rows()) {
      throw ContractError(std::string(name) + ": point counts differ at frame " +
                          std::to_string(t));
    }
  }
}

Points root_centered(const Points& pts, int root_index) {
  if (root_index < 0 || root_index >= pts.rows()) {
    throw ContractError("root joint index out of range");
  }
  Points out = pts;
  out.rowwise() -= pts.row(root_index);
  return out;
}

Scalar mean_row_distance(const Points& a, const Points& b) {
  return (a - b).rowwise().norm().mean();
}

}  // namespace

Scalar mpjpe(const PointSeq& pred, const PointSeq& gt, int root_index) {
  check_pair(pred, gt, 1, "mpjpe");
  Scalar total = 0.0;
  for (size_t t = 0; t < pred.size(); ++t) {
    total += mean_row_distance(root_centered(pred[t], root_index),
                               root_centered(gt[t], root_index));
  }
  return total / static_cast<Scalar>(pred.size()) * kMetersToMillimeters;
}

// Closed-form similarity alignment (Umeyama) of src onto dst with
// reflection correction.
static void similarity_align(const Points& src, const Points& dst, Mat3& rot,
                             Scalar& scale, Vec3& trans) {
  const int n = static_cast<int>(src.rows());
  if (n < 3) throw ContractError("similarity alignment needs at least 3 points");
  const Vec3 mu_s = src.colwise().mean().transpose();
  const Vec3 mu_d = dst.colwise().mean().transpose();
  Points cs = src;
  cs.rowwise() -= mu_s.transpose();
  Points cd = dst;
  cd.rowwise() -= mu_d.transpose();

  const Mat3 cov = (cd.transpose() * cs) / static_cast<Scalar>(n);
  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 sv = svd.singularValues();
  if (!(sv[0] > 0.0) || sv[1] <= 1e-12 * sv[0]) {
    throw ValidationError("similarity alignment is degenerate (collinear points)");
  }
  Vec3 signs = Vec3::Ones();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) {
    signs[2] = -1.0;
  }
  rot = svd.matrixU() * signs.asDiagonal() * svd.matrixV().transpose();
  const Scalar var_src = cs.rowwise().squaredNorm().mean();
  if (!(var_src > 0.0)) {
    throw ValidationError("similarity alignment is degenerate (coincident points)");
  }
  scale = sv.dot(signs) / var_src;
  trans = mu_d - scale * rot * mu_s;
}

Scalar pa_mpjpe(const PointSeq& pred, const PointSeq& gt) {
  check_pair(pred, gt, 1, "pa_mpjpe");
  Scalar total = 0.0;
  for (size_t t = 0; t < pred.size(); ++t) {
    Mat3 rot;
    Scalar scale;
    Vec3 trans;
    similarity_align(pred[t], gt[t], rot, scale, trans);
    Points aligned = scale * (pred[t] * rot.transpose());
    aligned.rowwise() += trans.transpose();
    total += mean_row_distance(aligned, gt[t]);
  }
  return total / static_cast<Scalar>(pred.size()) * kMetersToMillimeters;
}

Scalar mpvpe(const PointSeq& pred_vertices, const PointSeq& gt_vertices,
             const Points& pred_roots, const Points& gt_roots) {
  check_pair(pred_vertices, gt_vertices, 1, "mpvpe");
  if (pred_roots.rows() != static_cast<Eigen::Index>(pred_vertices.size()) ||
      gt_roots.rows() != pred_roots.rows()) {
    throw ContractError("mpvpe: root position counts differ from frame count");
  }
  Scalar total = 0.0;
  for (size_t t = 0; t < pred_vertices.size(); ++t) {
    Points pc = pred_vertices[t];
    pc.rowwise() -= pred_roots.row(static_cast<Eigen::Index>(t));
    Points gc = gt_vertices[t];
    gc.rowwise() -= gt_roots.row(static_cast<Eigen::Index>(t));
    total += mean_row_distance(pc, gc);
  }
  return total / static_cast<Scalar>(pred_vertices.size()) * kMetersToMillimeters;
}

std::pair<std::vector<PckPoint>, Scalar> pck_auc(const PointSeq& pred, const PointSeq& gt,
                                                 int root_index, Scalar max_threshold_mm,
                                                 int steps) {
  check_pair(pred, gt, 1, "pck_auc");
  if (steps < 2) throw ContractError("pck_auc: needs at least 2 threshold samples");
  if (!(max_threshold_mm > 0.0)) throw ContractError("pck_auc: threshold must be positive");

  std::vector<Scalar> errors_mm;
  for (size_t t = 0; t < pred.size(); ++t) {
    const Points pc = root_centered(pred[t], root_index);
    const Points gc = root_centered(gt[t], root_index);
    for (int j = 0; j < pc.rows(); ++j) {
      errors_mm.push_back((pc.row(j) - gc.row(j)).norm() * kMetersToMillimeters);
    }
  }

  std::vector<PckPoint> curve(static_cast<size_t>(steps));
  for (int i = 0; i < steps; ++i) {
    const Scalar tau = max_threshold_mm * static_cast<Scalar>(i) / (steps - 1);
    int hits = 0;
    for (const Scalar e : errors_mm) {
      if (e <= tau) ++hits;
    }
    curve[static_cast<size_t>(i)] = {tau, static_cast<Scalar>(hits) /
                                              static_cast<Scalar>(errors_mm.size())};
  }

  Scalar auc = 0.0;
  for (int i = 0; i + 1 < steps; ++i) {
    const Scalar dt = curve[i + 1].threshold_mm - curve[i].threshold_mm;
    auc += 0.5 * (curve[i].fraction + curve[i + 1].fraction) * dt;
  }
  auc /= max_threshold_mm;
  return {curve, auc};
}

Scalar accel_error(const PointSeq& pred, const PointSeq& gt, Scalar fps) {
  check_pair(pred, gt, 3, "accel_error");
  if (!(fps > 0.0)) throw ContractError("accel_error: fps must be positive");
  const Scalar fps2 = fps * fps;
  Scalar total = 0.0;
  const size_t interior = pred.size() - 2;
  for (size_t t = 1; t + 1 < pred.size(); ++t) {
    const Points ap = (pred[t + 1] - 2.0 * pred[t] + pred[t - 1]) * fps2;
    const Points ag = (gt[t + 1] - 2.0 * gt[t] + gt[t - 1]) * fps2;
    total += mean_row_distance(ap, ag);
  }
  return total / static_cast<Scalar>(interior) * kMetersToMillimeters;
}

Scalar mmpd(const std::vector<std::pair<TriMesh, TriMesh>>& mesh_pairs) {
  if (mesh_pairs.empty()) throw ContractError("mmpd: empty sequence");
  Scalar total = 0.0;
  for (const auto& [right, left] : mesh_pairs) {
    total += penetration_report(right, left).max_depth;
  }
  return total / static_cast<Scalar>(mesh_pairs.size()) * kMetersToMillimeters;
}

}  // namespace handseq

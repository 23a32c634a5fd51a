#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "handseq/collision.hpp"
#include "handseq/types.hpp"

namespace handseq {

struct PckPoint {
  Scalar threshold_mm = 0.0;
  Scalar fraction = 0.0;
};

// Joint-based entries are nullopt when no labeled frame was available.
struct MetricsReport {
  std::optional<Scalar> mpjpe_mm;
  std::optional<Scalar> pa_mpjpe_mm;
  std::optional<Scalar> mpvpe_mm;
  std::optional<Scalar> auc;
  std::vector<PckPoint> pck_curve;
  std::optional<Scalar> accel_err_mm_s2;
  Scalar mmpd_mm = 0.0;

  // Per-frame breakdowns, one row per evaluated frame (frame index, value).
  // MPJPE also carries the two per-hand values behind the average.
  std::vector<std::pair<int, Scalar>> per_frame_mpjpe_mm;
  std::vector<std::pair<int, Scalar>> per_frame_mpjpe_right_mm;
  std::vector<std::pair<int, Scalar>> per_frame_mpjpe_left_mm;
  std::vector<std::pair<int, Scalar>> per_frame_pa_mpjpe_mm;
  std::vector<std::pair<int, Scalar>> per_frame_mpvpe_mm;
  std::vector<std::pair<int, Scalar>> per_frame_accel_mm_s2;
  std::vector<std::pair<int, Scalar>> per_frame_mmpd_mm;
};

// Mean per-joint error in mm after subtracting each frame's root joint.
Scalar mpjpe(const PointSeq& pred, const PointSeq& gt, int root_index);

// Per-frame optimal similarity alignment (rotation, translation, uniform
// scale, reflection-corrected), then mean per-joint error in mm. Throws
// ValidationError when the ground truth is degenerate (collinear joints).
Scalar pa_mpjpe(const PointSeq& pred, const PointSeq& gt);

// Root-aligned mean per-vertex error in mm; roots are per-frame positions.
Scalar mpvpe(const PointSeq& pred_vertices, const PointSeq& gt_vertices,
             const Points& pred_roots, const Points& gt_roots);

// PCK over uniform thresholds [0, max_threshold_mm] and its normalized
// trapezoidal area.
std::pair<std::vector<PckPoint>, Scalar> pck_auc(const PointSeq& pred, const PointSeq& gt,
                                                 int root_index,
                                                 Scalar max_threshold_mm = 50.0,
                                                 int steps = 51);

// Mean joint-wise difference of second temporal differences, in mm/s^2.
Scalar accel_error(const PointSeq& pred, const PointSeq& gt, Scalar fps);

// Mean over frames of the per-frame maximum penetration depth, in mm.
Scalar mmpd(const std::vector<std::pair<TriMesh, TriMesh>>& mesh_pairs);

}  // namespace handseq

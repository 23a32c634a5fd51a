#pragma once

#include <optional>
#include <vector>

#include "handseq/types.hpp"

namespace handseq {

// One frame of a two-hand parameter sequence. The right hand lives at the
// origin of the shared frame; the left hand is shifted by translation_c.
struct SequenceFrame {
  VecX theta_r;
  VecX beta_r;
  VecX theta_l;
  VecX beta_l;
  Vec3 translation_c = Vec3::Zero();
  bool labeled = false;
  std::optional<Points> gt_joints_r;    // J x 3, meters
  std::optional<Points> gt_joints_l;    // J x 3
  std::optional<Points> gt_vertices_r;  // V x 3
  std::optional<Points> gt_vertices_l;  // V x 3
};

struct HandParamsSequence {
  Scalar fps = 30.0;
  std::vector<SequenceFrame> frames;

  int frame_count() const { return static_cast<int>(frames.size()); }
};

}  // namespace handseq

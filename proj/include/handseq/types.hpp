#pragma once

#include <Eigen/Core>
#include <vector>

namespace handseq {

using Scalar = double;

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

// N x 3 array, one point per row. Used for vertices, joints, displacements.
using Points = Eigen::Matrix<Scalar, Eigen::Dynamic, 3>;
// F x 3 triangle index array.
using Faces = Eigen::Matrix<int, Eigen::Dynamic, 3>;

// Per-frame sequence of point arrays (J x 3 or V x 3 each).
using PointSeq = std::vector<Points>;

inline constexpr Scalar kMetersToMillimeters = 1000.0;

// Published full-model dimensions; the mini hand used in tests is smaller.
inline constexpr int kFullHandVertexCount = 778;
inline constexpr int kFullHandJointCount = 21;

}  // namespace handseq

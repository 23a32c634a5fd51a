#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "handseq/collision.hpp"
#include "handseq/types.hpp"

namespace handseq {

// A scalar loss plus its gradient with respect to each named input.
// Gradients are stored per frame with the same shape as the input frame
// (J x 3 joints, V x 3 vertices, 1 x B betas, 1 x D thetas).
struct LossValue {
  Scalar value = 0.0;
  std::map<std::string, std::vector<MatX>> gradients;
};

struct LossWeights {
  Scalar lambda_j = 100.0;
  Scalar lambda_i = 10.0;
  Scalar lambda_m = 1.0;
  Scalar lambda_r = 0.1;
  Scalar lambda_consist = 1.0;
  Scalar lambda_beta = 0.1;
  Scalar alpha = 0.02;  // meters
};

// alpha * tanh(x / alpha): bounded penetration penalty.
Scalar bounded_penalty(Scalar x, Scalar alpha);
Scalar bounded_penalty_derivative(Scalar x, Scalar alpha);

// Sum over both hands and consecutive frames of per-joint step lengths.
// Gradient keys: "joints_right", "joints_left".
LossValue smooth_loss(const PointSeq& joints_right, const PointSeq& joints_left);

// Penetration masks for both directions over a sequence of mesh pairs.
struct InterMasks {
  std::vector<std::vector<char>> right_in_left;  // per frame, V_r flags
  std::vector<std::vector<char>> left_in_right;  // per frame, V_l flags
};

InterMasks compute_inter_masks(const std::vector<TriMesh>& meshes_right,
                               const std::vector<TriMesh>& meshes_left);

// Bounded nearest-vertex penalty over penetrating vertices of both hands.
// The mask is a constant of the evaluation: pass fixed_masks to reuse one,
// otherwise masks are recomputed from the meshes. Gradient keys:
// "vertices_right", "vertices_left".
LossValue interpenetration_loss(const std::vector<TriMesh>& meshes_right,
                                const std::vector<TriMesh>& meshes_left,
                                Scalar alpha,
                                const InterMasks* fixed_masks = nullptr);

// Mean over frames of labeled per-joint errors for one hand.
// Gradient key: grad_key (defaults to "joints_pred").
LossValue joint_loss(const PointSeq& pred, const PointSeq& gt,
                     const std::vector<char>& labeled,
                     const std::string& grad_key = "joints_pred");

// Labeled shape-recovery terms plus squared cross-hand consistency.
// Gradient keys: "beta_right", "beta_left". Betas are T x B.
LossValue mano_loss(const MatX& beta_pred_r, const MatX& beta_pred_l,
                    const MatX& beta_gt_r, const MatX& beta_gt_l,
                    const std::vector<char>& labeled, Scalar lambda_consist);

// Squared-magnitude prior on one hand's parameters over all frames.
// Thetas are T x D, betas T x B. Gradient keys: theta_key, beta_key.
LossValue reg_loss(const MatX& theta, const MatX& beta, Scalar lambda_beta,
                   const std::string& theta_key = "theta",
                   const std::string& beta_key = "beta");

struct LossComponents {
  LossValue smooth;
  LossValue inter;
  LossValue joint;
  LossValue mano;
  LossValue reg;
};

// smooth + lambda_j*joint + lambda_i*inter + lambda_m*mano + lambda_r*reg.
// Gradients with matching keys are summed with the same weights.
LossValue total_loss(const LossComponents& components, const LossWeights& weights);

// Worst relative error between the analytic gradient and central finite
// differences, with an absolute-error fallback below 1e-8 magnitude.
// Throws ContractError on a non-finite evaluation.
Scalar check_gradient(const std::function<Scalar(const VecX&)>& f, const VecX& x,
                      const VecX& analytic_gradient, Scalar step);

}  // namespace handseq

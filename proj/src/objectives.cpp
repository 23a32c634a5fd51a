#include "handseq/objectives.hpp"

#include <cmath>
#include <string>

#include "handseq/errors.hpp"

namespace handseq {

namespace {

void add_scaled(LossValue& total, const LossValue& part, Scalar weight) {
  total.value += weight * part.value;
  for (const auto& [key, frames] : part.gradients) {
    auto it = total.gradients.find(key);
    if (it == total.gradients.end()) {
      auto& dst = total.gradients[key];
      dst.reserve(frames.size());
      for (const MatX& g : frames) dst.push_back(weight * g);
    } else {
      if (it->second.size() != frames.size()) {
        throw ContractError("total_loss: gradient '" + key +
                            "' has mismatched frame counts across components");
      }
      for (size_t t = 0; t < frames.size(); ++t) it->second[t] += weight * frames[t];
    }
  }
}

std::vector<MatX> zeros_like(const PointSeq& seq) {
  std::vector<MatX> out;
  out.reserve(seq.size());
  for (const Points& p : seq) out.push_back(MatX::Zero(p.rows(), 3));
  return out;
}

}  // namespace

Scalar bounded_penalty(Scalar x, Scalar alpha) {
  return alpha * std::tanh(x / alpha);
}

Scalar bounded_penalty_derivative(Scalar x, Scalar alpha) {
  const Scalar c = std::cosh(x / alpha);
  return 1.0 / (c * c);
}

LossValue smooth_loss(const PointSeq& joints_right, const PointSeq& joints_left) {
  const size_t frames = joints_right.size();
  if (frames < 2) throw ContractError("smooth_loss needs at least 2 frames");
  if (joints_left.size() != frames) {
    throw ContractError("smooth_loss: hands have different frame counts");
  }

  LossValue loss;
  const char* keys[2] = {"joints_right", "joints_left"};
  const PointSeq* seqs[2] = {&joints_right, &joints_left};
  for (int h = 0; h < 2; ++h) {
    const PointSeq& seq = *seqs[h];
    auto& grad = loss.gradients[keys[h]] = zeros_like(seq);
    for (size_t t = 1; t < frames; ++t) {
      if (seq[t].rows() != seq[t - 1].rows()) {
        throw ContractError("smooth_loss: joint count changes between frames");
      }
      for (int j = 0; j < seq[t].rows(); ++j) {
        const Vec3 diff = (seq[t].row(j) - seq[t - 1].row(j)).transpose();
        const Scalar dist = diff.norm();
        loss.value += dist;
        if (dist > 0.0) {
          const Vec3 unit = diff / dist;
          grad[t].row(j) += unit.transpose();
          grad[t - 1].row(j) -= unit.transpose();
        }
      }
    }
  }
  return loss;
}

InterMasks compute_inter_masks(const std::vector<TriMesh>& meshes_right,
                               const std::vector<TriMesh>& meshes_left) {
  if (meshes_right.size() != meshes_left.size()) {
    throw ContractError("mask computation: mesh sequences differ in length");
  }
  InterMasks masks;
  masks.right_in_left.reserve(meshes_right.size());
  masks.left_in_right.reserve(meshes_right.size());
  for (size_t t = 0; t < meshes_right.size(); ++t) {
    masks.right_in_left.push_back(inside_mask(meshes_right[t].vertices(), meshes_left[t]));
    masks.left_in_right.push_back(inside_mask(meshes_left[t].vertices(), meshes_right[t]));
  }
  return masks;
}

LossValue interpenetration_loss(const std::vector<TriMesh>& meshes_right,
                                const std::vector<TriMesh>& meshes_left, Scalar alpha,
                                const InterMasks* fixed_masks) {
  if (meshes_right.size() != meshes_left.size()) {
    throw ContractError("interpenetration_loss: mesh sequences differ in length");
  }
  if (!(alpha > 0.0)) throw ContractError("interpenetration_loss: alpha must be positive");

  InterMasks local;
  if (fixed_masks == nullptr) {
    local = compute_inter_masks(meshes_right, meshes_left);
    fixed_masks = &local;
  }

  LossValue loss;
  auto& grad_r = loss.gradients["vertices_right"];
  auto& grad_l = loss.gradients["vertices_left"];
  for (size_t t = 0; t < meshes_right.size(); ++t) {
    grad_r.push_back(MatX::Zero(meshes_right[t].vertices().rows(), 3));
    grad_l.push_back(MatX::Zero(meshes_left[t].vertices().rows(), 3));
  }

  // One pass per hand side; the mask is a constant of the evaluation and the
  // gradient flows through the nearest-vertex distance to both hands.
  for (size_t t = 0; t < meshes_right.size(); ++t) {
    for (int side = 0; side < 2; ++side) {
      const Points& own = side == 0 ? meshes_right[t].vertices() : meshes_left[t].vertices();
      const Points& other =
          side == 0 ? meshes_left[t].vertices() : meshes_right[t].vertices();
      const std::vector<char>& mask = side == 0 ? fixed_masks->right_in_left[t]
                                                : fixed_masks->left_in_right[t];
      MatX& own_grad = side == 0 ? grad_r[t] : grad_l[t];
      MatX& other_grad = side == 0 ? grad_l[t] : grad_r[t];

      std::vector<int> ids;
      for (int v = 0; v < own.rows(); ++v) {
        if (mask[static_cast<size_t>(v)]) ids.push_back(v);
      }
      if (ids.empty()) continue;

      Points pts(static_cast<int>(ids.size()), 3);
      for (size_t k = 0; k < ids.size(); ++k) pts.row(static_cast<int>(k)) = own.row(ids[k]);
      const NearestVertexResult nearest = nearest_vertex_distance(pts, other);

      for (size_t k = 0; k < ids.size(); ++k) {
        const Scalar dist = nearest.distances[k];
        loss.value += bounded_penalty(dist, alpha);
        if (dist > 0.0) {
          const Scalar dpen = bounded_penalty_derivative(dist, alpha);
          const Vec3 unit =
              (own.row(ids[k]) - other.row(nearest.indices[k])).transpose() / dist;
          own_grad.row(ids[k]) += dpen * unit.transpose();
          other_grad.row(nearest.indices[k]) -= dpen * unit.transpose();
        }
      }
    }
  }
  return loss;
}

LossValue joint_loss(const PointSeq& pred, const PointSeq& gt,
                     const std::vector<char>& labeled, const std::string& grad_key) {
  const size_t frames = pred.size();
  if (gt.size() != frames || labeled.size() != frames) {
    throw ContractError("joint_loss: sequence lengths differ");
  }
  if (frames == 0) throw ContractError("joint_loss: empty sequence");

  LossValue loss;
  auto& grad = loss.gradients[grad_key] = zeros_like(pred);
  const Scalar inv_frames = 1.0 / static_cast<Scalar>(frames);
  for (size_t t = 0; t < frames; ++t) {
    if (pred[t].rows() != gt[t].rows()) {
      throw ContractError("joint_loss: joint counts differ at frame " + std::to_string(t));
    }
    if (!labeled[t]) continue;
    for (int j = 0; j < pred[t].rows(); ++j) {
      const Vec3 diff = (pred[t].row(j) - gt[t].row(j)).transpose();
      const Scalar dist = diff.norm();
      loss.value += inv_frames * dist;
      if (dist > 0.0) {
        grad[t].row(j) += (inv_frames / dist) * diff.transpose();
      }
    }
  }
  return loss;
}

LossValue mano_loss(const MatX& beta_pred_r, const MatX& beta_pred_l, const MatX& beta_gt_r,
                    const MatX& beta_gt_l, const std::vector<char>& labeled,
                    Scalar lambda_consist) {
  const Eigen::Index frames = beta_pred_r.rows();
  const Eigen::Index dims = beta_pred_r.cols();
  if (beta_pred_l.rows() != frames || beta_gt_r.rows() != frames ||
      beta_gt_l.rows() != frames || beta_pred_l.cols() != dims ||
      beta_gt_r.cols() != dims || beta_gt_l.cols() != dims ||
      static_cast<Eigen::Index>(labeled.size()) != frames) {
    throw ContractError("mano_loss: shape mismatch");
  }

  LossValue loss;
  auto& grad_r = loss.gradients["beta_right"];
  auto& grad_l = loss.gradients["beta_left"];
  for (Eigen::Index t = 0; t < frames; ++t) {
    MatX gr = MatX::Zero(1, dims);
    MatX gl = MatX::Zero(1, dims);
    if (labeled[static_cast<size_t>(t)]) {
      const VecX dr = (beta_pred_r.row(t) - beta_gt_r.row(t)).transpose();
      const VecX dl = (beta_pred_l.row(t) - beta_gt_l.row(t)).transpose();
      const Scalar nr = dr.norm();
      const Scalar nl = dl.norm();
      loss.value += nr + nl;
      if (nr > 0.0) gr += (dr / nr).transpose();
      if (nl > 0.0) gl += (dl / nl).transpose();
    }
    const VecX dc = (beta_pred_r.row(t) - beta_pred_l.row(t)).transpose();
    loss.value += lambda_consist * dc.squaredNorm();
    gr += 2.0 * lambda_consist * dc.transpose();
    gl -= 2.0 * lambda_consist * dc.transpose();
    grad_r.push_back(gr);
    grad_l.push_back(gl);
  }
  return loss;
}

LossValue reg_loss(const MatX& theta, const MatX& beta, Scalar lambda_beta,
                   const std::string& theta_key, const std::string& beta_key) {
  if (theta.rows() != beta.rows()) {
    throw ContractError("reg_loss: theta and beta frame counts differ");
  }
  if (!theta.allFinite() || !beta.allFinite()) {
    throw ContractError("reg_loss: non-finite parameters");
  }

  LossValue loss;
  loss.value = theta.squaredNorm() + lambda_beta * beta.squaredNorm();
  auto& gt = loss.gradients[theta_key];
  auto& gb = loss.gradients[beta_key];
  for (Eigen::Index t = 0; t < theta.rows(); ++t) {
    gt.push_back(2.0 * theta.row(t));
    gb.push_back(2.0 * lambda_beta * beta.row(t));
  }
  return loss;
}

LossValue total_loss(const LossComponents& components, const LossWeights& weights) {
  LossValue total;
  add_scaled(total, components.smooth, 1.0);
  add_scaled(total, components.joint, weights.lambda_j);
  add_scaled(total, components.inter, weights.lambda_i);
  add_scaled(total, components.mano, weights.lambda_m);
  add_scaled(total, components.reg, weights.lambda_r);
  return total;
}

Scalar check_gradient(const std::function<Scalar(const VecX&)>& f, const VecX& x,
                      const VecX& analytic_gradient, Scalar step) {
  if (analytic_gradient.size() != x.size()) {
    throw ContractError("check_gradient: gradient size mismatch");
  }
  Scalar worst = 0.0;
  VecX probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + step;
    const Scalar fp = f(probe);
    probe[i] = x[i] - step;
    const Scalar fm = f(probe);
    probe[i] = x[i];
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw ContractError("check_gradient: non-finite loss evaluation");
    }
    const Scalar fd = (fp - fm) / (2.0 * step);
    const Scalar a = analytic_gradient[i];
    const Scalar denom = std::max(std::abs(a), std::abs(fd));
    const Scalar err = denom < 1e-8 ? std::abs(a - fd) : std::abs(a - fd) / denom;
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace handseq

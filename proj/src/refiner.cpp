#include "handseq/refiner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "handseq/collision.hpp"
#include "handseq/metrics.hpp"
#include "handseq/parallel.hpp"
#include "handseq/rng.hpp"

namespace handseq {

namespace {

using RowMajor3 = Eigen::Matrix<Scalar, Eigen::Dynamic, 3, Eigen::RowMajor>;

VecX flatten_points(const MatX& m) {
  const RowMajor3 row_major = m;
  return Eigen::Map<const VecX>(row_major.data(), m.size());
}

struct ParamLayout {
  int theta_r = 0;
  int beta_r = 0;
  int theta_l = 0;
  int beta_l = 0;
  int frames = 0;

  int frame_stride() const { return theta_r + beta_r + theta_l + beta_l + 3; }
  int total() const { return frames * frame_stride(); }
  int offset(int t) const { return t * frame_stride(); }
};

VecX pack(const HandParamsSequence& seq, const ParamLayout& lay) {
  VecX x(lay.total());
  for (int t = 0; t < lay.frames; ++t) {
    int o = lay.offset(t);
    const SequenceFrame& f = seq.frames[static_cast<size_t>(t)];
    x.segment(o, lay.theta_r) = f.theta_r;
    o += lay.theta_r;
    x.segment(o, lay.beta_r) = f.beta_r;
    o += lay.beta_r;
    x.segment(o, lay.theta_l) = f.theta_l;
    o += lay.theta_l;
    x.segment(o, lay.beta_l) = f.beta_l;
    o += lay.beta_l;
    x.segment(o, 3) = f.translation_c;
  }
  return x;
}

HandParamsSequence unpack(const VecX& x, const HandParamsSequence& proto,
                          const ParamLayout& lay) {
  HandParamsSequence seq = proto;
  for (int t = 0; t < lay.frames; ++t) {
    int o = lay.offset(t);
    SequenceFrame& f = seq.frames[static_cast<size_t>(t)];
    f.theta_r = x.segment(o, lay.theta_r);
    o += lay.theta_r;
    f.beta_r = x.segment(o, lay.beta_r);
    o += lay.beta_r;
    f.theta_l = x.segment(o, lay.theta_l);
    o += lay.theta_l;
    f.beta_l = x.segment(o, lay.beta_l);
    o += lay.beta_l;
    f.translation_c = x.segment(o, 3);
  }
  return seq;
}

struct FrameGeometry {
  MeshFrame right;
  MeshFrame left;  // composed into the right-hand frame
};

struct Evaluation {
  Scalar total = 0.0;
  Scalar smooth = 0.0;
  Scalar inter = 0.0;
  Scalar reg = 0.0;
  Scalar joint = 0.0;
  Scalar anchor = 0.0;
  Scalar mmpd_mm = 0.0;
  VecX grad;
};

struct Objective {
  const HandModel& model_r;
  const HandModel& model_l;
  const HandParamsSequence& init;
  const RefineConfig& config;
  const ParamLayout& lay;
  const VecX& x0;
  bool has_gt;

  std::vector<FrameGeometry> geometry(const VecX& x) const {
    std::vector<FrameGeometry> frames(static_cast<size_t>(lay.frames));
    parallel_for(lay.frames, config.threads, [&](int t) {
      const int o = lay.offset(t);
      HandParamsFrame fr{x.segment(o, lay.theta_r),
                         x.segment(o + lay.theta_r, lay.beta_r), Vec3::Zero()};
      HandParamsFrame fl{x.segment(o + lay.theta_r + lay.beta_r, lay.theta_l),
                         x.segment(o + lay.theta_r + lay.beta_r + lay.theta_l, lay.beta_l),
                         Vec3::Zero()};
      const Vec3 c = x.segment(o + lay.frame_stride() - 3, 3);
      auto [right, left] =
          compose_two_hands(forward(model_r, fr), forward(model_l, fl), c);
      frames[static_cast<size_t>(t)] = {std::move(right), std::move(left)};
    });
    return frames;
  }

  std::vector<TriMesh> meshes(const std::vector<FrameGeometry>& frames, bool right) const {
    std::vector<TriMesh> out(frames.size(), TriMesh{});
    parallel_for(static_cast<int>(frames.size()), config.threads, [&](int t) {
      const FrameGeometry& g = frames[static_cast<size_t>(t)];
      out[static_cast<size_t>(t)] = right ? build_mesh(g.right.vertices, model_r.faces)
                                          : build_mesh(g.left.vertices, model_l.faces);
    });
    return out;
  }

  Evaluation evaluate(const VecX& x, const InterMasks& masks, bool with_grad,
                      bool with_mmpd) const {
    const std::vector<FrameGeometry> frames = geometry(x);
    const std::vector<TriMesh> mr = meshes(frames, true);
    const std::vector<TriMesh> ml = meshes(frames, false);

    PointSeq joints_r, joints_l;
    for (const FrameGeometry& g : frames) {
      joints_r.push_back(g.right.joints);
      joints_l.push_back(g.left.joints);
    }

    MatX theta_r(lay.frames, lay.theta_r), beta_r(lay.frames, lay.beta_r);
    MatX theta_l(lay.frames, lay.theta_l), beta_l(lay.frames, lay.beta_l);
    for (int t = 0; t < lay.frames; ++t) {
      const int o = lay.offset(t);
      theta_r.row(t) = x.segment(o, lay.theta_r).transpose();
      beta_r.row(t) = x.segment(o + lay.theta_r, lay.beta_r).transpose();
      theta_l.row(t) =
          x.segment(o + lay.theta_r + lay.beta_r, lay.theta_l).transpose();
      beta_l.row(t) =
          x.segment(o + lay.theta_r + lay.beta_r + lay.theta_l, lay.beta_l).transpose();
    }

    const LossValue smooth = smooth_loss(joints_r, joints_l);
    const LossValue inter =
        interpenetration_loss(mr, ml, config.weights.alpha, &masks);
    const LossValue reg_r = reg_loss(theta_r, beta_r, config.weights.lambda_beta);
    const LossValue reg_l = reg_loss(theta_l, beta_l, config.weights.lambda_beta);

    LossValue joint_r, joint_l;
    if (has_gt) {
      PointSeq gt_r, gt_l;
      std::vector<char> labeled;
      for (const SequenceFrame& f : init.frames) {
        gt_r.push_back(*f.gt_joints_r);
        gt_l.push_back(*f.gt_joints_l);
        labeled.push_back(f.labeled ? 1 : 0);
      }
      joint_r = joint_loss(joints_r, gt_r, labeled);
      joint_l = joint_loss(joints_l, gt_l, labeled);
    }

    Evaluation ev;
    ev.smooth = smooth.value;
    ev.inter = inter.value;
    ev.reg = reg_r.value + reg_l.value;
    ev.joint = joint_r.value + joint_l.value;
    ev.anchor = config.anchor_weight * (x - x0).squaredNorm();
    ev.total = ev.smooth + config.weights.lambda_i * ev.inter +
               config.weights.lambda_r * ev.reg + config.weights.lambda_j * ev.joint +
               ev.anchor;

    if (with_mmpd) {
      std::vector<Scalar> depths(static_cast<size_t>(lay.frames), 0.0);
      parallel_for(lay.frames, config.threads, [&](int t) {
        depths[static_cast<size_t>(t)] =
            penetration_report(mr[static_cast<size_t>(t)], ml[static_cast<size_t>(t)])
                .max_depth;
      });
      Scalar sum = 0.0;
      for (const Scalar d : depths) sum += d;
      ev.mmpd_mm = sum / lay.frames * kMetersToMillimeters;
    }

    if (with_grad) {
      ev.grad = VecX::Zero(lay.total());
      ev.grad += 2.0 * config.anchor_weight * (x - x0);
      parallel_for(lay.frames, config.threads, [&](int t) {
        const int o = lay.offset(t);
        const size_t ts = static_cast<size_t>(t);

        MatX g_jr = smooth.gradients.at("joints_right")[ts];
        MatX g_jl = smooth.gradients.at("joints_left")[ts];
        if (has_gt) {
          g_jr += config.weights.lambda_j * joint_r.gradients.at("joints_pred")[ts];
          g_jl += config.weights.lambda_j * joint_l.gradients.at("joints_pred")[ts];
        }
        const MatX g_vr =
            config.weights.lambda_i * inter.gradients.at("vertices_right")[ts];
        const MatX g_vl =
            config.weights.lambda_i * inter.gradients.at("vertices_left")[ts];

        const int or_ = o;
        HandParamsFrame fr{x.segment(o, lay.theta_r),
                           x.segment(o + lay.theta_r, lay.beta_r), Vec3::Zero()};
        HandParamsFrame fl{
            x.segment(o + lay.theta_r + lay.beta_r, lay.theta_l),
            x.segment(o + lay.theta_r + lay.beta_r + lay.theta_l, lay.beta_l),
            Vec3::Zero()};
        const ForwardJacobian jac_r = forward_jacobian(model_r, fr);
        const ForwardJacobian jac_l = forward_jacobian(model_l, fl);

        const VecX vr = flatten_points(g_vr);
        const VecX jr = flatten_points(g_jr);
        const VecX vl = flatten_points(g_vl);
        const VecX jl = flatten_points(g_jl);

        ev.grad.segment(or_, lay.theta_r) +=
            jac_r.dvertices_dtheta.transpose() * vr + jac_r.djoints_dtheta.transpose() * jr;
        ev.grad.segment(or_ + lay.theta_r, lay.beta_r) +=
            jac_r.dvertices_dbeta.transpose() * vr + jac_r.djoints_dbeta.transpose() * jr;
        ev.grad.segment(or_ + lay.theta_r + lay.beta_r, lay.theta_l) +=
            jac_l.dvertices_dtheta.transpose() * vl + jac_l.djoints_dtheta.transpose() * jl;
        ev.grad.segment(or_ + lay.theta_r + lay.beta_r + lay.theta_l, lay.beta_l) +=
            jac_l.dvertices_dbeta.transpose() * vl + jac_l.djoints_dbeta.transpose() * jl;

        // The left hand rides on c: every left point shifts one-to-one.
        Vec3 g_c = g_vl.colwise().sum().transpose() + g_jl.colwise().sum().transpose();
        ev.grad.segment(or_ + lay.frame_stride() - 3, 3) += g_c;

        // Per-frame parameter gradients from the magnitude prior.
        ev.grad.segment(or_, lay.theta_r) +=
            config.weights.lambda_r * reg_r.gradients.at("theta")[ts].transpose();
        ev.grad.segment(or_ + lay.theta_r, lay.beta_r) +=
            config.weights.lambda_r * reg_r.gradients.at("beta")[ts].transpose();
        ev.grad.segment(or_ + lay.theta_r + lay.beta_r, lay.theta_l) +=
            config.weights.lambda_r * reg_l.gradients.at("theta")[ts].transpose();
        ev.grad.segment(or_ + lay.theta_r + lay.beta_r + lay.theta_l, lay.beta_l) +=
            config.weights.lambda_r * reg_l.gradients.at("beta")[ts].transpose();
      });
      if (config.freeze_translation) {
        for (int t = 0; t < lay.frames; ++t) {
          ev.grad.segment(lay.offset(t) + lay.frame_stride() - 3, 3).setZero();
        }
      }
    }
    return ev;
  }

  InterMasks masks_at(const VecX& x) const {
    const std::vector<FrameGeometry> frames = geometry(x);
    return compute_inter_masks(meshes(frames, true), meshes(frames, false));
  }
};

void validate_config(const RefineConfig& config) {
  if (config.max_iters < 1) throw ContractError("refine config: max_iters must be >= 1");
  if (!(config.step_size > 0.0)) throw ContractError("refine config: step_size must be > 0");
  if (!(config.beta1 > 0.0 && config.beta1 < 1.0) ||
      !(config.beta2 > 0.0 && config.beta2 < 1.0)) {
    throw ContractError("refine config: moment decays must lie in (0,1)");
  }
  if (config.mask_refresh_every < 1) {
    throw ContractError("refine config: mask_refresh_every must be >= 1");
  }
  if (config.anchor_weight < 0.0) {
    throw ContractError("refine config: anchor_weight must be non-negative");
  }
}

}  // namespace

Scenario parse_scenario(const std::string& name) {
  if (name == "disjoint") return Scenario::kDisjoint;
  if (name == "colliding") return Scenario::kColliding;
  if (name == "jittery") return Scenario::kJittery;
  throw ContractError("unknown scenario '" + name + "'");
}

std::pair<HandParamsSequence, RefineTrace> refine_sequence(const HandModel& model_r,
                                                           const HandModel& model_l,
                                                           const HandParamsSequence& init,
                                                           const RefineConfig& config) {
  validate_config(config);
  if (init.frames.empty()) throw ContractError("refine: empty sequence");

  ParamLayout lay;
  lay.frames = init.frame_count();
  lay.theta_r = static_cast<int>(init.frames[0].theta_r.size());
  lay.beta_r = static_cast<int>(init.frames[0].beta_r.size());
  lay.theta_l = static_cast<int>(init.frames[0].theta_l.size());
  lay.beta_l = static_cast<int>(init.frames[0].beta_l.size());

  bool has_gt = true;
  for (const SequenceFrame& f : init.frames) {
    if (!f.gt_joints_r.has_value() || !f.gt_joints_l.has_value()) {
      has_gt = false;
      break;
    }
  }

  const VecX x0 = pack(init, lay);
  VecX x = x0;
  Objective objective{model_r, model_l, init, config, lay, x0, has_gt};
  RefineTrace trace;

  const auto diverged = [&trace](Scalar value) {
    if (!std::isfinite(value)) {
      throw RefineDivergedError("refinement objective became non-finite", trace);
    }
  };
  // Geometry that degenerates mid-run (non-finite vertices, collapsed
  // faces) is numerical divergence of the optimization state, not an input
  // error; surface it with the partial trace.
  const auto guarded = [&trace](auto&& fn) {
    try {
      return fn();
    } catch (const ValidationError& e) {
      throw RefineDivergedError(std::string("refinement produced invalid geometry: ") +
                                    e.what(),
                                trace);
    }
  };

  InterMasks masks = guarded([&] { return objective.masks_at(x); });
  Evaluation current = guarded([&] { return objective.evaluate(x, masks, true, true); });
  diverged(current.total);
  trace.initial_total = current.total;
  trace.initial_mmpd_mm = current.mmpd_mm;

  VecX best_x = x;
  Scalar best_total = current.total;

  VecX m = VecX::Zero(lay.total());
  VecX v = VecX::Zero(lay.total());
  Scalar lr = config.step_size;

  // Convergence is judged over a window: the contact mask flips on and off
  // near the surface, so single-step improvements stall and recover while
  // the best objective keeps falling.
  constexpr int kStallWindow = 50;
  int last_improvement_iter = 0;

  for (int iter = 1; iter <= config.max_iters; ++iter) {
    if (iter > 1 && (iter - 1) % config.mask_refresh_every == 0) {
      masks = guarded([&] { return objective.masks_at(x); });
      current = guarded([&] { return objective.evaluate(x, masks, true, true); });
      diverged(current.total);
      if (current.total < best_total - config.tol * std::max(std::abs(best_total),
                                                             Scalar(1e-12))) {
        last_improvement_iter = iter;
      }
      if (current.total < best_total) {
        best_total = current.total;
        best_x = x;
      }
    }

    m = config.beta1 * m + (1.0 - config.beta1) * current.grad;
    v = config.beta2 * v +
        (1.0 - config.beta2) * current.grad.cwiseProduct(current.grad).eval();
    const Scalar bias1 = 1.0 - std::pow(config.beta1, iter);
    const Scalar bias2 = 1.0 - std::pow(config.beta2, iter);
    VecX direction =
        (m / bias1).cwiseQuotient(((v / bias2).cwiseSqrt().array() + 1e-8).matrix());

    const Scalar max_grad = current.grad.cwiseAbs().maxCoeff();
    if (direction.cwiseAbs().maxCoeff() == 0.0) {
      trace.records.push_back({iter, current.total, current.smooth, current.inter,
                               current.reg, current.joint, current.anchor, current.mmpd_mm,
                               max_grad});
      break;  // stationary
    }

    // Backtracking on the frozen-mask objective keeps accepted steps
    // non-increasing; failure leaves x in place and defers to the
    // convergence check, since the next mask refresh may reopen progress.
    Scalar trial = lr;
    bool ok = false;
    for (int cut = 0; cut < 60; ++cut) {
      const VecX x_new = x - trial * direction;
      Evaluation cand =
          guarded([&] { return objective.evaluate(x_new, masks, false, false); });
      diverged(cand.total);
      if (cand.total <= current.total) {
        x = x_new;
        ok = true;
        break;
      }
      trial *= 0.5;
    }
    if (ok) {
      lr = std::min(config.step_size, trial * 1.5);
      current = guarded([&] { return objective.evaluate(x, masks, true, true); });
      diverged(current.total);
    }
    trace.records.push_back({iter, current.total, current.smooth, current.inter,
                             current.reg, current.joint, current.anchor, current.mmpd_mm,
                             max_grad});
    if (current.total < best_total - config.tol * std::max(std::abs(best_total),
                                                           Scalar(1e-12))) {
      last_improvement_iter = iter;
    }
    if (current.total < best_total) {
      best_total = current.total;
      best_x = x;
    }
    if (iter - last_improvement_iter >= kStallWindow) break;
  }

  // Return the best fresh-mask iterate; with the default refresh cadence
  // every accepted iterate competes, so the result never regresses past the
  // initial objective.
  return {unpack(best_x, init, lay), trace};
}

HandParamsSequence synthesize_sequence(const HandModel& model_r, const HandModel& model_l,
                                       Scenario scenario, int frames, std::uint64_t seed,
                                       Scalar noise_scale) {
  if (frames < 3) throw ContractError("synthesize_sequence: need at least 3 frames");

  Rng path_rng(seed ^ 0x73796e7468706174ull);
  Rng noise_rng(seed ^ 0x73796e74686e6f69ull);

  const int theta_r_size = model_r.theta_size();
  const int theta_l_size = model_l.theta_size();
  const int beta_r_size = model_r.shape_count();
  const int beta_l_size = model_l.shape_count();

  VecX beta_r(beta_r_size), beta_l(beta_l_size);
  for (int i = 0; i < beta_r_size; ++i) beta_r[i] = path_rng.uniform(-0.4, 0.4);
  for (int i = 0; i < beta_l_size; ++i) beta_l[i] = path_rng.uniform(-0.4, 0.4);

  VecX phase_r(theta_r_size), phase_l(theta_l_size);
  for (int i = 0; i < theta_r_size; ++i) phase_r[i] = path_rng.uniform(0.0, 6.283185307);
  for (int i = 0; i < theta_l_size; ++i) phase_l[i] = path_rng.uniform(0.0, 6.283185307);

  HandParamsSequence seq;
  seq.fps = 30.0;
  const Scalar amplitude = 0.25;
  for (int t = 0; t < frames; ++t) {
    const Scalar u = static_cast<Scalar>(t) / (frames - 1);
    SequenceFrame f;
    f.theta_r = VecX::Zero(theta_r_size);
    f.theta_l = VecX::Zero(theta_l_size);
    // Gentle finger articulation; the global rotation stays small so the
    // two palms keep facing each other.
    for (int i = 3; i < theta_r_size; ++i) {
      f.theta_r[i] = amplitude * (i % 3 == 0 ? 1.0 : 0.2) *
                     std::sin(6.283185307 * u + phase_r[i]);
    }
    for (int i = 3; i < theta_l_size; ++i) {
      f.theta_l[i] = amplitude * (i % 3 == 0 ? 1.0 : 0.2) *
                     std::sin(6.283185307 * u + phase_l[i]);
    }
    f.beta_r = beta_r;
    f.beta_l = beta_l;

    if (scenario == Scenario::kColliding) {
      // Raised-cosine approach peaking at ~1 cm of overlap mid-sequence.
      // The y/z offsets stagger the palms so the overlap is volumetric
      // rather than surface-on-surface.
      const Scalar bump = 0.5 * (1.0 - std::cos(6.283185307 * u));
      f.translation_c =
          Vec3(-0.035 + 0.047 * bump, -0.005 * bump, -0.007 * bump);
    } else {
      f.translation_c = Vec3(-0.025 - 0.012 * std::sin(3.14159265358979 * u),
                             0.004 * std::sin(6.283185307 * u), 0.0);
    }

    if (scenario == Scenario::kJittery) {
      for (int i = 0; i < theta_r_size; ++i) {
        f.theta_r[i] += noise_scale * noise_rng.normal();
      }
      for (int i = 0; i < theta_l_size; ++i) {
        f.theta_l[i] += noise_scale * noise_rng.normal();
      }
    }

    f.labeled = true;
    seq.frames.push_back(std::move(f));
  }
  return seq;
}

Scalar sequence_mmpd_mm(const HandModel& model_r, const HandModel& model_l,
                        const HandParamsSequence& seq, int threads) {
  if (seq.frames.empty()) throw ContractError("sequence_mmpd: empty sequence");
  std::vector<Scalar> depths(seq.frames.size(), 0.0);
  parallel_for(seq.frame_count(), threads, [&](int t) {
    const SequenceFrame& f = seq.frames[static_cast<size_t>(t)];
    const MeshFrame right = forward(model_r, {f.theta_r, f.beta_r, Vec3::Zero()});
    const MeshFrame left = forward(model_l, {f.theta_l, f.beta_l, Vec3::Zero()});
    auto [r, l] = compose_two_hands(right, left, f.translation_c);
    const TriMesh mesh_r = build_mesh(r.vertices, model_r.faces);
    const TriMesh mesh_l = build_mesh(l.vertices, model_l.faces);
    depths[static_cast<size_t>(t)] = penetration_report(mesh_r, mesh_l).max_depth;
  });
  Scalar sum = 0.0;
  for (const Scalar d : depths) sum += d;
  return sum / static_cast<Scalar>(seq.frames.size()) * kMetersToMillimeters;
}

}  // namespace handseq

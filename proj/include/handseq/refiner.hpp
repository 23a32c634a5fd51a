#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "handseq/errors.hpp"
#include "handseq/hand_model.hpp"
#include "handseq/objectives.hpp"
#include "handseq/sequence.hpp"

namespace handseq {

struct RefineConfig {
  LossWeights weights;
  Scalar anchor_weight = 1.0;  // quadratic pull toward the initial estimate
  int max_iters = 500;
  Scalar step_size = 0.01;
  Scalar beta1 = 0.9;   // first-moment decay
  Scalar beta2 = 0.999;  // second-moment decay
  Scalar tol = 1e-8;    // relative objective improvement
  int mask_refresh_every = 1;
  bool freeze_translation = false;
  int threads = 1;
};

struct RefineRecord {
  int iteration = 0;
  Scalar total = 0.0;
  Scalar smooth = 0.0;
  Scalar inter = 0.0;
  Scalar reg = 0.0;
  Scalar joint = 0.0;
  Scalar anchor = 0.0;
  Scalar mmpd_mm = 0.0;
  Scalar max_gradient = 0.0;
};

struct RefineTrace {
  Scalar initial_total = 0.0;    // objective at the input sequence
  Scalar initial_mmpd_mm = 0.0;  // penetration of the input sequence
  std::vector<RefineRecord> records;
};

// Thrown when the objective turns non-finite; keeps the partial trace.
class RefineDivergedError : public DivergenceError {
 public:
  RefineDivergedError(const std::string& what, RefineTrace trace)
      : DivergenceError(what), trace(std::move(trace)) {}
  RefineTrace trace;
};

enum class Scenario { kDisjoint, kColliding, kJittery };

Scenario parse_scenario(const std::string& name);  // throws ContractError

// First-order refinement of (theta, beta, c) sequences with per-coordinate
// moment scaling and backtracking; the accepted objective never increases.
std::pair<HandParamsSequence, RefineTrace> refine_sequence(const HandModel& model_r,
                                                           const HandModel& model_l,
                                                           const HandParamsSequence& init,
                                                           const RefineConfig& config);

// Deterministic two-hand test sequences: smooth disjoint motion, motion
// driven into overlap mid-sequence, or disjoint motion plus per-frame noise.
HandParamsSequence synthesize_sequence(const HandModel& model_r, const HandModel& model_l,
                                       Scenario scenario, int frames, std::uint64_t seed,
                                       Scalar noise_scale = 0.02);

// Mean maximum penetration depth of a parameter sequence, in mm.
Scalar sequence_mmpd_mm(const HandModel& model_r, const HandModel& model_l,
                        const HandParamsSequence& seq, int threads = 1);

}  // namespace handseq

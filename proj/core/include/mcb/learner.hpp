#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "mcb/lowrank.hpp"
#include "mcb/schedule.hpp"

namespace mcb {

/// One observed round: request cell, the policy's action distribution, the
/// action taken, the reward obtained, and which schedule phase produced it.
struct StepRecord {
  std::int64_t t = 0;
  int j1 = 0;
  int j2 = 0;
  PropensityVector propensities;
  int action = 0;
  double reward = 0.0;
  int phase = 1;  // 1 or 2
};

/// One offline observation, used for initialization.
struct Observation {
  int j1 = 0;
  int j2 = 0;
  int arm = 0;
  double reward = 0.0;
};

struct LearnerDiagnostics {
  double max_incoherence = 0.0;
  std::int64_t rebalance_degeneracies = 0;
  std::vector<int> zero_init_arms;  // arms whose initialization was all-zero
};

/// Online estimator state: one balanced FactorPair per arm plus the step
/// counter. Confined to a single logical thread; independent trials own
/// independent states.
struct LearnerState {
  std::vector<FactorPair> arms;
  std::int64_t t = 0;
  BanditConfig config;
  LearnerDiagnostics diagnostics;
};

/// Balanced rank-r factorization of each initial estimate; t = 0. All-zero
/// initializations are accepted but recorded in diagnostics (the gradient on
/// zero factors is identically zero, so such an arm never learns).
LearnerState init_from_matrices(const std::vector<Matrix>& init_estimates,
                                int r, const BanditConfig& config);

struct SoftImputeOptions {
  std::vector<double> lambda_seq;  // empty = automatic geometric sequence
  int max_iters = 100;
  double tol = 1e-5;
};

/// Per-arm Soft-Impute completion of the partially observed mean-reward matrix
/// (duplicates per cell averaged). Iterates SVD soft-thresholding along a
/// decreasing shrinkage path with warm starts.
std::vector<Matrix> soft_impute_init(const std::vector<Observation>& observations,
                                     int d1, int d2, int k_arms,
                                     const SoftImputeOptions& opts = {});

/// Gradient scale s = eta_t * w * g applied to the acting arm's touched rows,
/// where w = 1 / (pi * p_X * d1 * d2) and g is the residual at the cell under
/// the pre-update estimate. Shared with the debias accumulator so both sides
/// see bit-identical updates.
double sgd_scale(const LearnerState& state_before, const StepRecord& rec);

/// One online gradient step: updates row j1 of u and row j2 of v for the acting
/// arm, then rebalances that arm. Non-acting arms are untouched. Cost
/// O((d1+d2) r^2 + r^3); no d1 x d2 matrix is formed.
void sgd_step(LearnerState& state, const StepRecord& rec);

/// Reward source: (j1, j2, arm) -> reward. Simulation environments and replay
/// streams both fit this shape.
using RewardFn = std::function<double(int j1, int j2, int arm)>;

/// Samples a request, forms propensities at epsilon_t, draws the action, and
/// pulls the reward from the source. Does not mutate the state, so the caller
/// can fold the record into a debias accumulator before stepping.
StepRecord propose_round(const LearnerState& state, Rng& rng,
                         const RewardFn& reward_fn);

/// propose_round followed by sgd_step.
StepRecord run_round(LearnerState& state, Rng& rng, const RewardFn& reward_fn);

struct ArmError {
  double frobenius_sq = 0.0;
  double max_sq = 0.0;
};

/// Exact per-arm error norms of (estimate - truth).
std::vector<ArmError> estimation_errors(const LearnerState& state,
                                        const std::vector<Matrix>& truth);

}  // namespace mcb

#pragma once

#include <cstdint>
#include <vector>

#include "mcb/learner.hpp"
#include "mcb/lowrank.hpp"
#include "mcb/schedule.hpp"

namespace mcb {

/// Sparse linear form Q: a list of (cell, coefficient) pairs.
struct LinearForm {
  struct Entry {
    int j1 = 0;
    int j2 = 0;
    double coeff = 0.0;
  };
  std::vector<Entry> entries;

  double l1_norm() const;
  double evaluate(const Matrix& m) const;
  Matrix dense(int d1, int d2) const;
  void validate(int d1, int d2) const;
};

/// Streaming accumulators for the phase-2 IPW-debiased estimator of each arm.
///
/// The running mean of pre-update estimates is kept in O((d1+d2) r) per step:
/// consecutive estimates differ by a one-row-plus-one-column patch (the product
/// is unchanged by rebalancing), so the prefix sum
///   sum_{t=T0+1..T} M_{t-1} = n * M_{T0} + T * sum(D_t) - sum(t * D_t)
/// needs one snapshot plus two patch-accumulated matrices.
struct DebiasState {
  int d1 = 0;
  int d2 = 0;
  int k_arms = 0;
  std::int64_t t0 = 0;       // phase-1 length; only steps with t > t0 contribute
  std::int64_t t_final = 0;  // last accumulated step
  std::int64_t n_phase2 = 0;

  std::vector<Matrix> snapshot;            // per arm: estimate at t0
  std::vector<Matrix> delta_sum;           // per arm: sum of product patches
  std::vector<Matrix> weighted_delta_sum;  // per arm: sum of t * patch
  std::vector<Matrix> ipw_sum;             // per arm: IPW residual corrections
  std::vector<double> sigma_sq_sum;        // per arm: weighted squared residuals
};

/// Empty accumulator for the given shape; t0 is the phase-1 length.
DebiasState make_debias_state(const BanditConfig& config);

/// Folds one phase-2 step into the accumulators. state_before must be the
/// learner state at rec.t - 1 (pre-update). Throws if rec.t <= t0 or steps
/// arrive out of order.
void debias_accumulate(DebiasState& db, const LearnerState& state_before,
                       const StepRecord& rec);

/// Per-arm debiased estimates: running mean of phase-2 pre-update estimates
/// plus the IPW residual correction.
std::vector<Matrix> finalize_ipw(const DebiasState& db);

/// Per-arm noise variance estimate.
double estimate_sigma_sq(const DebiasState& db, int arm);

/// Cellwise argmax partition over arms; ties go to the lowest index.
using OmegaPartition = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;
OmegaPartition omega_hat(const std::vector<FactorPair>& final_estimates);

/// Rank-r spectral projections of the raw IPW estimates, plus their SVDs.
struct DebiasedArms {
  std::vector<Matrix> ipw_raw;
  std::vector<Matrix> projected;
  std::vector<ThinSvd> svds;
};
DebiasedArms finalize_debias(const DebiasState& db, int r);

/// Per-arm variance geometry estimate:
///   S_a^2 = (T^-gamma |P_om(a) P_a(Q)|^2 + C_gamma sum_{k != a} |P_om(k) P_a(Q)|^2) b_T
/// with C_gamma = K / (c2 (1 + gamma)), b_T = T / (T - T0). Cell masses are
/// weighted by 1 / (p_X d1 d2), which is 1 under uniform sampling.
std::vector<double> estimate_S_sq(const LinearForm& q, const DebiasedArms& arms,
                                  const OmegaPartition& omega,
                                  const BanditConfig& config, std::int64_t T,
                                  std::int64_t T0);

struct InferenceTarget {
  enum class Kind { kSingleArm, kDifference };
  Kind kind = Kind::kSingleArm;
  int arm = 0;       // single-arm target
  int arm_g = 0;     // difference target: <M_g - M_h, Q>
  int arm_h = 1;

  static InferenceTarget single(int a);
  static InferenceTarget difference(int g, int h);
};

struct InferenceReport {
  double estimate = 0.0;
  double std_error = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double z_stat = 0.0;             // NaN when degenerate
  double p_value_two_sided = 0.0;  // NaN when degenerate
  double p_value_one_sided = 0.0;  // H1: form > 0; NaN when degenerate
  double alpha = 0.05;
  bool degenerate_se = false;  // SE == 0: ill-posed form or zero variance

  // Per-arm components entering the variance.
  std::vector<double> sigma_sq;
  std::vector<double> s_sq;
  std::vector<std::int64_t> omega_sizes;
  double b_T = 0.0;
  std::int64_t n_phase2 = 0;
};

/// Assembles a report from precomputed pieces (one finalize shared by many
/// forms). sigma_sq_all must hold one entry per arm.
InferenceReport report_from_components(const DebiasedArms& arms,
                                       const OmegaPartition& omega,
                                       const std::vector<double>& sigma_sq_all,
                                       const LinearForm& q,
                                       const BanditConfig& config,
                                       std::int64_t T, std::int64_t T0,
                                       const InferenceTarget& target,
                                       double alpha = 0.05);

/// Full pipeline: finalize the debias state, project, partition cells by the
/// learner's final estimates, and studentize the requested linear form.
InferenceReport infer_linear_form(const DebiasState& db,
                                  const std::vector<FactorPair>& final_estimates,
                                  const LinearForm& q,
                                  const BanditConfig& config,
                                  const InferenceTarget& target,
                                  double alpha = 0.05);

}  // namespace mcb

#pragma once

#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

#include "mcb/lowrank.hpp"
#include "mcb/rng.hpp"

namespace mcb {

/// Known per-cell request probabilities for non-uniform sampling. Validated and
/// cumulative-indexed once at construction; shared read-only afterwards.
class SamplingWeights {
 public:
  /// weights must be positive and sum to 1 within 1e-9.
  explicit SamplingWeights(Matrix weights);

  double cell_probability(int j1, int j2) const { return weights_(j1, j2); }
  const Matrix& table() const { return weights_; }
  std::pair<int, int> sample(Rng& rng) const;

 private:
  Matrix weights_;
  std::vector<double> cumulative_;  // flattened row-major
};

/// All schedule constants of the two-phase exploration design. Phase 1
/// (t <= phase1_len_T0) runs constant exploration epsilon_phase1 and step size
/// eta_phase1; phase 2 decays epsilon_t = min(epsilon_phase1, c2 t^-gamma) and
/// eta_t = epsilon_t * eta_phase1.
struct BanditConfig {
  int d1 = 0;
  int d2 = 0;
  int r = 0;
  int k_arms = 2;
  std::int64_t horizon_T = 0;
  std::int64_t phase1_len_T0 = 0;
  double gamma = 0.0;
  double epsilon_phase1 = 0.0;
  double c2 = 0.0;
  double eta_phase1 = 0.0;  // 0 freezes the learner (useful for debias-only runs)
  std::uint64_t seed = 0;
  std::shared_ptr<const SamplingWeights> sampling_weights;  // null = uniform

  std::int64_t cells() const {
    return static_cast<std::int64_t>(d1) * static_cast<std::int64_t>(d2);
  }
  double cell_probability(int j1, int j2) const {
    return sampling_weights ? sampling_weights->cell_probability(j1, j2)
                            : 1.0 / static_cast<double>(cells());
  }

  /// Throws ConfigError on any violated invariant.
  void validate() const;
};

/// Exploration probability at step t (1-based).
double epsilon_at(const BanditConfig& config, std::int64_t t);

/// Step size at step t: eta_phase1 in phase 1, epsilon_t * eta_phase1 after.
double eta_at(const BanditConfig& config, std::int64_t t);

/// Action distribution of the epsilon-greedy policy at one request:
/// greedy arm gets 1 - eps + eps/K, every other arm eps/K.
struct PropensityVector {
  std::vector<double> probs;
  int greedy_arm = 0;
};

/// Greedy arm is argmax_a of the predicted reward at (j1, j2); exact ties go to
/// the lowest arm index.
PropensityVector propensities(const std::vector<FactorPair>& estimates, int j1,
                              int j2, double eps);

int sample_action(const PropensityVector& pv, Rng& rng);

/// Draws a request cell: uniform over the grid, or per sampling_weights.
std::pair<int, int> sample_request(const BanditConfig& config, Rng& rng);

}  // namespace mcb

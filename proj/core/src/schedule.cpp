#include "mcb/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mcb/errors.hpp"

namespace mcb {

SamplingWeights::SamplingWeights(Matrix weights) : weights_(std::move(weights)) {
  if (weights_.size() == 0) throw ConfigError("sampling_weights: empty table");
  double sum = 0.0;
  cumulative_.reserve(static_cast<std::size_t>(weights_.size()));
  for (int i = 0; i < weights_.rows(); ++i) {
    for (int j = 0; j < weights_.cols(); ++j) {
      const double p = weights_(i, j);
      if (!(p > 0.0))
        throw ConfigError("sampling_weights: nonpositive probability at (" +
                          std::to_string(i) + "," + std::to_string(j) + ")");
      sum += p;
      cumulative_.push_back(sum);
    }
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw ConfigError("sampling_weights: probabilities sum to " +
                      std::to_string(sum) + ", expected 1");
  cumulative_.back() = 1.0;
}

std::pair<int, int> SamplingWeights::sample(Rng& rng) const {
  const double u = rng.uniform01();
  const auto it =
      std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  const auto flat = static_cast<std::int64_t>(
      std::min<std::ptrdiff_t>(it - cumulative_.begin(),
                               static_cast<std::ptrdiff_t>(cumulative_.size()) - 1));
  const int cols = static_cast<int>(weights_.cols());
  return {static_cast<int>(flat / cols), static_cast<int>(flat % cols)};
}

void BanditConfig::validate() const {
  if (d1 < 1 || d2 < 1) throw ConfigError("config: dims must be positive");
  if (r < 1 || r > std::min(d1, d2))
    throw ConfigError("config: rank must be in [1, min(d1,d2)]");
  if (k_arms < 2) throw ConfigError("config: k_arms must be >= 2");
  if (horizon_T < 1) throw ConfigError("config: horizon_T must be positive");
  if (phase1_len_T0 < 1 || phase1_len_T0 >= horizon_T)
    throw ConfigError("config: phase1_len_T0 must be in [1, horizon_T)");
  if (gamma < 0.0 || gamma >= 1.0)
    throw ConfigError("config: gamma must be in [0, 1)");
  if (!(epsilon_phase1 > 0.0) || epsilon_phase1 >= 1.0)
    throw ConfigError("config: epsilon_phase1 must be in (0, 1)");
  if (!(c2 > 0.0)) throw ConfigError("config: c2 must be positive");
  if (eta_phase1 < 0.0) throw ConfigError("config: eta_phase1 must be >= 0");
  if (sampling_weights) {
    const auto& t = sampling_weights->table();
    if (t.rows() != d1 || t.cols() != d2)
      throw ConfigError("config: sampling_weights dims mismatch");
  }
}

double epsilon_at(const BanditConfig& config, std::int64_t t) {
  if (t < 1 || t > config.horizon_T)
    throw ConfigError("epsilon_at: t out of range [1, T]");
  if (t <= config.phase1_len_T0) return config.epsilon_phase1;
  const double decayed =
      config.c2 * std::pow(static_cast<double>(t), -config.gamma);
  // Clamped at the phase-1 level so epsilon_t never jumps up at the boundary.
  return std::min(config.epsilon_phase1, decayed);
}

double eta_at(const BanditConfig& config, std::int64_t t) {
  if (t <= config.phase1_len_T0) {
    if (t < 1) throw ConfigError("eta_at: t out of range [1, T]");
    return config.eta_phase1;
  }
  return epsilon_at(config, t) * config.eta_phase1;
}

PropensityVector propensities(const std::vector<FactorPair>& estimates, int j1,
                              int j2, double eps) {
  if (estimates.empty()) throw ConfigError("propensities: no arms");
  if (!(eps > 0.0) || eps > 1.0)
    throw ConfigError("propensities: eps must be in (0, 1]");
  const int k = static_cast<int>(estimates.size());

  int greedy = 0;
  double best = estimates[0].predict(j1, j2);
  for (int a = 1; a < k; ++a) {
    const double pred = estimates[a].predict(j1, j2);
    if (pred > best) {  // ties stay with the lowest index
      best = pred;
      greedy = a;
    }
  }

  PropensityVector pv;
  pv.greedy_arm = greedy;
  pv.probs.assign(static_cast<std::size_t>(k), eps / k);
  pv.probs[static_cast<std::size_t>(greedy)] = 1.0 - eps + eps / k;
  return pv;
}

int sample_action(const PropensityVector& pv, Rng& rng) {
  return rng.categorical(pv.probs);
}

std::pair<int, int> sample_request(const BanditConfig& config, Rng& rng) {
  if (config.sampling_weights) return config.sampling_weights->sample(rng);
  const auto flat = static_cast<std::int64_t>(
      rng.uniform_index(static_cast<std::uint64_t>(config.cells())));
  return {static_cast<int>(flat / config.d2),
          static_cast<int>(flat % config.d2)};
}

}  // namespace mcb

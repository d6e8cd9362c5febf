#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mcb/inference.hpp"
#include "mcb/learner.hpp"
#include "mcb/lowrank.hpp"
#include "mcb/rng.hpp"
#include "mcb/schedule.hpp"

namespace mcb {

enum class NoiseFamily { kGaussian, kUniform };

/// Exactly rank-r arm reward matrices plus noise levels and spectra.
struct GroundTruth {
  std::vector<Matrix> matrices;
  std::vector<double> sigmas;
  std::vector<ThinSvd> svds;
  double lambda_min = 0.0;
  double lambda_max = 0.0;
  NoiseFamily noise = NoiseFamily::kGaussian;
};

/// Base arm is a rank-r truncation of a uniform(-100, 100) generator matrix;
/// every other arm adds an independent uniform(-scale, scale) perturbation to
/// the generator before re-truncating. The unperturbed arm is the last one, so
/// for two arms the pair is (perturbed, base). sigmas defaults to all ones.
GroundTruth generate_truth(int d1, int d2, int r, int k_arms,
                           double perturbation_scale, Rng& rng,
                           std::vector<double> sigmas = {},
                           NoiseFamily noise = NoiseFamily::kGaussian);

/// Noisy reward draw for one request/arm: truth entry plus centered noise with
/// the arm's standard deviation.
double reward(const GroundTruth& truth, int j1, int j2, int arm, Rng& rng);

/// Exact regret accounting against the ground truth.
struct RegretLedger {
  std::vector<double> instantaneous;
  double cumulative = 0.0;
  // Pulls of each arm, split by whether the pulled arm was cellwise optimal.
  std::vector<std::int64_t> pulls_optimal;
  std::vector<std::int64_t> pulls_suboptimal;

  void record(const GroundTruth& truth, int j1, int j2, int action);
};

enum class InitMode { kSoftImpute, kTruthPlusNoise, kGiven };

struct ExperimentConfig {
  BanditConfig bandit;

  /// When bandit.eta_phase1 == 0, the phase-1 step size is derived as
  /// c1 * d1 * d2 * log(d1) / (T^(1-gamma) * lambda_max) from the truth spectrum.
  double c1 = 0.025;

  InitMode init_mode = InitMode::kSoftImpute;
  std::int64_t n_forced = 0;  // 0 = default 10 r (d1+d2) log(d1), split over arms
  SoftImputeOptions soft_impute;
  double init_noise_sd = 1.0;            // kTruthPlusNoise
  std::vector<Matrix> init_given;        // kGiven

  bool debias = true;
};

struct ExperimentResult {
  LearnerState state;
  std::optional<DebiasState> debias;
  RegretLedger ledger;
  std::int64_t forced_samples = 0;
  std::vector<std::int64_t> pulls;  // per arm, online phase only
};

/// One full seeded episode: forced-sampling warmup and initialization, then the
/// two-phase online loop with regret accounting (and debias accumulation past
/// T0 when enabled).
ExperimentResult run_experiment(const GroundTruth& truth,
                                const ExperimentConfig& config, Rng& rng);

/// Resolved copy of the bandit config with eta derived from the truth spectrum
/// when unset (see ExperimentConfig::c1).
BanditConfig resolve_bandit_config(const GroundTruth& truth,
                                   const ExperimentConfig& config);

/// Fraction of cells in the ground-truth ambiguous set: no arm beats all
/// others by more than gap_delta. Reported as a study health indicator only.
double ambiguous_cell_fraction(const GroundTruth& truth, double gap_delta);

/// The gap scale used for the ambiguity diagnostic:
/// delta^2 = (sum_a sigma_a^2) r d1 log^4(d1) / T^(1-gamma).
double diagnostic_gap_delta(const GroundTruth& truth, const BanditConfig& config);

struct RegretScalingRow {
  std::int64_t horizon = 0;
  std::int64_t t0 = 0;
  double mean_cumulative_regret = 0.0;
  double sd_cumulative_regret = 0.0;
  int trials = 0;
};

struct RegretScalingResult {
  std::vector<RegretScalingRow> rows;
  double exponent = 0.0;  // regret regressed on T^exponent (= 1 - gamma)
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

/// Mean cumulative regret across trials for each horizon in t_grid, with T0 and
/// eta rescaled per horizon (T0 = C0 T^(1-gamma), C0 inferred from the base
/// config), and a linear fit of mean regret against T^(1-gamma).
RegretScalingResult regret_scaling_study(const GroundTruth& truth,
                                         const ExperimentConfig& config_base,
                                         const std::vector<std::int64_t>& t_grid,
                                         int trials, int workers,
                                         std::uint64_t seed);

struct StudyForm {
  std::string label;
  LinearForm q;
  InferenceTarget target;
};

struct NormalityFormResult {
  std::string label;
  std::vector<double> statistics;  // studentized, one per trial
  std::vector<double> estimates;
  std::vector<double> std_errors;
  std::vector<bool> covered;
  double truth_value = 0.0;
  double ks_distance = 0.0;
  double coverage = 0.0;
  int degenerate_trials = 0;
};

struct NormalityStudyResult {
  std::vector<NormalityFormResult> forms;
  std::vector<std::vector<double>> sigma_sq_trials;  // per trial, per arm
  double ambiguous_fraction = 0.0;                    // ground-truth diagnostic
};

/// Runs independent seeded episodes and studentizes each requested linear form
/// per trial; reports raw statistics, KS distance to standard normal, and
/// empirical CI coverage at level 1 - alpha.
NormalityStudyResult normality_study(const GroundTruth& truth,
                                     const ExperimentConfig& config,
                                     const std::vector<StudyForm>& forms,
                                     int trials, int workers,
                                     std::uint64_t seed, double alpha = 0.05);

/// Deterministic parallel map over trial indices; results ordered by index.
void parallel_trials(int trials, int workers,
                     const std::function<void(int)>& body);

}  // namespace mcb

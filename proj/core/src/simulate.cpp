#include "mcb/simulate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <thread>

#include "mcb/errors.hpp"
#include "mcb/stats.hpp"

namespace mcb {

GroundTruth generate_truth(int d1, int d2, int r, int k_arms,
                           double perturbation_scale, Rng& rng,
                           std::vector<double> sigmas, NoiseFamily noise) {
  if (d1 < 1 || d2 < 1 || r < 1 || r > std::min(d1, d2))
    throw ConfigError("generate_truth: bad dimensions");
  if (k_arms < 1) throw ConfigError("generate_truth: k_arms must be >= 1");
  if (sigmas.empty()) sigmas.assign(static_cast<std::size_t>(k_arms), 1.0);
  if (static_cast<int>(sigmas.size()) != k_arms)
    throw ConfigError("generate_truth: sigmas size mismatch");

  Matrix generator(d1, d2);
  for (int i = 0; i < d1; ++i)
    for (int j = 0; j < d2; ++j) generator(i, j) = rng.uniform(-100.0, 100.0);

  GroundTruth truth;
  truth.sigmas = std::move(sigmas);
  truth.noise = noise;
  truth.matrices.resize(static_cast<std::size_t>(k_arms));
  truth.svds.resize(static_cast<std::size_t>(k_arms));

  // The last arm is the unperturbed base; each other arm perturbs the
  // generator independently before re-truncating.
  for (int a = 0; a < k_arms; ++a) {
    Matrix g = generator;
    if (a != k_arms - 1 && perturbation_scale != 0.0) {
      for (int i = 0; i < d1; ++i)
        for (int j = 0; j < d2; ++j)
          g(i, j) += rng.uniform(-perturbation_scale, perturbation_scale);
    }
    ThinSvd svd = thin_svd(g, r);
    truth.matrices[static_cast<std::size_t>(a)] = svd.reconstruct();
    truth.svds[static_cast<std::size_t>(a)] = std::move(svd);
  }

  truth.lambda_max = 0.0;
  truth.lambda_min = std::numeric_limits<double>::infinity();
  for (const auto& svd : truth.svds) {
    truth.lambda_max = std::max(truth.lambda_max, svd.singular_values[0]);
    truth.lambda_min =
        std::min(truth.lambda_min, svd.singular_values[svd.rank() - 1]);
  }
  return truth;
}

double reward(const GroundTruth& truth, int j1, int j2, int arm, Rng& rng) {
  const double mean = truth.matrices[static_cast<std::size_t>(arm)](j1, j2);
  const double sigma = truth.sigmas[static_cast<std::size_t>(arm)];
  if (sigma == 0.0) return mean;
  if (truth.noise == NoiseFamily::kGaussian) return rng.normal(mean, sigma);
  const double half = sigma * std::sqrt(3.0);  // uniform with matching SD
  return mean + rng.uniform(-half, half);
}

void RegretLedger::record(const GroundTruth& truth, int j1, int j2,
                          int action) {
  const auto k = truth.matrices.size();
  if (pulls_optimal.empty()) {
    pulls_optimal.assign(k, 0);
    pulls_suboptimal.assign(k, 0);
  }
  double best = truth.matrices[0](j1, j2);
  for (std::size_t a = 1; a < k; ++a)
    best = std::max(best, truth.matrices[a](j1, j2));
  const double chosen = truth.matrices[static_cast<std::size_t>(action)](j1, j2);
  const double gap = best - chosen;
  instantaneous.push_back(gap);
  cumulative += gap;
  if (gap == 0.0)
    ++pulls_optimal[static_cast<std::size_t>(action)];
  else
    ++pulls_suboptimal[static_cast<std::size_t>(action)];
}

BanditConfig resolve_bandit_config(const GroundTruth& truth,
                                   const ExperimentConfig& config) {
  BanditConfig bandit = config.bandit;
  if (bandit.eta_phase1 == 0.0) {
    bandit.eta_phase1 =
        config.c1 * static_cast<double>(bandit.cells()) *
        std::log(static_cast<double>(bandit.d1)) /
        (std::pow(static_cast<double>(bandit.horizon_T), 1.0 - bandit.gamma) *
         truth.lambda_max);
  }
  bandit.validate();
  return bandit;
}

namespace {

std::int64_t default_forced_samples(const BanditConfig& bandit) {
  const double n = 10.0 * bandit.r *
                   static_cast<double>(bandit.d1 + bandit.d2) *
                   std::log(static_cast<double>(bandit.d1));
  return static_cast<std::int64_t>(std::llround(n));
}

}  // namespace

ExperimentResult run_experiment(const GroundTruth& truth,
                                const ExperimentConfig& config, Rng& rng) {
  const BanditConfig bandit = resolve_bandit_config(truth, config);
  if (static_cast<int>(truth.matrices.size()) != bandit.k_arms)
    throw ConfigError("run_experiment: truth arm count mismatch");
  if (truth.matrices[0].rows() != bandit.d1 ||
      truth.matrices[0].cols() != bandit.d2)
    throw ConfigError("run_experiment: truth dims mismatch");

  ExperimentResult result;

  // Initialization: forced sampling + Soft-Impute, truth + noise, or given.
  std::vector<Matrix> inits;
  if (config.init_mode == InitMode::kSoftImpute) {
    std::int64_t n_forced =
        config.n_forced > 0 ? config.n_forced : default_forced_samples(bandit);
    std::vector<Observation> observations;
    observations.reserve(static_cast<std::size_t>(n_forced));
    for (std::int64_t i = 0; i < n_forced; ++i) {
      const auto [j1, j2] = sample_request(bandit, rng);
      const int arm = static_cast<int>(i % bandit.k_arms);
      observations.push_back(
          {j1, j2, arm, reward(truth, j1, j2, arm, rng)});
    }
    result.forced_samples = n_forced;
    inits = soft_impute_init(observations, bandit.d1, bandit.d2, bandit.k_arms,
                             config.soft_impute);
  } else if (config.init_mode == InitMode::kTruthPlusNoise) {
    for (const auto& m : truth.matrices) {
      Matrix init = m;
      for (int i = 0; i < init.rows(); ++i)
        for (int j = 0; j < init.cols(); ++j)
          init(i, j) += rng.normal(0.0, config.init_noise_sd);
      inits.push_back(std::move(init));
    }
  } else {
    inits = config.init_given;
  }

  LearnerState state = init_from_matrices(inits, bandit.r, bandit);
  std::optional<DebiasState> db;
  if (config.debias) db = make_debias_state(bandit);
  result.pulls.assign(static_cast<std::size_t>(bandit.k_arms), 0);

  const RewardFn env = [&truth, &rng](int j1, int j2, int arm) {
    return reward(truth, j1, j2, arm, rng);
  };

  for (std::int64_t t = 1; t <= bandit.horizon_T; ++t) {
    const StepRecord rec = propose_round(state, rng, env);
    if (db && rec.t > bandit.phase1_len_T0) debias_accumulate(*db, state, rec);
    result.ledger.record(truth, rec.j1, rec.j2, rec.action);
    ++result.pulls[static_cast<std::size_t>(rec.action)];
    sgd_step(state, rec);
  }

  result.state = std::move(state);
  result.debias = std::move(db);
  return result;
}

double diagnostic_gap_delta(const GroundTruth& truth,
                            const BanditConfig& config) {
  double sigma_sq = 0.0;
  for (double s : truth.sigmas) sigma_sq += s * s;
  const double log_d1 = std::log(static_cast<double>(config.d1));
  const double delta_sq =
      sigma_sq * config.r * static_cast<double>(config.d1) *
      std::pow(log_d1, 4.0) /
      std::pow(static_cast<double>(config.horizon_T), 1.0 - config.gamma);
  return std::sqrt(delta_sq);
}

double ambiguous_cell_fraction(const GroundTruth& truth, double gap_delta) {
  const auto& ms = truth.matrices;
  const int d1 = static_cast<int>(ms[0].rows());
  const int d2 = static_cast<int>(ms[0].cols());
  std::int64_t ambiguous = 0;
  for (int i = 0; i < d1; ++i) {
    for (int j = 0; j < d2; ++j) {
      double best = -std::numeric_limits<double>::infinity();
      double second = -std::numeric_limits<double>::infinity();
      for (const auto& m : ms) {
        const double v = m(i, j);
        if (v > best) {
          second = best;
          best = v;
        } else if (v > second) {
          second = v;
        }
      }
      if (ms.size() > 1 && best - second <= gap_delta) ++ambiguous;
    }
  }
  return static_cast<double>(ambiguous) / static_cast<double>(d1) /
         static_cast<double>(d2);
}

void parallel_trials(int trials, int workers,
                     const std::function<void(int)>& body) {
  workers = std::max(1, std::min(workers, trials));
  if (workers == 1) {
    for (int i = 0; i < trials; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= trials) return;
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

RegretScalingResult regret_scaling_study(const GroundTruth& truth,
                                         const ExperimentConfig& config_base,
                                         const std::vector<std::int64_t>& t_grid,
                                         int trials, int workers,
                                         std::uint64_t seed) {
  if (t_grid.empty()) throw ConfigError("regret_scaling_study: empty T grid");
  const BanditConfig& base = config_base.bandit;
  const double exponent = 1.0 - base.gamma;
  const double c0 = static_cast<double>(base.phase1_len_T0) /
                    std::pow(static_cast<double>(base.horizon_T), exponent);

  RegretScalingResult result;
  result.exponent = exponent;
  result.rows.resize(t_grid.size());

  for (std::size_t g = 0; g < t_grid.size(); ++g) {
    const std::int64_t horizon = t_grid[g];
    ExperimentConfig config = config_base;
    config.bandit.horizon_T = horizon;
    config.bandit.phase1_len_T0 = std::max<std::int64_t>(
        1, std::llround(c0 * std::pow(static_cast<double>(horizon), exponent)));
    if (config.bandit.phase1_len_T0 >= horizon)
      config.bandit.phase1_len_T0 = horizon - 1;
    if (base.eta_phase1 > 0.0) {
      // Rescale an explicit step size with the horizon, matching the c1 rule.
      config.bandit.eta_phase1 =
          base.eta_phase1 * std::pow(static_cast<double>(base.horizon_T) /
                                         static_cast<double>(horizon),
                                     exponent);
    }
    config.debias = false;

    std::vector<double> regrets(static_cast<std::size_t>(trials), 0.0);
    parallel_trials(trials, workers, [&](int trial) {
      Rng rng(seed, 1000 + g * static_cast<std::size_t>(trials) +
                        static_cast<std::size_t>(trial));
      ExperimentResult r = run_experiment(truth, config, rng);
      regrets[static_cast<std::size_t>(trial)] = r.ledger.cumulative;
    });

    RegretScalingRow row;
    row.horizon = horizon;
    row.t0 = config.bandit.phase1_len_T0;
    row.trials = trials;
    row.mean_cumulative_regret = mean(regrets);
    row.sd_cumulative_regret =
        trials > 1 ? std::sqrt(sample_variance(regrets)) : 0.0;
    result.rows[g] = row;
  }

  std::vector<double> xs, ys;
  for (const auto& row : result.rows) {
    xs.push_back(std::pow(static_cast<double>(row.horizon), exponent));
    ys.push_back(row.mean_cumulative_regret);
  }
  const LinearFit fit = linear_fit(xs, ys);
  result.slope = fit.slope;
  result.intercept = fit.intercept;
  result.r_squared = fit.r_squared;
  return result;
}

NormalityStudyResult normality_study(const GroundTruth& truth,
                                     const ExperimentConfig& config,
                                     const std::vector<StudyForm>& forms,
                                     int trials, int workers,
                                     std::uint64_t seed, double alpha) {
  if (forms.empty()) throw ConfigError("normality_study: no forms");
  ExperimentConfig econfig = config;
  econfig.debias = true;
  econfig.bandit = resolve_bandit_config(truth, config);

  struct TrialOut {
    std::vector<double> stats, estimates, ses;
    std::vector<bool> covered, degenerate;
    std::vector<double> sigma_sq;
  };
  std::vector<TrialOut> outs(static_cast<std::size_t>(trials));

  // Truth value per form.
  std::vector<double> truth_values;
  for (const auto& form : forms) {
    if (form.target.kind == InferenceTarget::Kind::kSingleArm) {
      truth_values.push_back(form.q.evaluate(
          truth.matrices[static_cast<std::size_t>(form.target.arm)]));
    } else {
      truth_values.push_back(
          form.q.evaluate(
              truth.matrices[static_cast<std::size_t>(form.target.arm_g)]) -
          form.q.evaluate(
              truth.matrices[static_cast<std::size_t>(form.target.arm_h)]));
    }
  }

  parallel_trials(trials, workers, [&](int trial) {
    Rng rng(seed, 1000 + static_cast<std::uint64_t>(trial));
    ExperimentResult r = run_experiment(truth, econfig, rng);
    TrialOut& out = outs[static_cast<std::size_t>(trial)];

    const DebiasedArms arms = finalize_debias(*r.debias, econfig.bandit.r);
    const OmegaPartition omega = omega_hat(r.state.arms);
    std::vector<double> sigma_sq(static_cast<std::size_t>(econfig.bandit.k_arms));
    for (int a = 0; a < econfig.bandit.k_arms; ++a)
      sigma_sq[static_cast<std::size_t>(a)] = estimate_sigma_sq(*r.debias, a);
    out.sigma_sq = sigma_sq;

    for (std::size_t f = 0; f < forms.size(); ++f) {
      const InferenceReport rep = report_from_components(
          arms, omega, sigma_sq, forms[f].q, econfig.bandit,
          r.debias->t_final, r.debias->t0, forms[f].target, alpha);
      out.estimates.push_back(rep.estimate);
      out.ses.push_back(rep.std_error);
      out.degenerate.push_back(rep.degenerate_se);
      if (rep.degenerate_se) {
        out.stats.push_back(std::numeric_limits<double>::quiet_NaN());
        out.covered.push_back(false);
      } else {
        out.stats.push_back((rep.estimate - truth_values[f]) / rep.std_error);
        out.covered.push_back(truth_values[f] >= rep.ci_low &&
                              truth_values[f] <= rep.ci_high);
      }
    }
  });

  NormalityStudyResult result;
  result.ambiguous_fraction = ambiguous_cell_fraction(
      truth, diagnostic_gap_delta(truth, econfig.bandit));
  for (std::size_t f = 0; f < forms.size(); ++f) {
    NormalityFormResult fr;
    fr.label = forms[f].label;
    fr.truth_value = truth_values[f];
    int covered = 0, valid = 0;
    for (const auto& out : outs) {
      fr.estimates.push_back(out.estimates[f]);
      fr.std_errors.push_back(out.ses[f]);
      fr.covered.push_back(out.covered[f]);
      if (out.degenerate[f]) {
        ++fr.degenerate_trials;
        continue;
      }
      fr.statistics.push_back(out.stats[f]);
      ++valid;
      if (out.covered[f]) ++covered;
    }
    fr.coverage = valid > 0 ? static_cast<double>(covered) / valid : 0.0;
    fr.ks_distance =
        fr.statistics.empty() ? 1.0 : ks_distance_to_normal(fr.statistics);
    result.forms.push_back(std::move(fr));
  }
  for (const auto& out : outs) result.sigma_sq_trials.push_back(out.sigma_sq);
  return result;
}

}  // namespace mcb

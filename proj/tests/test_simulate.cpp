#include <doctest.h>

#include <Eigen/SVD>
#include <cmath>

#include "mcb/simulate.hpp"
#include "mcb/stats.hpp"

using mcb::Matrix;

namespace {

mcb::ExperimentConfig desk_config(int d, std::int64_t horizon,
                                  std::int64_t t0) {
  mcb::ExperimentConfig config;
  config.bandit.d1 = d;
  config.bandit.d2 = d;
  config.bandit.r = 2;
  config.bandit.k_arms = 2;
  config.bandit.horizon_T = horizon;
  config.bandit.phase1_len_T0 = t0;
  config.bandit.gamma = 1.0 / 3.0;
  config.bandit.epsilon_phase1 = 0.6;
  config.bandit.c2 = 10.0;
  config.bandit.seed = 11;
  return config;
}

}  // namespace

TEST_CASE("generate_truth: zero perturbation clones the base arm") {
  mcb::Rng rng(81, 0);
  const mcb::GroundTruth truth = mcb::generate_truth(20, 15, 2, 3, 0.0, rng);
  CHECK((truth.matrices[0] - truth.matrices[2]).norm() == 0.0);
  CHECK((truth.matrices[1] - truth.matrices[2]).norm() == 0.0);
  CHECK(truth.sigmas == std::vector<double>{1.0, 1.0, 1.0});
}

TEST_CASE("generate_truth: matrices are exactly rank r") {
  mcb::Rng rng(82, 0);
  const mcb::GroundTruth truth = mcb::generate_truth(30, 25, 3, 2, 2.0, rng);
  for (const auto& m : truth.matrices) {
    Eigen::BDCSVD<Matrix> svd(m);
    CHECK(svd.singularValues()[3] / svd.singularValues()[2] < 1e-9);
    CHECK(svd.singularValues()[2] > 0.0);
  }
  CHECK(truth.lambda_min > 0.0);
  CHECK(truth.lambda_max >= truth.lambda_min);
}

TEST_CASE("generate_truth: spectrum at the reference scale") {
  mcb::Rng rng(83, 0);
  const mcb::GroundTruth truth = mcb::generate_truth(300, 300, 2, 2, 2.0, rng);
  CHECK(truth.lambda_max > 1880.0);
  CHECK(truth.lambda_max < 2080.0);
  CHECK(truth.lambda_min > 1850.0);
  CHECK(truth.lambda_min < 2050.0);
}

TEST_CASE("reward draws") {
  mcb::Rng rng(84, 0);
  const mcb::GroundTruth truth =
      mcb::generate_truth(10, 10, 1, 2, 2.0, rng, {0.0, 2.0});

  // sigma = 0: exact entry.
  for (int i = 0; i < 20; ++i)
    CHECK(mcb::reward(truth, 3, 4, 0, rng) == truth.matrices[0](3, 4));

  // Sample mean within 4 sigma / sqrt(n), SD within 5%.
  const int n = 100000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double r = mcb::reward(truth, 3, 4, 1, rng);
    sum += r;
    sum_sq += r * r;
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sum_sq / n - mean * mean);
  CHECK(std::abs(mean - truth.matrices[1](3, 4)) < 4.0 * 2.0 / std::sqrt(n));
  CHECK(std::abs(sd - 2.0) / 2.0 < 0.05);
}

TEST_CASE("uniform noise family matches the requested SD") {
  mcb::Rng rng(85, 0);
  const mcb::GroundTruth truth = mcb::generate_truth(
      10, 10, 1, 2, 2.0, rng, {1.5, 1.5}, mcb::NoiseFamily::kUniform);
  const int n = 200000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double r = mcb::reward(truth, 0, 0, 0, rng) - truth.matrices[0](0, 0);
    sum += r;
    sum_sq += r * r;
    CHECK(std::abs(r) <= 1.5 * std::sqrt(3.0) + 1e-12);
  }
  CHECK(std::abs(std::sqrt(sum_sq / n) - 1.5) / 1.5 < 0.05);
}

TEST_CASE("regret is zero when all arms are equal") {
  mcb::Rng rng(86, 0);
  const mcb::GroundTruth truth = mcb::generate_truth(15, 15, 2, 2, 0.0, rng);
  mcb::ExperimentConfig config = desk_config(15, 2000, 500);
  config.init_mode = mcb::InitMode::kTruthPlusNoise;
  config.init_noise_sd = 1.0;
  config.debias = false;
  mcb::Rng episode(87, 1);
  const mcb::ExperimentResult result =
      mcb::run_experiment(truth, config, episode);
  CHECK(result.ledger.cumulative == 0.0);
}

TEST_CASE("regret ledger: nonnegative, additive, and deterministic") {
  mcb::Rng rng(88, 0);
  const mcb::GroundTruth truth = mcb::generate_truth(12, 12, 2, 2, 2.0, rng);
  mcb::ExperimentConfig config = desk_config(12, 1500, 400);
  config.init_mode = mcb::InitMode::kTruthPlusNoise;
  config.init_noise_sd = 2.0;

  auto run = [&] {
    mcb::Rng episode(89, 1);
    return mcb::run_experiment(truth, config, episode);
  };
  const mcb::ExperimentResult a = run();
  const mcb::ExperimentResult b = run();

  double sum = 0.0;
  for (double g : a.ledger.instantaneous) {
    CHECK(g >= 0.0);
    sum += g;
  }
  CHECK(a.ledger.cumulative == sum);
  CHECK(a.ledger.instantaneous == b.ledger.instantaneous);
  CHECK(a.pulls == b.pulls);

  std::int64_t pulls = 0;
  for (std::size_t arm = 0; arm < 2; ++arm)
    pulls += a.ledger.pulls_optimal[arm] + a.ledger.pulls_suboptimal[arm];
  CHECK(pulls == config.bandit.horizon_T);
}

TEST_CASE("desk run: per-step regret rate falls with the horizon") {
  mcb::Rng rng(90, 0);
  const mcb::GroundTruth truth = mcb::generate_truth(60, 60, 2, 2, 2.0, rng);

  auto rate = [&](std::int64_t horizon, std::int64_t t0) {
    mcb::ExperimentConfig config = desk_config(60, horizon, t0);
    config.n_forced = 6000;
    mcb::Rng episode(91, 1);
    config.debias = false;
    const mcb::ExperimentResult result =
        mcb::run_experiment(truth, config, episode);
    return result.ledger.cumulative / static_cast<double>(horizon);
  };
  const double short_rate = rate(5000, 2384);  // T0 = C0 T^(2/3), C0 ~ 8.14
  const double long_rate = rate(20000, 6000);
  CHECK(long_rate > 0.0);
  // Exploration regret scales as T^(-1/3) under this schedule, so the per-step
  // rate ratio floors near (1/4)^(1/3) ~ 0.63 plus a finite-horizon term.
  CHECK(long_rate < 0.9 * short_rate);
}

TEST_CASE("regret_scaling_study: flat on zero-gap truth, smoke fit otherwise") {
  mcb::Rng rng(92, 0);
  const mcb::GroundTruth flat = mcb::generate_truth(10, 10, 1, 2, 0.0, rng);
  mcb::ExperimentConfig config = desk_config(10, 2000, 500);
  config.bandit.r = 1;
  config.init_mode = mcb::InitMode::kTruthPlusNoise;
  config.init_noise_sd = 0.5;
  config.debias = false;

  const mcb::RegretScalingResult zero = mcb::regret_scaling_study(
      flat, config, {1000, 2000, 3000}, 3, 2, 93);
  for (const auto& row : zero.rows)
    CHECK(row.mean_cumulative_regret == 0.0);

  const mcb::GroundTruth gapped = mcb::generate_truth(10, 10, 1, 2, 4.0, rng);
  const mcb::RegretScalingResult fit = mcb::regret_scaling_study(
      gapped, config, {1000, 2000, 4000, 8000}, 4, 2, 94);
  REQUIRE(fit.rows.size() == 4);
  CHECK(fit.rows[3].mean_cumulative_regret > fit.rows[0].mean_cumulative_regret);
  CHECK(fit.r_squared > 0.0);
  CHECK(fit.r_squared <= 1.0);
  CHECK(fit.exponent == doctest::Approx(2.0 / 3.0));
  // T0 rescales with the horizon.
  CHECK(fit.rows[0].t0 < fit.rows[3].t0);
}

TEST_CASE("normality_study: smoke run and degenerate sigma = 0") {
  mcb::Rng rng(95, 0);
  const mcb::GroundTruth truth =
      mcb::generate_truth(16, 16, 1, 2, 2.0, rng, {1.0, 1.0});
  mcb::ExperimentConfig config = desk_config(16, 1200, 300);
  config.bandit.r = 1;
  config.init_mode = mcb::InitMode::kTruthPlusNoise;
  config.init_noise_sd = 0.5;

  std::vector<mcb::StudyForm> forms(2);
  forms[0].label = "arm1";
  forms[0].q.entries.push_back({0, 4, 1.0});
  forms[0].target = mcb::InferenceTarget::single(1);
  forms[1].label = "diff";
  forms[1].q.entries.push_back({0, 4, 1.0});
  forms[1].target = mcb::InferenceTarget::difference(0, 1);

  const mcb::NormalityStudyResult result =
      mcb::normality_study(truth, config, forms, 16, 2, 96);
  REQUIRE(result.forms.size() == 2);
  for (const auto& fr : result.forms) {
    CHECK(static_cast<int>(fr.estimates.size()) == 16);
    CHECK(fr.degenerate_trials == 0);
    CHECK(fr.coverage >= 0.0);
    CHECK(fr.coverage <= 1.0);
    CHECK(fr.ks_distance > 0.0);
    CHECK(fr.ks_distance < 1.0);
  }
  CHECK(result.sigma_sq_trials.size() == 16);

  // Noise-free arms: every trial reports the degenerate zero-SE path.
  const mcb::GroundTruth noiseless =
      mcb::generate_truth(16, 16, 1, 2, 2.0, rng, {0.0, 0.0});
  mcb::ExperimentConfig exact_init = config;
  exact_init.init_noise_sd = 0.0;  // residuals vanish only from the truth
  const mcb::NormalityStudyResult degenerate =
      mcb::normality_study(noiseless, exact_init, forms, 4, 2, 97);
  for (const auto& fr : degenerate.forms)
    CHECK(fr.degenerate_trials == 4);
}

TEST_CASE("study determinism is independent of the worker count") {
  mcb::Rng rng(98, 0);
  const mcb::GroundTruth truth = mcb::generate_truth(12, 12, 1, 2, 3.0, rng);
  mcb::ExperimentConfig config = desk_config(12, 1000, 300);
  config.bandit.r = 1;
  config.init_mode = mcb::InitMode::kTruthPlusNoise;
  config.init_noise_sd = 0.5;
  config.debias = false;

  const auto one = mcb::regret_scaling_study(truth, config, {800, 1600}, 4, 1, 99);
  const auto four = mcb::regret_scaling_study(truth, config, {800, 1600}, 4, 4, 99);
  for (std::size_t i = 0; i < one.rows.size(); ++i) {
    CHECK(one.rows[i].mean_cumulative_regret ==
          four.rows[i].mean_cumulative_regret);
    CHECK(one.rows[i].sd_cumulative_regret == four.rows[i].sd_cumulative_regret);
  }
}

TEST_CASE("ambiguous cell fraction") {
  mcb::GroundTruth truth;
  truth.matrices = {Matrix::Zero(2, 2), Matrix::Zero(2, 2)};
  truth.sigmas = {1.0, 1.0};
  truth.matrices[1](0, 0) = 5.0;   // clear gap
  truth.matrices[1](0, 1) = 0.1;   // inside delta
  truth.matrices[1](1, 0) = -3.0;  // clear gap the other way
  // (1,1) is an exact tie.
  CHECK(mcb::ambiguous_cell_fraction(truth, 0.5) == doctest::Approx(0.5));
  CHECK(mcb::ambiguous_cell_fraction(truth, 0.05) == doctest::Approx(0.25));
}

TEST_CASE("step size derivation from the truth spectrum") {
  mcb::Rng rng(99, 0);
  const mcb::GroundTruth truth = mcb::generate_truth(20, 15, 2, 2, 2.0, rng);
  mcb::ExperimentConfig config = desk_config(20, 8000, 2000);
  config.bandit.d2 = 15;
  config.c1 = 0.025;
  const mcb::BanditConfig resolved = mcb::resolve_bandit_config(truth, config);
  const double expected = 0.025 * 20.0 * 15.0 * std::log(20.0) /
                          (std::pow(8000.0, 2.0 / 3.0) * truth.lambda_max);
  CHECK(resolved.eta_phase1 == doctest::Approx(expected).epsilon(1e-12));

  // An explicit eta is left untouched.
  config.bandit.eta_phase1 = 0.125;
  CHECK(mcb::resolve_bandit_config(truth, config).eta_phase1 == 0.125);
}

TEST_CASE("three-arm experiment with inference end to end") {
  mcb::Rng rng(200, 0);
  const mcb::GroundTruth truth =
      mcb::generate_truth(16, 16, 1, 3, 3.0, rng, {1.0, 1.0, 1.0});
  mcb::ExperimentConfig config = desk_config(16, 2400, 600);
  config.bandit.r = 1;
  config.bandit.k_arms = 3;
  config.init_mode = mcb::InitMode::kTruthPlusNoise;
  config.init_noise_sd = 0.5;

  std::vector<mcb::StudyForm> forms(2);
  forms[0].label = "arm2";
  forms[0].q.entries.push_back({0, 4, 1.0});
  forms[0].target = mcb::InferenceTarget::single(2);
  forms[1].label = "arm0-arm2";
  forms[1].q.entries.push_back({0, 4, 1.0});
  forms[1].target = mcb::InferenceTarget::difference(0, 2);

  const mcb::NormalityStudyResult result =
      mcb::normality_study(truth, config, forms, 30, 2, 201);
  for (const auto& fr : result.forms) {
    CHECK(fr.degenerate_trials == 0);
    CHECK(fr.coverage >= 0.75);  // loose sanity at 30 trials
    const double m = mcb::mean(fr.statistics);
    CHECK(std::abs(m) < 1.0);
  }
}

#include <doctest.h>

#include <cmath>

#include "mcb/errors.hpp"
#include "mcb/schedule.hpp"

namespace {

mcb::BanditConfig base_config() {
  mcb::BanditConfig config;
  config.d1 = 10;
  config.d2 = 10;
  config.r = 2;
  config.k_arms = 2;
  config.horizon_T = 60000;
  config.phase1_len_T0 = 20000;
  config.gamma = 1.0 / 3.0;
  config.epsilon_phase1 = 0.6;
  config.c2 = 10.0;
  config.eta_phase1 = 0.05;
  config.seed = 7;
  return config;
}

mcb::FactorPair constant_pair(int d1, int d2, double value) {
  mcb::FactorPair pair;
  pair.u = mcb::Matrix::Constant(d1, 1, value);
  pair.v = mcb::Matrix::Constant(d2, 1, 1.0);
  return pair;
}

}  // namespace

TEST_CASE("epsilon schedule follows the two-phase formula") {
  const mcb::BanditConfig config = base_config();
  CHECK(mcb::epsilon_at(config, 1) == 0.6);
  CHECK(mcb::epsilon_at(config, 20000) == 0.6);
  const double expected = 10.0 * std::pow(20001.0, -1.0 / 3.0);
  CHECK(mcb::epsilon_at(config, 20001) == doctest::Approx(expected));
  CHECK(mcb::epsilon_at(config, 20001) == doctest::Approx(0.3684).epsilon(1e-3));
  CHECK_THROWS_AS(mcb::epsilon_at(config, 0), mcb::ConfigError);
  CHECK_THROWS_AS(mcb::epsilon_at(config, 60001), mcb::ConfigError);
}

TEST_CASE("gamma = 0 degenerates to constant exploration") {
  mcb::BanditConfig config = base_config();
  config.gamma = 0.0;
  config.c2 = 0.6;
  CHECK(mcb::epsilon_at(config, 25000) == 0.6);
  CHECK(mcb::epsilon_at(config, 59999) == 0.6);
}

TEST_CASE("epsilon is clamped at the phase-1 level") {
  mcb::BanditConfig config = base_config();
  config.c2 = 1000.0;  // would exceed epsilon right after T0 without the clamp
  CHECK(mcb::epsilon_at(config, 20001) == 0.6);
}

TEST_CASE("epsilon is nonincreasing and positive over the whole horizon") {
  const mcb::BanditConfig config = base_config();
  double prev = 1.0;
  for (std::int64_t t = 1; t <= config.horizon_T; t += 97) {
    const double eps = mcb::epsilon_at(config, t);
    CHECK(eps > 0.0);
    CHECK(eps <= prev + 1e-15);
    prev = eps;
  }
}

TEST_CASE("eta schedule: constant then epsilon-scaled") {
  mcb::BanditConfig config = base_config();
  CHECK(mcb::eta_at(config, 15000) == 0.05);
  const double eps = mcb::epsilon_at(config, 30000);
  CHECK(mcb::eta_at(config, 30000) == doctest::Approx(eps * 0.05));

  // Product rule example: epsilon_t = 0.2, eta = 0.05 -> 0.01.
  config.gamma = 0.5;
  config.c2 = 0.2 * std::sqrt(40000.0);
  CHECK(mcb::epsilon_at(config, 40000) == doctest::Approx(0.2));
  CHECK(mcb::eta_at(config, 40000) == doctest::Approx(0.01));
}

TEST_CASE("eta is nonincreasing after T0") {
  const mcb::BanditConfig config = base_config();
  double prev = mcb::eta_at(config, config.phase1_len_T0 + 1);
  for (std::int64_t t = config.phase1_len_T0 + 2; t <= config.horizon_T;
       t += 53) {
    const double eta = mcb::eta_at(config, t);
    CHECK(eta <= prev + 1e-15);
    prev = eta;
  }
}

TEST_CASE("propensities: pure exploration splits evenly") {
  std::vector<mcb::FactorPair> arms{constant_pair(4, 4, 1.0),
                                    constant_pair(4, 4, 2.0)};
  const mcb::PropensityVector pv = mcb::propensities(arms, 0, 0, 1.0);
  CHECK(pv.probs[0] == doctest::Approx(0.5));
  CHECK(pv.probs[1] == doctest::Approx(0.5));
}

TEST_CASE("propensities: two-arm formula") {
  std::vector<mcb::FactorPair> arms{constant_pair(4, 4, 3.0),
                                    constant_pair(4, 4, 5.0)};
  const mcb::PropensityVector pv = mcb::propensities(arms, 1, 2, 0.4);
  CHECK(pv.greedy_arm == 1);
  CHECK(pv.probs[0] == doctest::Approx(0.2));
  CHECK(pv.probs[1] == doctest::Approx(0.8));
}

TEST_CASE("propensities: four arms") {
  std::vector<mcb::FactorPair> arms{
      constant_pair(3, 3, 0.0), constant_pair(3, 3, 1.0),
      constant_pair(3, 3, 9.0), constant_pair(3, 3, 2.0)};
  const mcb::PropensityVector pv = mcb::propensities(arms, 0, 0, 0.2);
  CHECK(pv.greedy_arm == 2);
  CHECK(pv.probs[0] == doctest::Approx(0.05));
  CHECK(pv.probs[1] == doctest::Approx(0.05));
  CHECK(pv.probs[2] == doctest::Approx(0.85));
  CHECK(pv.probs[3] == doctest::Approx(0.05));
}

TEST_CASE("propensities: exact ties go to the lowest arm index") {
  std::vector<mcb::FactorPair> arms{constant_pair(3, 3, 2.0),
                                    constant_pair(3, 3, 2.0)};
  CHECK(mcb::propensities(arms, 0, 0, 0.5).greedy_arm == 0);
}

TEST_CASE("propensities K=2 reproduces the indicator form bit-exactly") {
  mcb::Rng rng(31, 0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<mcb::FactorPair> arms;
    for (int a = 0; a < 2; ++a) {
      mcb::FactorPair pair;
      pair.u = mcb::Matrix(3, 2);
      pair.v = mcb::Matrix(3, 2);
      for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 2; ++k) {
          pair.u(i, k) = rng.uniform(-1.0, 1.0);
          pair.v(i, k) = rng.uniform(-1.0, 1.0);
        }
      arms.push_back(std::move(pair));
    }
    const double eps = rng.uniform(0.05, 1.0);
    const int j1 = static_cast<int>(rng.uniform_index(3));
    const int j2 = static_cast<int>(rng.uniform_index(3));
    const mcb::PropensityVector pv = mcb::propensities(arms, j1, j2, eps);
    const double diff = arms[1].predict(j1, j2) - arms[0].predict(j1, j2);
    const double pi1 = (1.0 - eps) * (diff > 0.0 ? 1.0 : 0.0) + eps / 2.0;
    const double pi0 = (1.0 - eps) * (diff > 0.0 ? 0.0 : 1.0) + eps / 2.0;
    CHECK(pv.probs[1] == pi1);
    CHECK(pv.probs[0] == pi0);
  }
}

TEST_CASE("propensity floor and sum, and argmax scale invariance") {
  mcb::Rng rng(32, 0);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 2 + static_cast<int>(rng.uniform_index(5));
    std::vector<mcb::FactorPair> arms;
    for (int a = 0; a < k; ++a) {
      mcb::FactorPair pair;
      pair.u = mcb::Matrix(4, 2);
      pair.v = mcb::Matrix(4, 2);
      for (int i = 0; i < 4; ++i)
        for (int c = 0; c < 2; ++c) {
          pair.u(i, c) = rng.uniform(-2.0, 2.0);
          pair.v(i, c) = rng.uniform(-2.0, 2.0);
        }
      arms.push_back(std::move(pair));
    }
    const double eps = rng.uniform(0.01, 1.0);
    const mcb::PropensityVector pv = mcb::propensities(arms, 1, 2, eps);

    double sum = 0.0, min_prob = 1.0;
    for (double p : pv.probs) {
      sum += p;
      min_prob = std::min(min_prob, p);
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);
    CHECK(min_prob == eps / k);  // exact floor for non-greedy arms

    std::vector<mcb::FactorPair> scaled = arms;
    for (auto& pair : scaled) {
      pair.u *= 3.0;
      pair.v *= 1.0;  // product scales by 3
    }
    CHECK(mcb::propensities(scaled, 1, 2, eps).greedy_arm == pv.greedy_arm);
  }
}

TEST_CASE("sample_action: degenerate and frequency behavior") {
  mcb::PropensityVector pv;
  pv.probs = {1.0, 0.0};
  mcb::Rng rng(33, 0);
  for (int i = 0; i < 100; ++i) CHECK(mcb::sample_action(pv, rng) == 0);

  pv.probs = {0.5, 0.5};
  int ones = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) ones += mcb::sample_action(pv, rng);
  CHECK(std::abs(static_cast<double>(ones) / n - 0.5) < 0.01);

  // Determinism: identical seeds give identical draw sequences.
  mcb::Rng a(99, 5), b(99, 5);
  for (int i = 0; i < 50; ++i)
    CHECK(mcb::sample_action(pv, a) == mcb::sample_action(pv, b));
}

TEST_CASE("sample_request: uniform frequencies") {
  mcb::BanditConfig config = base_config();
  mcb::Rng rng(34, 0);
  mcb::Matrix counts = mcb::Matrix::Zero(10, 10);
  const int n = 1000000;
  for (int i = 0; i < n; ++i) {
    const auto [j1, j2] = mcb::sample_request(config, rng);
    counts(j1, j2) += 1.0;
  }
  counts /= static_cast<double>(n);
  CHECK((counts.array() - 0.01).abs().maxCoeff() < 0.001);
}

TEST_CASE("sample_request honors point-mass and skewed weights") {
  mcb::BanditConfig config = base_config();
  mcb::Matrix point = mcb::Matrix::Constant(10, 10, 0.0);
  point(3, 7) = 1.0;
  // Zero probabilities are rejected, so use an epsilon floor off the mass.
  mcb::Matrix table = mcb::Matrix::Constant(10, 10, 1e-15);
  table(3, 7) = 1.0 - 99.0 * 1e-15;
  config.sampling_weights = std::make_shared<mcb::SamplingWeights>(table);
  mcb::Rng rng(35, 0);
  for (int i = 0; i < 1000; ++i) {
    const auto [j1, j2] = mcb::sample_request(config, rng);
    CHECK(j1 == 3);
    CHECK(j2 == 7);
  }

  mcb::BanditConfig tiny = base_config();
  tiny.d1 = 1;
  tiny.d2 = 2;
  tiny.r = 1;
  mcb::Matrix w(1, 2);
  w << 0.75, 0.25;
  tiny.sampling_weights = std::make_shared<mcb::SamplingWeights>(w);
  int left = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i)
    if (mcb::sample_request(tiny, rng).second == 0) ++left;
  CHECK(std::abs(static_cast<double>(left) / n - 0.75) < 0.01);
}

TEST_CASE("sampling weights validation") {
  mcb::Matrix negative = mcb::Matrix::Constant(2, 2, 0.5);
  negative(0, 0) = -0.5;
  CHECK_THROWS_AS(mcb::SamplingWeights{negative}, mcb::ConfigError);
  mcb::Matrix off_sum = mcb::Matrix::Constant(2, 2, 0.3);
  CHECK_THROWS_AS(mcb::SamplingWeights{off_sum}, mcb::ConfigError);
}

TEST_CASE("config validation names violations") {
  mcb::BanditConfig config = base_config();
  config.gamma = 1.0;
  CHECK_THROWS_AS(config.validate(), mcb::ConfigError);
  config = base_config();
  config.phase1_len_T0 = config.horizon_T;
  CHECK_THROWS_AS(config.validate(), mcb::ConfigError);
  config = base_config();
  config.epsilon_phase1 = 1.0;
  CHECK_THROWS_AS(config.validate(), mcb::ConfigError);
  config = base_config();
  config.c2 = 0.0;
  CHECK_THROWS_AS(config.validate(), mcb::ConfigError);
  CHECK_NOTHROW(base_config().validate());
}

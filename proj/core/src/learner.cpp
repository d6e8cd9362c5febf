#include "mcb/learner.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mcb/errors.hpp"

namespace mcb {

LearnerState init_from_matrices(const std::vector<Matrix>& init_estimates,
                                int r, const BanditConfig& config) {
  config.validate();
  if (static_cast<int>(init_estimates.size()) != config.k_arms)
    throw ConfigError("init_from_matrices: expected " +
                      std::to_string(config.k_arms) + " initial estimates");
  if (r != config.r)
    throw ConfigError("init_from_matrices: rank disagrees with config");

  LearnerState state;
  state.config = config;
  state.t = 0;
  state.arms.reserve(init_estimates.size());
  for (int a = 0; a < config.k_arms; ++a) {
    const Matrix& m = init_estimates[static_cast<std::size_t>(a)];
    if (m.rows() != config.d1 || m.cols() != config.d2)
      throw ConfigError("init_from_matrices: arm " + std::to_string(a) +
                        " has dims " + std::to_string(m.rows()) + "x" +
                        std::to_string(m.cols()));
    state.arms.push_back(balanced_factorize(m, r));
    if (m.norm() == 0.0) state.diagnostics.zero_init_arms.push_back(a);
    state.diagnostics.max_incoherence =
        std::max(state.diagnostics.max_incoherence,
                 incoherence_of_balanced(state.arms.back()));
  }
  return state;
}

namespace {

std::vector<double> default_lambda_seq(double sigma_top) {
  // Geometric path from a strong shrink down to ~2e-4 x the top singular value.
  std::vector<double> seq;
  for (double lam = sigma_top / 4.0; lam > sigma_top * 2e-4; lam /= 4.0)
    seq.push_back(lam);
  if (seq.empty()) seq.push_back(0.0);
  return seq;
}

Matrix svd_soft_threshold(const Matrix& w, double lambda) {
  Eigen::BDCSVD<Matrix> svd(w, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Vector s = svd.singularValues();
  int kept = 0;
  for (int k = 0; k < s.size(); ++k) {
    s[k] = std::max(s[k] - lambda, 0.0);
    if (s[k] > 0.0) kept = k + 1;
  }
  if (kept == 0) return Matrix::Zero(w.rows(), w.cols());
  return svd.matrixU().leftCols(kept) * s.head(kept).asDiagonal() *
         svd.matrixV().leftCols(kept).transpose();
}

}  // namespace

std::vector<Matrix> soft_impute_init(const std::vector<Observation>& observations,
                                     int d1, int d2, int k_arms,
                                     const SoftImputeOptions& opts) {
  if (d1 < 1 || d2 < 1 || k_arms < 1)
    throw ConfigError("soft_impute_init: bad dimensions");

  std::vector<Matrix> sums(static_cast<std::size_t>(k_arms),
                           Matrix::Zero(d1, d2));
  std::vector<Matrix> counts(static_cast<std::size_t>(k_arms),
                             Matrix::Zero(d1, d2));
  for (const auto& obs : observations) {
    if (obs.arm < 0 || obs.arm >= k_arms || obs.j1 < 0 || obs.j1 >= d1 ||
        obs.j2 < 0 || obs.j2 >= d2)
      throw DataError("soft_impute_init: observation out of range");
    if (!std::isfinite(obs.reward))
      throw DataError("soft_impute_init: non-finite reward");
    sums[static_cast<std::size_t>(obs.arm)](obs.j1, obs.j2) += obs.reward;
    counts[static_cast<std::size_t>(obs.arm)](obs.j1, obs.j2) += 1.0;
  }

  std::vector<Matrix> out;
  out.reserve(static_cast<std::size_t>(k_arms));
  for (int a = 0; a < k_arms; ++a) {
    const Matrix& cnt = counts[static_cast<std::size_t>(a)];
    if (cnt.sum() == 0.0)
      throw DataError("soft_impute_init: arm " + std::to_string(a) +
                      " has no observations (insufficient forced sampling)");
    Matrix mean = Matrix::Zero(d1, d2);
    for (int i = 0; i < d1; ++i)
      for (int j = 0; j < d2; ++j)
        if (cnt(i, j) > 0.0) mean(i, j) = sums[static_cast<std::size_t>(a)](i, j) / cnt(i, j);

    std::vector<double> lambdas = opts.lambda_seq;
    if (lambdas.empty()) {
      Eigen::BDCSVD<Matrix> top(mean);
      lambdas = default_lambda_seq(top.singularValues()[0]);
    }

    Matrix z = Matrix::Zero(d1, d2);
    for (double lambda : lambdas) {
      for (int iter = 0; iter < opts.max_iters; ++iter) {
        // Fill unobserved cells with the current completion, observed with data.
        Matrix w = z;
        for (int i = 0; i < d1; ++i)
          for (int j = 0; j < d2; ++j)
            if (cnt(i, j) > 0.0) w(i, j) = mean(i, j);
        Matrix z_new = svd_soft_threshold(w, lambda);
        const double denom = std::max(z.squaredNorm(), 1e-30);
        const double rel = (z_new - z).squaredNorm() / denom;
        z = std::move(z_new);
        if (rel < opts.tol) break;
      }
    }
    out.push_back(std::move(z));
  }
  return out;
}

double sgd_scale(const LearnerState& state_before, const StepRecord& rec) {
  const auto& config = state_before.config;
  const auto& arm = state_before.arms[static_cast<std::size_t>(rec.action)];
  const double pi = rec.propensities.probs[static_cast<std::size_t>(rec.action)];
  const double p_cell = config.cell_probability(rec.j1, rec.j2);
  const double w =
      1.0 / (pi * p_cell * static_cast<double>(config.cells()));
  const double residual = arm.predict(rec.j1, rec.j2) - rec.reward;
  return eta_at(config, rec.t) * w * residual;
}

void sgd_step(LearnerState& state, const StepRecord& rec) {
  if (rec.t != state.t + 1)
    throw ConfigError("sgd_step: record step " + std::to_string(rec.t) +
                      " does not follow state step " + std::to_string(state.t));
  if (rec.action < 0 || rec.action >= state.config.k_arms)
    throw DataError("sgd_step: action out of range");
  if (!std::isfinite(rec.reward)) throw DataError("sgd_step: non-finite reward");
  if (!(rec.propensities.probs[static_cast<std::size_t>(rec.action)] > 0.0))
    throw DataError("sgd_step: zero propensity for the taken action");

  const double s = sgd_scale(state, rec);
  FactorPair& arm = state.arms[static_cast<std::size_t>(rec.action)];
  const Eigen::RowVectorXd u_row = arm.u.row(rec.j1);
  const Eigen::RowVectorXd v_row = arm.v.row(rec.j2);
  arm.u.row(rec.j1) -= s * v_row;
  arm.v.row(rec.j2) -= s * u_row;

  RebalanceDiagnostics diag;
  arm = rebalance_fast(arm, &diag);
  state.diagnostics.rebalance_degeneracies += diag.degenerate_grams;
  state.diagnostics.max_incoherence = std::max(
      state.diagnostics.max_incoherence, incoherence_of_balanced(arm));
  state.t = rec.t;
}

StepRecord propose_round(const LearnerState& state, Rng& rng,
                         const RewardFn& reward_fn) {
  StepRecord rec;
  rec.t = state.t + 1;
  const auto [j1, j2] = sample_request(state.config, rng);
  rec.j1 = j1;
  rec.j2 = j2;
  const double eps = epsilon_at(state.config, rec.t);
  rec.propensities = propensities(state.arms, j1, j2, eps);
  rec.action = sample_action(rec.propensities, rng);
  rec.reward = reward_fn(j1, j2, rec.action);
  rec.phase = rec.t <= state.config.phase1_len_T0 ? 1 : 2;
  return rec;
}

StepRecord run_round(LearnerState& state, Rng& rng, const RewardFn& reward_fn) {
  StepRecord rec = propose_round(state, rng, reward_fn);
  sgd_step(state, rec);
  return rec;
}

std::vector<ArmError> estimation_errors(const LearnerState& state,
                                        const std::vector<Matrix>& truth) {
  if (truth.size() != state.arms.size())
    throw ConfigError("estimation_errors: arm count mismatch");
  std::vector<ArmError> out(state.arms.size());
  for (std::size_t a = 0; a < state.arms.size(); ++a) {
    const Matrix diff = state.arms[a].product() - truth[a];
    out[a].frobenius_sq = diff.squaredNorm();
    out[a].max_sq = diff.cwiseAbs().maxCoeff();
    out[a].max_sq *= out[a].max_sq;
  }
  return out;
}

}  // namespace mcb

#include "oracles.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>
#include <cmath>

namespace oracle {

Matrix random_matrix(mcb::Rng& rng, int rows, int cols, double lo, double hi) {
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}

Matrix random_rank_r(mcb::Rng& rng, int rows, int cols, int r, double scale) {
  Matrix a(rows, r), b(cols, r);
  for (int i = 0; i < rows; ++i)
    for (int k = 0; k < r; ++k) a(i, k) = rng.normal();
  for (int j = 0; j < cols; ++j)
    for (int k = 0; k < r; ++k) b(j, k) = rng.normal();
  return scale * a * b.transpose();
}

Matrix truncate_jacobi(const Matrix& m, int r) {
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return svd.matrixU().leftCols(r) *
         svd.singularValues().head(r).asDiagonal() *
         svd.matrixV().leftCols(r).transpose();
}

mcb::FactorPair rebalance_dense(const mcb::FactorPair& pair) {
  const Matrix product = pair.u * pair.v.transpose();
  const int r = pair.rank();
  Eigen::JacobiSVD<Matrix> svd(product,
                               Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd sqrt_s =
      svd.singularValues().head(r).cwiseSqrt();
  mcb::FactorPair out;
  out.u = svd.matrixU().leftCols(r) * sqrt_s.asDiagonal();
  out.v = svd.matrixV().leftCols(r) * sqrt_s.asDiagonal();
  return out;
}

Matrix tangent_project_complement(const Matrix& q, const mcb::ThinSvd& svd) {
  const int d1 = static_cast<int>(svd.left.rows());
  const int d2 = static_cast<int>(svd.right.rows());
  const int r = svd.rank();
  // Householder QR of the basis yields a full orthogonal matrix whose trailing
  // columns are an explicit orthonormal complement.
  const auto complement = [](const Matrix& basis, int d, int r_) {
    Eigen::HouseholderQR<Matrix> qr(basis);
    const Matrix q_full = qr.householderQ();
    return Matrix(q_full.rightCols(d - r_));
  };
  const Matrix l_perp = complement(svd.left, d1, r);
  const Matrix r_perp = complement(svd.right, d2, r);
  return q - l_perp * (l_perp.transpose() * q * r_perp) * r_perp.transpose();
}

DenseLearner::DenseLearner(const std::vector<Matrix>& inits,
                           const mcb::BanditConfig& config)
    : config_(config) {
  for (const auto& m : inits) {
    mcb::FactorPair pair;
    Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd sqrt_s =
        svd.singularValues().head(config.r).cwiseSqrt();
    pair.u = svd.matrixU().leftCols(config.r) * sqrt_s.asDiagonal();
    pair.v = svd.matrixV().leftCols(config.r) * sqrt_s.asDiagonal();
    arms_.push_back(std::move(pair));
  }
}

void DenseLearner::step(const mcb::StepRecord& rec) {
  t_ = rec.t;
  // Literal schedule: constant in phase 1, epsilon_t * eta after, with the
  // clamp at the phase-1 epsilon.
  double eta = config_.eta_phase1;
  if (rec.t > config_.phase1_len_T0) {
    const double eps =
        std::min(config_.epsilon_phase1,
                 config_.c2 * std::pow(static_cast<double>(rec.t), -config_.gamma));
    eta *= eps;
  }
  const double pi = rec.propensities.probs[static_cast<std::size_t>(rec.action)];
  const double p_cell = config_.cell_probability(rec.j1, rec.j2);
  const double w = 1.0 / (pi * p_cell * static_cast<double>(config_.d1) *
                          static_cast<double>(config_.d2));

  mcb::FactorPair& arm = arms_[static_cast<std::size_t>(rec.action)];
  const double residual = arm.u.row(rec.j1).dot(arm.v.row(rec.j2)) - rec.reward;
  Matrix x = Matrix::Zero(config_.d1, config_.d2);
  x(rec.j1, rec.j2) = 1.0;

  const Matrix u_grad = (eta * w * residual) * (x * arm.v);
  const Matrix v_grad = (eta * w * residual) * (x.transpose() * arm.u);
  mcb::FactorPair updated;
  updated.u = arm.u - u_grad;
  updated.v = arm.v - v_grad;
  arm = rebalance_dense(updated);
}

Matrix DenseLearner::product(int arm) const {
  return arms_[static_cast<std::size_t>(arm)].product();
}

}  // namespace oracle

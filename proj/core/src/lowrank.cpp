#include "mcb/lowrank.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

#include "mcb/errors.hpp"

namespace mcb {

namespace {

constexpr double kGramFloorRatio = 1e-12;

void require_finite(const Matrix& m, const char* who) {
  if (!m.allFinite()) throw DataError(std::string(who) + ": non-finite input");
}

// Eigendecomposition of a symmetric PSD r x r Gram matrix, eigenvalues sorted
// nonincreasing and negatives from roundoff clipped to zero.
void gram_eigen(const Matrix& gram, Matrix& vectors, Vector& values) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(gram);
  const int r = static_cast<int>(gram.rows());
  vectors.resize(r, r);
  values.resize(r);
  for (int k = 0; k < r; ++k) {  // ascending -> descending
    values[k] = std::max(es.eigenvalues()[r - 1 - k], 0.0);
    vectors.col(k) = es.eigenvectors().col(r - 1 - k);
  }
}

}  // namespace

double balance_defect(const FactorPair& pair) {
  const Matrix gu = pair.u.transpose() * pair.u;
  const Matrix gv = pair.v.transpose() * pair.v;
  const double ref = gu.norm();
  if (ref == 0.0 && gv.norm() == 0.0) return 0.0;
  return (gu - gv).norm() / std::max(ref, 1e-300);
}

ThinSvd thin_svd(const Matrix& m, int r) {
  if (r < 1 || r > std::min(m.rows(), m.cols()))
    throw ConfigError("thin_svd: rank exceeds dimensions");
  require_finite(m, "thin_svd");

  ThinSvd out;
  if (std::min(m.rows(), m.cols()) <= 16) {
    Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    out.left = svd.matrixU().leftCols(r);
    out.singular_values = svd.singularValues().head(r);
    out.right = svd.matrixV().leftCols(r);
  } else {
    Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    out.left = svd.matrixU().leftCols(r);
    out.singular_values = svd.singularValues().head(r);
    out.right = svd.matrixV().leftCols(r);
  }
  return out;
}

FactorPair balanced_factorize(const Matrix& m, int r) {
  const ThinSvd svd = thin_svd(m, r);
  const Vector sqrt_s = svd.singular_values.cwiseSqrt();
  FactorPair pair;
  pair.u = svd.left * sqrt_s.asDiagonal();
  pair.v = svd.right * sqrt_s.asDiagonal();
  return pair;
}

FactorPair rebalance_fast(const FactorPair& pair, RebalanceDiagnostics* diag) {
  // Non-finite factors mid-run mean the iteration diverged, not bad user data.
  if (!pair.u.allFinite() || !pair.v.allFinite())
    throw NumericError("rebalance_fast: non-finite factors (diverged?)");
  const int r = pair.rank();

  Matrix ru, rv;
  Vector du, dv;
  gram_eigen(pair.u.transpose() * pair.u, ru, du);
  gram_eigen(pair.v.transpose() * pair.v, rv, dv);

  const double top = std::max(du[0], dv[0]);
  if (top == 0.0) {
    // Zero pair: product is zero and both Gram sides vanish, already balanced.
    if (diag) ++diag->degenerate_grams;
    return pair;
  }
  const double floor = kGramFloorRatio * top;
  bool degenerate = false;
  for (int k = 0; k < r; ++k) {
    if (du[k] < floor) { du[k] = floor; degenerate = true; }
    if (dv[k] < floor) { dv[k] = floor; degenerate = true; }
  }
  if (degenerate && diag) ++diag->degenerate_grams;

  const Vector du_sqrt = du.cwiseSqrt();
  const Vector dv_sqrt = dv.cwiseSqrt();
  const Matrix core =
      du_sqrt.asDiagonal() * (ru.transpose() * rv) * dv_sqrt.asDiagonal();
  Eigen::JacobiSVD<Matrix> core_svd(core,
                                    Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vector s_sqrt = core_svd.singularValues().cwiseSqrt();

  FactorPair out;
  out.u = pair.u *
          (ru * du_sqrt.cwiseInverse().asDiagonal() * core_svd.matrixU() *
           s_sqrt.asDiagonal());
  out.v = pair.v *
          (rv * dv_sqrt.cwiseInverse().asDiagonal() * core_svd.matrixV() *
           s_sqrt.asDiagonal());
  return out;
}

Matrix tangent_project(const Matrix& q, const ThinSvd& svd) {
  if (q.rows() != svd.left.rows() || q.cols() != svd.right.rows())
    throw DataError("tangent_project: dimension mismatch");
  const Matrix lt_q = svd.left.transpose() * q;    // r x d2
  const Matrix q_r = q * svd.right;                // d1 x r
  // L L^T Q + Q R R^T - L L^T Q R R^T
  return svd.left * lt_q + (q_r - svd.left * (lt_q * svd.right)) *
                               svd.right.transpose();
}

std::pair<Matrix, ThinSvd> rank_r_project(const Matrix& m, int r) {
  ThinSvd svd = thin_svd(m, r);
  Matrix projected = svd.left * (svd.left.transpose() * m * svd.right) *
                     svd.right.transpose();
  return {std::move(projected), std::move(svd)};
}

IncoherenceReport incoherence(const ThinSvd& svd) {
  IncoherenceReport rep;
  rep.row_norms_left = svd.left.rowwise().norm();
  rep.row_norms_right = svd.right.rowwise().norm();
  const double d1 = static_cast<double>(svd.left.rows());
  const double d2 = static_cast<double>(svd.right.rows());
  const double r = static_cast<double>(svd.rank());
  rep.mu = std::max(std::sqrt(d1 / r) * rep.row_norms_left.maxCoeff(),
                    std::sqrt(d2 / r) * rep.row_norms_right.maxCoeff());
  return rep;
}

double incoherence_of_balanced(const FactorPair& pair) {
  // With u^T u = v^T v = diag(s), the singular factors are L = u diag(s)^{-1/2},
  // R = v diag(s)^{-1/2}; only squared row norms are needed.
  const int r = pair.rank();
  Vector inv_s(r);
  for (int k = 0; k < r; ++k) {
    const double s = pair.u.col(k).squaredNorm();
    inv_s[k] = s > 0.0 ? 1.0 / s : 0.0;
  }
  double max_left = 0.0, max_right = 0.0;
  for (int i = 0; i < pair.u.rows(); ++i)
    max_left = std::max(max_left,
                        (pair.u.row(i).cwiseAbs2() * inv_s.asDiagonal()).sum());
  for (int j = 0; j < pair.v.rows(); ++j)
    max_right = std::max(
        max_right, (pair.v.row(j).cwiseAbs2() * inv_s.asDiagonal()).sum());
  const double d1 = static_cast<double>(pair.u.rows());
  const double d2 = static_cast<double>(pair.v.rows());
  return std::sqrt(std::max(d1 / r * max_left, d2 / r * max_right));
}

}  // namespace mcb

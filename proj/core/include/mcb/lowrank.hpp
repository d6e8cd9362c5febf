#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <utility>

namespace mcb {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Balanced low-rank pair: the arm estimate is u * v^T with u^T u = v^T v.
struct FactorPair {
  Matrix u;  // d1 x r
  Matrix v;  // d2 x r

  int rank() const { return static_cast<int>(u.cols()); }
  int rows() const { return static_cast<int>(u.rows()); }
  int cols() const { return static_cast<int>(v.rows()); }

  Matrix product() const { return u * v.transpose(); }

  /// Predicted reward at one cell: <u v^T, e_j1 e_j2^T>.
  double predict(int j1, int j2) const { return u.row(j1).dot(v.row(j2)); }
};

/// Thin SVD with orthonormal factors and nonincreasing singular values.
struct ThinSvd {
  Matrix left;             // d1 x r, orthonormal columns
  Vector singular_values;  // length r, nonincreasing, nonnegative
  Matrix right;            // d2 x r, orthonormal columns

  int rank() const { return static_cast<int>(singular_values.size()); }
  Matrix reconstruct() const {
    return left * singular_values.asDiagonal() * right.transpose();
  }
};

struct IncoherenceReport {
  double mu = 0.0;
  Vector row_norms_left;   // length d1, l2 norms of rows of the left factor
  Vector row_norms_right;  // length d2
};

/// Counts transient degeneracies encountered by rebalance_fast. Gram eigenvalues
/// below 1e-12 x the largest are floored before inversion rather than aborting.
struct RebalanceDiagnostics {
  std::int64_t degenerate_grams = 0;
};

/// Relative balance defect ||u^T u - v^T v||_F / ||u^T u||_F (0 for the zero pair).
double balance_defect(const FactorPair& pair);

/// Thin SVD of a dense matrix, truncated to the leading r triples.
ThinSvd thin_svd(const Matrix& m, int r);

/// Balanced rank-r factorization u = L diag(s)^{1/2}, v = R diag(s)^{1/2} from the
/// truncated SVD of m; u v^T is the best rank-r approximation of m.
FactorPair balanced_factorize(const Matrix& m, int r);

/// Restores balance of an arbitrary finite pair while preserving the product,
/// touching only r x r decompositions plus two tall-thin multiplies. Never forms
/// a d1 x d2 matrix. Near-singular Gram spectra are floored and counted.
FactorPair rebalance_fast(const FactorPair& pair,
                          RebalanceDiagnostics* diag = nullptr);

/// Tangent-space projection at the rank-r point described by svd:
/// P(Q) = L L^T Q + Q R R^T - L L^T Q R R^T.
Matrix tangent_project(const Matrix& q, const ThinSvd& svd);

/// Spectral projection onto the top-r singular spaces of m, with the ThinSvd used.
std::pair<Matrix, ThinSvd> rank_r_project(const Matrix& m, int r);

/// Incoherence mu = max( sqrt(d1/r) max_i ||L_i.||, sqrt(d2/r) max_j ||R_j.|| ).
IncoherenceReport incoherence(const ThinSvd& svd);

/// Incoherence of a balanced pair without forming its SVD: valid whenever
/// u^T u = v^T v = diag(s), which rebalance_fast guarantees.
double incoherence_of_balanced(const FactorPair& pair);

}  // namespace mcb

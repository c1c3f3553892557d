#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "ardd/error.hpp"

namespace ardd {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Relative tolerance on the diagonal of R (against the column norm of the
/// weight-scaled design) below which a fit is declared rank deficient.
inline constexpr double kSingularityTolerance = 1e-12;

/// A dense design matrix with named columns. Values are validated once at
/// construction and never mutated afterwards.
class DesignMatrix {
 public:
  DesignMatrix() = default;

  DesignMatrix(Matrix values, std::vector<std::string> column_names)
      : values_(std::move(values)), names_(std::move(column_names)) {
    if (values_.cols() != static_cast<Eigen::Index>(names_.size())) {
      fail(ErrorCode::DimensionMismatch, "design has " + std::to_string(values_.cols()) +
                                             " columns but " + std::to_string(names_.size()) +
                                             " names");
    }
    if (!values_.allFinite()) fail(ErrorCode::InvalidSpec, "design contains NaN or Inf");
    std::set<std::string> unique(names_.begin(), names_.end());
    if (unique.size() != names_.size()) fail(ErrorCode::InvalidSpec, "duplicate column names");
  }

  /// Convenience constructor that names the columns x0, x1, ...
  explicit DesignMatrix(Matrix values) : DesignMatrix(values, default_names(values.cols())) {}

  const Matrix& values() const noexcept { return values_; }
  const std::vector<std::string>& column_names() const noexcept { return names_; }
  Eigen::Index n() const noexcept { return values_.rows(); }
  Eigen::Index p() const noexcept { return values_.cols(); }
  bool empty() const noexcept { return values_.cols() == 0; }

  /// Index of a column by name, or -1.
  Eigen::Index find(const std::string& name) const {
    for (std::size_t j = 0; j < names_.size(); ++j)
      if (names_[j] == name) return static_cast<Eigen::Index>(j);
    return -1;
  }

  DesignMatrix select_columns(const std::vector<Eigen::Index>& cols) const {
    Matrix out(values_.rows(), static_cast<Eigen::Index>(cols.size()));
    std::vector<std::string> names;
    names.reserve(cols.size());
    for (std::size_t k = 0; k < cols.size(); ++k) {
      out.col(static_cast<Eigen::Index>(k)) = values_.col(cols[k]);
      names.push_back(names_[static_cast<std::size_t>(cols[k])]);
    }
    return DesignMatrix(std::move(out), std::move(names));
  }

  DesignMatrix select_rows(const std::vector<Eigen::Index>& rows) const {
    Matrix out(static_cast<Eigen::Index>(rows.size()), values_.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = values_.row(rows[k]);
    return DesignMatrix(std::move(out), names_);
  }

 private:
  static std::vector<std::string> default_names(Eigen::Index p) {
    std::vector<std::string> names;
    for (Eigen::Index j = 0; j < p; ++j) names.push_back("x" + std::to_string(j));
    return names;
  }

  Matrix values_;
  std::vector<std::string> names_;
};

struct WlsFit {
  Vector coefficients;
  Vector residuals;
  /// Classical residual variance with weights normalised to sum to the
  /// number of positively weighted rows. NaN when dof <= 0.
  double sigma2_hat = 0.0;
  /// (X' W X)^{-1} with the same weight normalisation.
  Matrix xtx_inverse;
  double dof = 0.0;
  Eigen::Index n_effective = 0;
};

namespace detail {

inline void check_lengths(const DesignMatrix& X, const Vector& y, const Vector& w) {
  if (y.size() != X.n() || w.size() != X.n()) {
    fail(ErrorCode::DimensionMismatch, "X has " + std::to_string(X.n()) + " rows, y has " +
                                           std::to_string(y.size()) + ", w has " +
                                           std::to_string(w.size()));
  }
}

/// Weights rescaled so they sum to the number of strictly positive entries.
inline Vector normalised_weights(const Vector& w, Eigen::Index& n_positive) {
  n_positive = (w.array() > 0.0).count();
  const double total = w.sum();
  if (n_positive == 0 || !(total > 0.0)) return Vector::Zero(w.size());
  return w * (static_cast<double>(n_positive) / total);
}

}  // namespace detail

/// Weighted least squares through a Householder QR of sqrt(w)-scaled X.
inline WlsFit wls_fit(const DesignMatrix& X, const Vector& y, const Vector& w) {
  detail::check_lengths(X, y, w);
  if ((w.array() < 0.0).any() || !w.allFinite()) fail(ErrorCode::InvalidSpec, "weights must be finite and nonnegative");
  if (!y.allFinite()) fail(ErrorCode::InvalidSpec, "outcome contains NaN or Inf");

  Eigen::Index n_pos = 0;
  const Vector wn = detail::normalised_weights(w, n_pos);
  const Eigen::Index p = X.p();
  if (n_pos < p) {
    fail(ErrorCode::RankDeficient, "only " + std::to_string(n_pos) + " positively weighted rows for " +
                                       std::to_string(p) + " coefficients");
  }

  const Vector sw = wn.array().sqrt();
  const Matrix Xs = sw.asDiagonal() * X.values();
  const Vector ys = sw.cwiseProduct(y);

  Eigen::HouseholderQR<Matrix> qr(Xs);
  const Matrix R = qr.matrixQR().topRows(p).triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < p; ++j) {
    const double col_norm = Xs.col(j).norm();
    if (col_norm == 0.0 || std::abs(R(j, j)) <= kSingularityTolerance * col_norm) {
      fail(ErrorCode::RankDeficient, "column '" + X.column_names()[static_cast<std::size_t>(j)] +
                                         "' is collinear with earlier columns");
    }
  }

  WlsFit fit;
  fit.coefficients = qr.solve(ys);
  fit.residuals = y - X.values() * fit.coefficients;
  const Matrix Rinv = R.triangularView<Eigen::Upper>().solve(Matrix::Identity(p, p));
  fit.xtx_inverse = Rinv * Rinv.transpose();
  fit.n_effective = n_pos;
  fit.dof = static_cast<double>(n_pos - p);
  fit.sigma2_hat = fit.dof > 0.0
                       ? wn.dot(fit.residuals.cwiseAbs2()) / fit.dof
                       : std::numeric_limits<double>::quiet_NaN();
  return fit;
}

/// HC1 sandwich standard errors: n/(n-p) * (X'WX)^{-1} X'W diag(e^2) W X (X'WX)^{-1}.
inline Vector hc_standard_errors(const WlsFit& fit, const DesignMatrix& X, const Vector& w) {
  detail::check_lengths(X, fit.residuals, w);
  if (fit.dof <= 0.0) fail(ErrorCode::DegenerateDof, "no residual degrees of freedom");
  Eigen::Index n_pos = 0;
  const Vector wn = detail::normalised_weights(w, n_pos);
  const Vector score_w = wn.cwiseProduct(fit.residuals);
  const Matrix S = score_w.asDiagonal() * X.values();
  const Matrix meat = S.transpose() * S;
  const double scale = static_cast<double>(n_pos) / fit.dof;
  const Matrix cov = scale * fit.xtx_inverse * meat * fit.xtx_inverse;
  return cov.diagonal().cwiseMax(0.0).cwiseSqrt();
}

/// Classical (homoskedastic) standard errors sigma^2 (X'WX)^{-1}.
inline Vector classical_standard_errors(const WlsFit& fit) {
  if (fit.dof <= 0.0) fail(ErrorCode::DegenerateDof, "no residual degrees of freedom");
  return (fit.sigma2_hat * fit.xtx_inverse.diagonal()).cwiseMax(0.0).cwiseSqrt();
}

}  // namespace ardd

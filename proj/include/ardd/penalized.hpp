#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ardd/core_regression.hpp"
#include "ardd/error.hpp"
#include "ardd/random.hpp"

namespace ardd {

using Index = Eigen::Index;

enum class PenaltyKind { Ridge, Lasso, AdaptiveLasso };

inline constexpr std::string_view to_string(PenaltyKind kind) {
  switch (kind) {
    case PenaltyKind::Ridge: return "ridge";
    case PenaltyKind::Lasso: return "lasso";
    case PenaltyKind::AdaptiveLasso: return "adaptive_lasso";
  }
  return "unknown";
}

/// Penalty strength, per-coefficient penalty weights and the set of
/// coefficients exempt from penalisation. Weights of unpenalized columns are
/// forced to zero at construction.
class PenaltySpec {
 public:
  PenaltySpec(PenaltyKind kind, double lambda, Vector weights, std::vector<Index> unpenalized)
      : kind_(kind), lambda_(lambda), weights_(std::move(weights)), unpenalized_(std::move(unpenalized)) {
    if (!std::isfinite(lambda_) || lambda_ < 0.0) fail(ErrorCode::InvalidSpec, "lambda must be finite and >= 0");
    std::sort(unpenalized_.begin(), unpenalized_.end());
    unpenalized_.erase(std::unique(unpenalized_.begin(), unpenalized_.end()), unpenalized_.end());
    for (Index j : unpenalized_) {
      if (j < 0 || j >= weights_.size()) fail(ErrorCode::InvalidSpec, "unpenalized index out of range");
      weights_[j] = 0.0;
    }
    for (Index j = 0; j < weights_.size(); ++j) {
      if (!std::isfinite(weights_[j]) || weights_[j] < 0.0) {
        fail(ErrorCode::InvalidSpec, "penalty weight " + std::to_string(j) + " is negative or not finite");
      }
    }
  }

  /// All penalized columns carry weight one.
  static PenaltySpec uniform(PenaltyKind kind, Index p, double lambda, std::vector<Index> unpenalized = {}) {
    return PenaltySpec(kind, lambda, Vector::Ones(p), std::move(unpenalized));
  }

  PenaltySpec with_lambda(double lambda) const {
    PenaltySpec copy = *this;
    if (!std::isfinite(lambda) || lambda < 0.0) fail(ErrorCode::InvalidSpec, "lambda must be finite and >= 0");
    copy.lambda_ = lambda;
    return copy;
  }

  PenaltyKind kind() const noexcept { return kind_; }
  double lambda() const noexcept { return lambda_; }
  const Vector& weights() const noexcept { return weights_; }
  const std::vector<Index>& unpenalized() const noexcept { return unpenalized_; }
  Index p() const noexcept { return weights_.size(); }

  bool is_unpenalized(Index j) const {
    return std::binary_search(unpenalized_.begin(), unpenalized_.end(), j);
  }

 private:
  PenaltyKind kind_;
  double lambda_;
  Vector weights_;
  std::vector<Index> unpenalized_;
};

struct PenalizedFit {
  Vector coefficients;
  double lambda = 0.0;
  std::vector<Index> active_set;
  int n_iter = 0;
  bool converged = false;
  double objective = 0.0;
  /// Objective after each coordinate-descent sweep (and after the final
  /// active-set refinement when it was accepted).
  std::vector<double> objective_trace;
};

struct PenalizedOptions {
  int max_sweeps = 10000;
  double tolerance = 1e-7;
  /// Re-solve the KKT system on the converged active set and keep the
  /// result when it is sign consistent and does not raise the objective.
  bool refine = true;
  /// When positive, cross-validation rebuilds adaptive weights with this
  /// exponent from a pilot OLS on each training fold, so the held-out rows
  /// never inform the penalty. Folds whose pilot is rank deficient keep the
  /// template weights.
  double fold_pilot_gamma = 0.0;
};

struct CvRecord {
  std::vector<double> lambda_grid;
  std::vector<double> cv_mse;
  std::vector<double> cv_se;
  double lambda_min = 0.0;
  std::size_t index_min = 0;
  int k = 0;
  std::vector<int> fold_assignment;
};

inline double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

/// omega_j = 1 / |beta_j|^gamma for penalized j, 0 for unpenalized j.
/// Pilot coefficients below 1e-10 in magnitude get the capped weight 1e10.
inline Vector adaptive_weights(const Vector& beta_pilot, double gamma, const std::vector<Index>& unpenalized) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) fail(ErrorCode::InvalidGamma, "gamma must be positive");
  constexpr double kZeroPilot = 1e-10;
  constexpr double kWeightCap = 1e10;
  Vector w(beta_pilot.size());
  for (Index j = 0; j < beta_pilot.size(); ++j) {
    const double b = std::abs(beta_pilot[j]);
    w[j] = b < kZeroPilot ? kWeightCap : std::min(kWeightCap, 1.0 / std::pow(b, gamma));
  }
  for (Index j : unpenalized) {
    if (j < 0 || j >= w.size()) fail(ErrorCode::InvalidSpec, "unpenalized index out of range");
    w[j] = 0.0;
  }
  return w;
}

namespace detail {

/// The penalized problem on the internal standardized scale. Free columns
/// (unpenalized, or with zero weight) are kept as they are; penalized
/// columns are centred (when a free intercept exists) and scaled to unit
/// weighted variance.
class StandardizedProblem {
 public:
  StandardizedProblem(const DesignMatrix& X, const Vector& y, const Vector& w, const PenaltySpec& spec)
      : y_(y), penalty_(spec.weights()), kind_(spec.kind()) {
    check_lengths(X, y, w);
    if (spec.p() != X.p()) fail(ErrorCode::DimensionMismatch, "penalty spec has wrong length");
    if ((w.array() < 0.0).any() || !w.allFinite()) fail(ErrorCode::InvalidSpec, "observation weights must be >= 0");
    if (!y.allFinite()) fail(ErrorCode::InvalidSpec, "outcome contains NaN or Inf");

    n_ = static_cast<double>(X.n());
    const double total = w.sum();
    if (!(total > 0.0)) fail(ErrorCode::InvalidSpec, "all observation weights are zero");
    w_ = w * (n_ / total);
    sw_ = w_.array().sqrt();

    const Matrix& V = X.values();
    const Index p = X.p();
    for (Index j = 0; j < p; ++j) {
      if (spec.is_unpenalized(j) || penalty_[j] == 0.0) free_.push_back(j);
      else penalized_.push_back(j);
    }

    for (Index j : free_) {
      const double first = first_weighted_value(V.col(j));
      if (first != 0.0 && is_constant(V.col(j), first)) {
        intercept_ = j;
        intercept_value_ = first;
        break;
      }
    }

    mean_ = Vector::Zero(p);
    scale_ = Vector::Ones(p);
    degenerate_.assign(static_cast<std::size_t>(p), false);
    Z_ = V;
    for (Index j : penalized_) {
      const double m = intercept_ >= 0 ? w_.dot(V.col(j)) / n_ : 0.0;
      const Vector centred = V.col(j).array() - m;
      const double s = std::sqrt(w_.dot(centred.cwiseAbs2()) / n_);
      const double magnitude = std::max(1.0, V.col(j).cwiseAbs().maxCoeff());
      if (!(s > 1e-12 * magnitude)) {
        degenerate_[static_cast<std::size_t>(j)] = true;
        Z_.col(j).setZero();
        continue;
      }
      mean_[j] = m;
      scale_[j] = s;
      Z_.col(j) = centred / s;
    }

    wz_ = w_.asDiagonal() * Z_;
    curvature_ = Vector::Zero(p);
    for (Index j : penalized_) curvature_[j] = wz_.col(j).dot(Z_.col(j)) / n_;

    if (!free_.empty()) {
      Matrix F(X.n(), static_cast<Index>(free_.size()));
      for (std::size_t k = 0; k < free_.size(); ++k) F.col(static_cast<Index>(k)) = sw_.asDiagonal() * Z_.col(free_[k]);
      free_qr_.compute(F);
      const Matrix& R = free_qr_.matrixQR();
      for (Index k = 0; k < F.cols(); ++k) {
        const double norm = F.col(k).norm();
        if (norm == 0.0 || std::abs(R(k, k)) <= kSingularityTolerance * norm) {
          fail(ErrorCode::RankDeficient, "unpenalized column '" +
                                             X.column_names()[static_cast<std::size_t>(free_[static_cast<std::size_t>(k)])] +
                                             "' is collinear");
        }
      }
    }
  }

  Index p() const noexcept { return Z_.cols(); }
  const std::vector<Index>& penalized() const noexcept { return penalized_; }
  const std::vector<Index>& free_columns() const noexcept { return free_; }
  bool degenerate(Index j) const { return degenerate_[static_cast<std::size_t>(j)]; }
  double scale(Index j) const { return scale_[j]; }

  /// Solves the free block exactly for fixed penalized coefficients and
  /// returns the matching residual.
  Vector update_free_block(Vector& theta) const {
    Vector target = y_;
    for (Index j : penalized_)
      if (theta[j] != 0.0) target -= theta[j] * Z_.col(j);
    if (free_.empty()) return target;
    const Vector sol = free_qr_.solve(Vector(sw_.cwiseProduct(target)));
    for (std::size_t k = 0; k < free_.size(); ++k) {
      theta[free_[k]] = sol[static_cast<Index>(k)];
      target -= sol[static_cast<Index>(k)] * Z_.col(free_[k]);
    }
    return target;
  }

  double gradient(Index j, const Vector& residual) const { return wz_.col(j).dot(residual) / n_; }

  double lambda_max() const {
    bool any = false;
    double best = 0.0;
    Vector theta = Vector::Zero(p());
    const Vector r = update_free_block(theta);
    for (Index j : penalized_) {
      if (degenerate(j)) continue;
      any = true;
      best = std::max(best, std::abs(gradient(j, r)) / penalty_[j]);
    }
    if (!any) fail(ErrorCode::AllUnpenalized, "no column carries a positive penalty weight");
    return best;
  }

  double objective(const Vector& theta, const Vector& residual, double lambda) const {
    double pen = 0.0;
    for (Index j : penalized_) {
      if (theta[j] == 0.0) continue;
      pen += penalty_[j] * (kind_ == PenaltyKind::Ridge ? theta[j] * theta[j] : std::abs(theta[j]));
    }
    return 0.5 * w_.dot(residual.cwiseAbs2()) / n_ + lambda * pen;
  }

  Vector residual(const Vector& theta) const { return y_ - Z_ * theta; }

  Vector to_original(const Vector& theta) const {
    Vector beta = theta;
    double shift = 0.0;
    for (Index j : penalized_) {
      if (degenerate(j)) {
        beta[j] = 0.0;
        continue;
      }
      beta[j] = theta[j] / scale_[j];
      shift += theta[j] * mean_[j] / scale_[j];
    }
    if (intercept_ >= 0) beta[intercept_] -= shift / intercept_value_;
    return beta;
  }

  Vector to_standardized(const Vector& beta) const {
    Vector theta = beta;
    double shift = 0.0;
    for (Index j : penalized_) {
      if (degenerate(j)) {
        theta[j] = 0.0;
        continue;
      }
      theta[j] = beta[j] * scale_[j];
      shift += beta[j] * mean_[j];
    }
    if (intercept_ >= 0) theta[intercept_] += shift / intercept_value_;
    return theta;
  }

  /// Coordinate descent from `theta` (updated in place).
  PenalizedFit solve(Vector& theta, double lambda, const PenalizedOptions& opt) const {
    PenalizedFit fit;
    fit.lambda = lambda;
    for (Index j : penalized_)
      if (degenerate(j)) theta[j] = 0.0;
    Vector r = update_free_block(theta);
    fit.objective_trace.push_back(objective(theta, r, lambda));

    bool converged = false;
    int sweeps = 0;
    while (sweeps < opt.max_sweeps) {
      ++sweeps;
      double max_change = 0.0;
      for (Index j : penalized_) {
        if (degenerate(j)) continue;
        const double old = theta[j];
        const double z = gradient(j, r) + curvature_[j] * old;
        const double t = lambda * penalty_[j];
        double updated;
        if (kind_ == PenaltyKind::Ridge) {
          updated = z / (curvature_[j] + 2.0 * t);
        } else {
          // Ties at the threshold (e.g. lambda == lambda_max) resolve to zero.
          updated = std::abs(z) - t <= 1e-12 * t ? 0.0 : soft_threshold(z, t) / curvature_[j];
        }
        if (updated != old) {
          r -= (updated - old) * Z_.col(j);
          theta[j] = updated;
          max_change = std::max(max_change, std::abs(updated - old));
        }
      }
      if (!free_.empty()) {
        const Vector before = theta;
        r = update_free_block(theta);
        for (Index j : free_) max_change = std::max(max_change, std::abs(theta[j] - before[j]));
      }
      fit.objective_trace.push_back(objective(theta, r, lambda));
      if (max_change < opt.tolerance) {
        converged = true;
        break;
      }
    }

    bool refined = false;
    if (opt.refine) refined = refine(theta, lambda, fit.objective_trace.back());
    if (refined) fit.objective_trace.push_back(objective(theta, residual(theta), lambda));

    fit.n_iter = sweeps;
    fit.converged = converged || refined;
    fit.objective = fit.objective_trace.back();
    fit.coefficients = to_original(theta);
    for (Index j = 0; j < p(); ++j)
      if (fit.coefficients[j] != 0.0) fit.active_set.push_back(j);
    return fit;
  }

 private:
  double first_weighted_value(const Eigen::Ref<const Vector>& col) const {
    for (Index i = 0; i < col.size(); ++i)
      if (w_[i] > 0.0) return col[i];
    return 0.0;
  }

  bool is_constant(const Eigen::Ref<const Vector>& col, double value) const {
    for (Index i = 0; i < col.size(); ++i)
      if (w_[i] > 0.0 && col[i] != value) return false;
    return true;
  }

  /// Exact solution of the stationarity conditions on the current support.
  /// Accepted only if signs and the inactive-coordinate KKT bounds hold.
  bool refine(Vector& theta, double lambda, double current_objective) const {
    std::vector<Index> cols = free_;
    for (Index j : penalized_)
      if (!degenerate(j) && (kind_ == PenaltyKind::Ridge || theta[j] != 0.0)) cols.push_back(j);
    if (cols.empty()) return false;
    const Index k = static_cast<Index>(cols.size());
    const Index n = Z_.rows();

    Vector candidate = theta;
    if (kind_ == PenaltyKind::Ridge) {
      Matrix A = Matrix::Zero(n + k, k);
      Vector b = Vector::Zero(n + k);
      b.head(n) = sw_.cwiseProduct(y_);
      for (Index c = 0; c < k; ++c) {
        const Index j = cols[static_cast<std::size_t>(c)];
        A.col(c).head(n) = sw_.cwiseProduct(Z_.col(j));
        A(n + c, c) = std::sqrt(2.0 * n_ * lambda * penalty_[j]);
      }
      Eigen::HouseholderQR<Matrix> qr(A);
      if (!full_rank(qr, A)) return false;
      const Vector sol = qr.solve(b);
      for (Index c = 0; c < k; ++c) candidate[cols[static_cast<std::size_t>(c)]] = sol[c];
    } else {
      Matrix A(n, k);
      Vector g = Vector::Zero(k);
      for (Index c = 0; c < k; ++c) {
        const Index j = cols[static_cast<std::size_t>(c)];
        A.col(c) = sw_.cwiseProduct(Z_.col(j));
        if (penalty_[j] > 0.0) g[c] = n_ * lambda * penalty_[j] * (theta[j] > 0.0 ? 1.0 : -1.0);
      }
      Eigen::HouseholderQR<Matrix> qr(A);
      if (!full_rank(qr, A)) return false;
      const Matrix R = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
      const Vector qty = (qr.householderQ().transpose() * sw_.cwiseProduct(y_)).head(k);
      const Vector shift = R.transpose().triangularView<Eigen::Lower>().solve(g);
      const Vector sol = R.triangularView<Eigen::Upper>().solve(Vector(qty - shift));
      for (Index c = 0; c < k; ++c) {
        const Index j = cols[static_cast<std::size_t>(c)];
        if (penalty_[j] > 0.0 && (sol[c] > 0.0) != (theta[j] > 0.0)) return false;
        if (penalty_[j] > 0.0 && sol[c] == 0.0) return false;
        candidate[j] = sol[c];
      }
      const Vector r = residual(candidate);
      for (Index j : penalized_) {
        if (degenerate(j) || candidate[j] != 0.0) continue;
        if (std::abs(gradient(j, r)) > lambda * penalty_[j] * (1.0 + 1e-9) + 1e-14) return false;
      }
    }
    const double obj = objective(candidate, residual(candidate), lambda);
    if (!(obj <= current_objective + 1e-12 * std::max(1.0, std::abs(current_objective)))) return false;
    theta = candidate;
    return true;
  }

  static bool full_rank(const Eigen::HouseholderQR<Matrix>& qr, const Matrix& A) {
    const Matrix& R = qr.matrixQR();
    for (Index c = 0; c < A.cols(); ++c) {
      const double norm = A.col(c).norm();
      if (norm == 0.0 || std::abs(R(c, c)) <= kSingularityTolerance * norm) return false;
    }
    return true;
  }

  Vector y_;
  Vector penalty_;
  PenaltyKind kind_;
  double n_ = 0.0;
  Vector w_;
  Vector sw_;
  Matrix Z_;
  Matrix wz_;
  Vector mean_;
  Vector scale_;
  Vector curvature_;
  std::vector<bool> degenerate_;
  std::vector<Index> free_;
  std::vector<Index> penalized_;
  Index intercept_ = -1;
  double intercept_value_ = 1.0;
  Eigen::HouseholderQR<Matrix> free_qr_;
};

inline std::vector<double> log_grid(double lambda_max, std::size_t size) {
  if (size == 0) fail(ErrorCode::InvalidSpec, "grid size must be positive");
  if (!(lambda_max > 0.0) || size == 1) return {lambda_max};
  std::vector<double> grid(size);
  const double ratio = 1e-4;
  for (std::size_t i = 0; i < size; ++i) {
    grid[i] = lambda_max * std::pow(ratio, static_cast<double>(i) / static_cast<double>(size - 1));
  }
  grid.front() = lambda_max;
  return grid;
}

}  // namespace detail

/// Minimises (1/2n) sum_i w_i (y_i - x_i b)^2 + lambda sum_j omega_j pen(b_j)
/// with pen = |.| (lasso, adaptive lasso) or (.)^2 (ridge), evaluated on
/// internally standardized penalized columns. Coefficients are returned on
/// the original scale. A fit that exhausts max_sweeps comes back with
/// converged == false.
inline PenalizedFit fit_penalized(const DesignMatrix& X, const Vector& y, const Vector& obs_weights,
                                  const PenaltySpec& spec, const std::optional<Vector>& init = std::nullopt,
                                  const PenalizedOptions& options = {}) {
  const detail::StandardizedProblem problem(X, y, obs_weights, spec);
  Vector theta = Vector::Zero(X.p());
  if (init) {
    if (init->size() != X.p()) fail(ErrorCode::DimensionMismatch, "initial coefficients have wrong length");
    theta = problem.to_standardized(*init);
  }
  return problem.solve(theta, spec.lambda(), options);
}

/// Smallest lambda at which every penalized coefficient is zero.
inline double lambda_max(const DesignMatrix& X, const Vector& y, const Vector& obs_weights, const PenaltySpec& spec) {
  return detail::StandardizedProblem(X, y, obs_weights, spec).lambda_max();
}

inline Vector standardized_pilot(const DesignMatrix& X, const Vector& y, const Vector& obs_weights,
                                 const std::vector<Index>& unpenalized);

/// Fold sizes follow a seeded shuffle of the row indices split into k
/// contiguous blocks.
inline std::vector<int> assign_folds(Index n, int k, std::uint64_t seed) {
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<int> fold(static_cast<std::size_t>(n));
  for (Index t = 0; t < n; ++t) {
    fold[static_cast<std::size_t>(order[static_cast<std::size_t>(t)])] = static_cast<int>((t * k) / n);
  }
  return fold;
}

/// k-fold cross-validation over a log-spaced grid from lambda_max down to
/// 1e-4 * lambda_max. k == n (leave-one-out) is accepted; otherwise n >= 2k.
inline CvRecord cv_select_lambda(const DesignMatrix& X, const Vector& y, const Vector& obs_weights,
                                 const PenaltySpec& spec_template, int k, std::size_t grid_size,
                                 std::uint64_t seed, const PenalizedOptions& options = {}) {
  const Index n = X.n();
  if (k < 2) fail(ErrorCode::TooFewObservations, "need at least 2 folds");
  if (n != k && n < 2 * static_cast<Index>(k)) {
    fail(ErrorCode::TooFewObservations, std::to_string(n) + " rows cannot support " + std::to_string(k) + " folds");
  }

  CvRecord rec;
  rec.k = k;
  rec.lambda_grid = detail::log_grid(lambda_max(X, y, obs_weights, spec_template), grid_size);
  rec.fold_assignment = assign_folds(n, k, seed);

  const std::size_t G = rec.lambda_grid.size();
  std::vector<std::vector<double>> fold_mse(G, std::vector<double>(static_cast<std::size_t>(k), 0.0));

  for (int f = 0; f < k; ++f) {
    std::vector<Index> train, test;
    for (Index i = 0; i < n; ++i) (rec.fold_assignment[static_cast<std::size_t>(i)] == f ? test : train).push_back(i);
    const DesignMatrix Xtr = X.select_rows(train);
    Vector ytr(static_cast<Index>(train.size())), wtr(static_cast<Index>(train.size()));
    for (std::size_t t = 0; t < train.size(); ++t) {
      ytr[static_cast<Index>(t)] = y[train[t]];
      wtr[static_cast<Index>(t)] = obs_weights[train[t]];
    }
    PenaltySpec fold_spec = spec_template;
    if (options.fold_pilot_gamma > 0.0) {
      try {
        const Vector pilot = standardized_pilot(Xtr, ytr, wtr, spec_template.unpenalized());
        fold_spec = PenaltySpec(spec_template.kind(), 0.0,
                                adaptive_weights(pilot, options.fold_pilot_gamma, spec_template.unpenalized()),
                                spec_template.unpenalized());
      } catch (const Error& e) {
        if (e.code() != ErrorCode::RankDeficient) throw;
      }
    }
    const detail::StandardizedProblem problem(Xtr, ytr, wtr, fold_spec);
    Vector theta = Vector::Zero(X.p());
    for (std::size_t g = 0; g < G; ++g) {
      const PenalizedFit fit = problem.solve(theta, rec.lambda_grid[g], options);
      double sse = 0.0, wsum = 0.0;
      for (Index i : test) {
        const double e = y[i] - X.values().row(i).dot(fit.coefficients);
        sse += obs_weights[i] * e * e;
        wsum += obs_weights[i];
      }
      fold_mse[g][static_cast<std::size_t>(f)] = wsum > 0.0 ? sse / wsum : 0.0;
    }
  }

  rec.cv_mse.resize(G);
  rec.cv_se.resize(G);
  for (std::size_t g = 0; g < G; ++g) {
    const auto& m = fold_mse[g];
    const double mean = std::accumulate(m.begin(), m.end(), 0.0) / k;
    double ss = 0.0;
    for (double v : m) ss += (v - mean) * (v - mean);
    rec.cv_mse[g] = mean;
    rec.cv_se[g] = std::sqrt(ss / (k - 1)) / std::sqrt(static_cast<double>(k));
  }
  // First (largest) lambda attaining the minimum.
  std::size_t best = 0;
  for (std::size_t g = 1; g < G; ++g)
    if (rec.cv_mse[g] < rec.cv_mse[best] * (1.0 - 1e-12)) best = g;
  rec.index_min = best;
  rec.lambda_min = rec.lambda_grid[best];
  return rec;
}

/// Pilot-OLS coefficients expressed on the standardized scale the penalty
/// acts on (b_j * sd_j for penalized columns).
inline Vector standardized_pilot(const DesignMatrix& X, const Vector& y, const Vector& obs_weights,
                                 const std::vector<Index>& unpenalized) {
  const WlsFit pilot = wls_fit(X, y, obs_weights);
  const PenaltySpec unit = PenaltySpec::uniform(PenaltyKind::Lasso, X.p(), 0.0, unpenalized);
  const detail::StandardizedProblem problem(X, y, obs_weights, unit);
  Vector out = pilot.coefficients;
  for (Index j : problem.penalized()) out[j] = problem.degenerate(j) ? 0.0 : pilot.coefficients[j] * problem.scale(j);
  return out;
}

struct GammaSelection {
  double gamma = 2.0;
  Vector weights;
  CvRecord record;
};

/// For each candidate gamma builds adaptive weights from the pilot OLS and
/// cross-validates lambda with per-fold pilot weights; keeps the (gamma, lambda) pair with the smallest
/// CV error (earlier candidates win ties).
inline GammaSelection cv_select_gamma(const DesignMatrix& X, const Vector& y, const Vector& obs_weights,
                                      const std::vector<Index>& unpenalized, const std::vector<double>& candidates,
                                      int k, std::size_t grid_size, std::uint64_t seed,
                                      const PenalizedOptions& options = {}) {
  if (candidates.empty()) fail(ErrorCode::InvalidGamma, "no gamma candidates");
  for (double g : candidates)
    if (!(g > 0.0)) fail(ErrorCode::InvalidGamma, "gamma candidates must be positive");
  const Vector pilot = standardized_pilot(X, y, obs_weights, unpenalized);
  std::optional<GammaSelection> best;
  for (double g : candidates) {
    GammaSelection sel;
    sel.gamma = g;
    sel.weights = adaptive_weights(pilot, g, unpenalized);
    const PenaltySpec spec(PenaltyKind::AdaptiveLasso, 0.0, sel.weights, unpenalized);
    PenalizedOptions fold_options = options;
    fold_options.fold_pilot_gamma = g;
    sel.record = cv_select_lambda(X, y, obs_weights, spec, k, grid_size, seed, fold_options);
    if (!best || sel.record.cv_mse[sel.record.index_min] < best->record.cv_mse[best->record.index_min]) {
      best = std::move(sel);
    }
  }
  return *best;
}

}  // namespace ardd

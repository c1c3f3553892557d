#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ardd/core_regression.hpp"
#include "ardd/error.hpp"

namespace ardd {

/// Critical value used for every 95% interval.
inline constexpr double kNormalQuantile975 = 1.96;

/// Minimum number of positively weighted observations required on each side.
inline constexpr Eigen::Index kMinSideSupport = 5;

enum class KernelKind { Triangular, Uniform, Epanechnikov };

struct KernelSpec {
  KernelKind kind = KernelKind::Triangular;
};

inline constexpr std::string_view to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::Triangular: return "triangular";
    case KernelKind::Uniform: return "uniform";
    case KernelKind::Epanechnikov: return "epanechnikov";
  }
  return "unknown";
}

inline double kernel_weight(double u, KernelSpec spec) {
  const double a = std::abs(u);
  switch (spec.kind) {
    case KernelKind::Triangular: return std::max(1.0 - a, 0.0);
    case KernelKind::Uniform: return a <= 1.0 ? 1.0 : 0.0;
    case KernelKind::Epanechnikov: return 0.75 * std::max(1.0 - u * u, 0.0);
  }
  return 0.0;
}

/// Constant of the boundary local-linear MSE-optimal bandwidth,
/// (C2 / (4 C1^2))^(1/5), where C1 and C2 are the bias and variance constants
/// of the one-sided equivalent kernel. Moments by composite Simpson on [0, 1]
/// (the integrands are low-degree polynomials, so the rule is near exact).
inline double kernel_constant(KernelSpec spec) {
  const int m = 2000;
  const double step = 1.0 / m;
  auto simpson = [&](auto&& f) {
    double s = f(0.0) + f(1.0);
    for (int i = 1; i < m; ++i) s += (i % 2 ? 4.0 : 2.0) * f(i * step);
    return s * step / 3.0;
  };
  double nu[4];
  for (int j = 0; j < 4; ++j) nu[j] = simpson([&](double u) { return std::pow(u, j) * kernel_weight(u, spec); });
  const double det = nu[0] * nu[2] - nu[1] * nu[1];
  const double c1 = (nu[2] * nu[2] - nu[1] * nu[3]) / (2.0 * det);
  const double c2 = simpson([&](double u) {
    const double k = (nu[2] - nu[1] * u) * kernel_weight(u, spec) / det;
    return k * k;
  });
  return std::pow(c2 / (4.0 * c1 * c1), 0.2);
}

/// Sharp-RDD sample. Treatment is running >= cutoff.
class RddDataset {
 public:
  RddDataset(Vector outcome, Vector running, double cutoff = 0.0, DesignMatrix covariates = {},
             std::optional<std::vector<std::string>> unit_ids = std::nullopt)
      : outcome_(std::move(outcome)),
        running_(std::move(running)),
        cutoff_(cutoff),
        covariates_(std::move(covariates)),
        unit_ids_(std::move(unit_ids)) {
    const Eigen::Index n = outcome_.size();
    if (running_.size() != n) fail(ErrorCode::DimensionMismatch, "outcome and running variable differ in length");
    if (covariates_.empty()) covariates_ = DesignMatrix(Matrix(n, 0), {});
    if (covariates_.n() != n) fail(ErrorCode::DimensionMismatch, "covariates have the wrong number of rows");
    if (unit_ids_ && static_cast<Eigen::Index>(unit_ids_->size()) != n)
      fail(ErrorCode::DimensionMismatch, "unit ids have the wrong length");
    if (!outcome_.allFinite() || !running_.allFinite() || !std::isfinite(cutoff_))
      fail(ErrorCode::InvalidDataset, "outcome, running variable and cutoff must be finite");
    Eigen::Index below = 0;
    for (Eigen::Index i = 0; i < n; ++i) below += running_[i] < cutoff_;
    if (below == 0 || below == n) fail(ErrorCode::InvalidDataset, "running variable must have observations on both sides of the cutoff");
    for (Eigen::Index j = 0; j < covariates_.p(); ++j) {
      const Vector col = covariates_.values().col(j);
      if (exact_affine(col, running_) || exact_affine(col, treatment())) {
        fail(ErrorCode::InvalidDataset, "covariate '" + covariates_.column_names()[static_cast<std::size_t>(j)] +
                                            "' duplicates the running variable or treatment indicator");
      }
    }
  }

  const Vector& outcome() const noexcept { return outcome_; }
  const Vector& running() const noexcept { return running_; }
  double cutoff() const noexcept { return cutoff_; }
  const DesignMatrix& covariates() const noexcept { return covariates_; }
  const std::optional<std::vector<std::string>>& unit_ids() const noexcept { return unit_ids_; }
  Eigen::Index n() const noexcept { return outcome_.size(); }

  Vector centered_running() const { return running_.array() - cutoff_; }
  Vector treatment() const { return (running_.array() >= cutoff_).cast<double>(); }

  /// Same sample with a replaced outcome (used for residualised plug-ins).
  RddDataset with_outcome(Vector y) const {
    RddDataset copy = *this;
    if (y.size() != n()) fail(ErrorCode::DimensionMismatch, "replacement outcome has the wrong length");
    if (!y.allFinite()) fail(ErrorCode::InvalidDataset, "replacement outcome must be finite");
    copy.outcome_ = std::move(y);
    return copy;
  }

  /// Same sample restricted to the named covariates, in the given order.
  RddDataset with_covariates(const std::vector<std::string>& names) const {
    RddDataset copy = *this;
    copy.covariates_ = covariates_.select_columns(covariate_indices(names));
    return copy;
  }

  std::vector<Eigen::Index> covariate_indices(const std::vector<std::string>& names) const {
    std::vector<Eigen::Index> idx;
    for (const auto& name : names) {
      const Eigen::Index j = covariates_.find(name);
      if (j < 0) fail(ErrorCode::InvalidSpec, "unknown covariate '" + name + "'");
      if (std::find(idx.begin(), idx.end(), j) != idx.end()) fail(ErrorCode::InvalidSpec, "covariate '" + name + "' listed twice");
      idx.push_back(j);
    }
    return idx;
  }

 private:
  // True when a is a non-constant exact affine function of b.
  static bool exact_affine(const Vector& a, const Vector& b) {
    const Eigen::ArrayXd ac = a.array() - a.mean();
    const Eigen::ArrayXd bc = b.array() - b.mean();
    const double saa = (ac * ac).sum(), sbb = (bc * bc).sum();
    if (saa <= 0.0 || sbb <= 0.0) return false;
    const double sab = (ac * bc).sum();
    return sab * sab >= (1.0 - 1e-12) * saa * sbb;
  }

  Vector outcome_;
  Vector running_;
  double cutoff_ = 0.0;
  DesignMatrix covariates_;
  std::optional<std::vector<std::string>> unit_ids_;
};

enum class BandwidthMethod { IK, Fixed };

inline constexpr std::string_view to_string(BandwidthMethod m) { return m == BandwidthMethod::IK ? "IK" : "Fixed"; }

struct BandwidthResult {
  double h = 0.0;
  double b = 0.0;
  BandwidthMethod method = BandwidthMethod::Fixed;
  Eigen::Index n_left = 0;
  Eigen::Index n_right = 0;
};

/// Per-side counts of observations with |F - cutoff| <= h.
inline std::pair<Eigen::Index, Eigen::Index> check_positivity(const RddDataset& data, double h) {
  if (!(h > 0.0)) fail(ErrorCode::InvalidSpec, "bandwidth must be positive");
  Eigen::Index left = 0, right = 0;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    const double x = data.running()[i] - data.cutoff();
    if (std::abs(x) > h) continue;
    (x < 0.0 ? left : right) += 1;
  }
  return {left, right};
}

/// User-fixed bandwidth; the bias bandwidth defaults to 2h.
inline BandwidthResult fixed_bandwidth(const RddDataset& data, double h, std::optional<double> b = std::nullopt) {
  if (!(h > 0.0) || !std::isfinite(h)) fail(ErrorCode::InvalidSpec, "bandwidth must be positive and finite");
  BandwidthResult r;
  r.h = h;
  r.b = b.value_or(2.0 * h);
  if (!(r.b >= h)) fail(ErrorCode::InvalidSpec, "bias bandwidth must be at least h");
  r.method = BandwidthMethod::Fixed;
  std::tie(r.n_left, r.n_right) = check_positivity(data, h);
  return r;
}

namespace detail {

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

// Unweighted OLS coefficients of y on the given rows of a polynomial design;
// throws `code` when the design is rank deficient.
inline Vector poly_fit(const std::vector<Eigen::Index>& rows, const Vector& x, const Vector& y, int degree,
                       bool with_step, ErrorCode code) {
  const Eigen::Index cols = degree + 1 + (with_step ? 1 : 0);
  Matrix X(static_cast<Eigen::Index>(rows.size()), cols);
  Vector yy(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto i = rows[r];
    const auto rr = static_cast<Eigen::Index>(r);
    Eigen::Index c = 0;
    X(rr, c++) = 1.0;
    if (with_step) X(rr, c++) = x[i] >= 0.0 ? 1.0 : 0.0;
    for (int d = 1; d <= degree; ++d) X(rr, c++) = std::pow(x[i], d);
    yy[rr] = y[i];
  }
  try {
    return wls_fit(DesignMatrix(std::move(X)), yy, Vector::Ones(yy.size())).coefficients;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::RankDeficient) fail(code, std::string("pilot polynomial fit failed: ") + e.what());
    throw;
  }
}

}  // namespace detail

/// Plug-in MSE-optimal bandwidth for the boundary local-linear estimator:
/// uniform-window density and variance at the cutoff, a global cubic for the
/// third derivative, per-side local quadratics for the curvatures, and
/// regularisation terms; b is the mean of the two curvature pilot bandwidths
/// (at least h).
inline BandwidthResult ik_bandwidth(const RddDataset& data, KernelSpec kernel = {}) {
  const Eigen::Index n = data.n();
  const Vector x = data.centered_running();
  const Vector& y = data.outcome();
  Eigen::Index n_neg = 0;
  for (Eigen::Index i = 0; i < n; ++i) n_neg += x[i] < 0.0;
  const Eigen::Index n_pos = n - n_neg;
  if (n < 40 || n_neg < 20 || n_pos < 20) {
    fail(ErrorCode::TooFewObservations, "bandwidth selection needs n >= 40 and 20 per side (have " +
                                            std::to_string(n_neg) + " / " + std::to_string(n_pos) + ")");
  }
  const double nd = static_cast<double>(n);

  // Step 1: density and conditional variance at the cutoff.
  const double sd = std::sqrt((x.array() - x.mean()).square().sum() / (nd - 1.0));
  const double h1 = 1.84 * sd * std::pow(nd, -0.2);
  double sum_l = 0.0, sum_r = 0.0;
  Eigen::Index cnt_l = 0, cnt_r = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (x[i] < 0.0 && x[i] > -h1) { sum_l += y[i]; ++cnt_l; }
    if (x[i] >= 0.0 && x[i] < h1) { sum_r += y[i]; ++cnt_r; }
  }
  if (cnt_l == 0 || cnt_r == 0) fail(ErrorCode::DegeneratePilot, "empty variance window on one side of the cutoff");
  const double mean_l = sum_l / cnt_l, mean_r = sum_r / cnt_r;
  double ss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (x[i] < 0.0 && x[i] > -h1) ss += (y[i] - mean_l) * (y[i] - mean_l);
    if (x[i] >= 0.0 && x[i] < h1) ss += (y[i] - mean_r) * (y[i] - mean_r);
  }
  const double f = static_cast<double>(cnt_l + cnt_r) / (2.0 * nd * h1);
  const double sigma2 = ss / static_cast<double>(cnt_l + cnt_r);

  // Step 2: third derivative from a global cubic between the side medians.
  std::vector<double> neg, pos;
  for (Eigen::Index i = 0; i < n; ++i) (x[i] < 0.0 ? neg : pos).push_back(x[i]);
  const double med_neg = detail::median(neg), med_pos = detail::median(pos);
  std::vector<Eigen::Index> mid;
  for (Eigen::Index i = 0; i < n; ++i)
    if (x[i] >= med_neg && x[i] <= med_pos) mid.push_back(i);
  const Vector cubic = detail::poly_fit(mid, x, y, 3, true, ErrorCode::DegeneratePilot);
  const double m3 = 6.0 * cubic[4];
  const double shape = std::pow(sigma2 / (f * std::max(m3 * m3, 0.01)), 1.0 / 7.0);
  const double h2_pos = 3.56 * std::pow(static_cast<double>(n_pos), -1.0 / 7.0) * shape;
  const double h2_neg = 3.56 * std::pow(static_cast<double>(n_neg), -1.0 / 7.0) * shape;

  // Curvatures from local quadratics on each side.
  std::vector<Eigen::Index> right, left;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (x[i] >= 0.0 && x[i] <= h2_pos) right.push_back(i);
    if (x[i] < 0.0 && x[i] >= -h2_neg) left.push_back(i);
  }
  const double m2_pos = 2.0 * detail::poly_fit(right, x, y, 2, false, ErrorCode::DegeneratePilot)[2];
  const double m2_neg = 2.0 * detail::poly_fit(left, x, y, 2, false, ErrorCode::DegeneratePilot)[2];

  // Step 3: regularisation and combination.
  const double r_pos = 720.0 * sigma2 / (static_cast<double>(right.size()) * std::pow(h2_pos, 4));
  const double r_neg = 720.0 * sigma2 / (static_cast<double>(left.size()) * std::pow(h2_neg, 4));
  const double curv = (m2_pos - m2_neg) * (m2_pos - m2_neg) + r_pos + r_neg;
  const double h = kernel_constant(kernel) * std::pow(2.0 * sigma2 / (f * curv), 0.2) * std::pow(nd, -0.2);
  if (!(h > 0.0) || !std::isfinite(h)) fail(ErrorCode::DegeneratePilot, "plug-in bandwidth is not positive (zero outcome variance near the cutoff?)");

  BandwidthResult r;
  r.h = h;
  r.b = std::max(h, 0.5 * (h2_pos + h2_neg));
  r.method = BandwidthMethod::IK;
  std::tie(r.n_left, r.n_right) = check_positivity(data, h);
  return r;
}

enum class Estimator { Conventional, RobustBiasCorrected };

inline constexpr std::string_view to_string(Estimator e) {
  return e == Estimator::Conventional ? "Conventional" : "RobustBiasCorrected";
}

struct RddEstimate {
  double tau_hat = 0.0;
  double se = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  BandwidthResult bandwidth;
  std::vector<std::string> covariates_kept;
  std::vector<std::string> covariates_dropped;
  Estimator estimator = Estimator::Conventional;
  Eigen::Index n_effective = 0;
  /// Local-linear point estimate and its HC1 standard error; equal to
  /// tau_hat / se for the conventional estimator.
  double tau_conventional = 0.0;
  double se_conventional = 0.0;
  /// tau_conventional - tau_hat (zero for the conventional estimator).
  double bias_hat = 0.0;
};

/// Residual construction for the robust variance: HC1 regression residuals,
/// or nearest-neighbour residuals (each outcome against the mean of its
/// `nn_matches` closest running-variable neighbours on the same side).
enum class VceKind { HC1, NearestNeighbor };

inline constexpr std::string_view to_string(VceKind v) { return v == VceKind::HC1 ? "hc1" : "nn"; }

struct RobustOptions {
  VceKind vce = VceKind::HC1;
  int nn_matches = 3;
};

namespace detail {

// Nearest-neighbour residuals on sorted x; ties at equal distance are
// included symmetrically.
inline Vector nn_residuals(const Vector& x, const Vector& y, int matches) {
  const Eigen::Index n = x.size();
  Vector res(n);
  const Eigen::Index cap = std::min<Eigen::Index>(matches, n - 1);
  const double eps = std::sqrt(std::numeric_limits<double>::epsilon());
  for (Eigen::Index pos = 0; pos < n; ++pos) {
    Eigen::Index lpos = 0, rpos = 0;
    while (lpos + rpos < cap) {
      if (pos - lpos - 1 < 0) {
        ++rpos;
      } else if (pos + rpos + 1 >= n) {
        ++lpos;
      } else {
        const double dl = x[pos] - x[pos - lpos - 1];
        const double dr = x[pos + rpos + 1] - x[pos];
        const double tol = std::max(dl, dr) * eps;
        if (dl - dr > tol) {
          ++rpos;
        } else if (dr - dl > tol) {
          ++lpos;
        } else {
          ++rpos;
          ++lpos;
        }
      }
    }
    const Eigen::Index lo = pos - lpos, hi = pos + rpos + 1;
    const double j = static_cast<double>(hi - lo - 1);
    const double mean = (y.segment(lo, hi - lo).sum() - y[pos]) / j;
    res[pos] = std::sqrt(j / (j + 1.0)) * (y[pos] - mean);
  }
  return res;
}

inline void split_covariates(const RddDataset& data, const std::vector<std::string>& subset, RddEstimate& est) {
  data.covariate_indices(subset);
  est.covariates_kept = subset;
  for (const auto& name : data.covariates().column_names())
    if (std::find(subset.begin(), subset.end(), name) == subset.end()) est.covariates_dropped.push_back(name);
}

inline Vector window_weights(const Vector& x, double h, KernelSpec kernel) {
  Vector w(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) w[i] = kernel_weight(x[i] / h, kernel);
  return w;
}

inline void require_support(const Vector& x, const Vector& w) {
  Eigen::Index left = 0, right = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (!(w[i] > 0.0)) continue;
    (x[i] < 0.0 ? left : right) += 1;
  }
  if (left < kMinSideSupport || right < kMinSideSupport) {
    fail(ErrorCode::InsufficientSupport, "bandwidth window has " + std::to_string(left) + " / " +
                                             std::to_string(right) + " weighted observations per side (need " +
                                             std::to_string(kMinSideSupport) + ")");
  }
}

// [1, T, x, T*x, Z] on the centred running variable.
inline DesignMatrix rdd_design(const Vector& x, const DesignMatrix& Z) {
  const Eigen::Index n = x.size();
  Matrix m(n, 4 + Z.p());
  std::vector<std::string> names{"(intercept)", "(treatment)", "(running)", "(treatment_x_running)"};
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = x[i] >= 0.0 ? 1.0 : 0.0;
    m(i, 0) = 1.0;
    m(i, 1) = t;
    m(i, 2) = x[i];
    m(i, 3) = t * x[i];
  }
  m.rightCols(Z.p()) = Z.values();
  for (const auto& name : Z.column_names()) names.push_back(name);
  return DesignMatrix(std::move(m), std::move(names));
}

struct SideFit {
  Vector beta_p;      // local-linear coefficients at h
  Vector beta_bc;     // bias-corrected local-linear coefficients
  double v_cl = 0.0;  // conventional variance of the intercept
  double v_rb = 0.0;  // robust variance of the bias-corrected intercept
};

// One side of the robust bias-corrected local-polynomial estimator
// (p = 1, q = 2, HC1 residuals).
inline SideFit robust_side(const std::vector<double>& xs, const std::vector<double>& ys, double h, double b,
                           KernelSpec kernel, const RobustOptions& opt) {
  const double wmax = std::max(h, b);
  std::vector<Eigen::Index> keep;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double wi = kernel_weight(xs[i] / wmax, kernel);
    if (wi > 0.0) keep.push_back(static_cast<Eigen::Index>(i));
  }
  std::stable_sort(keep.begin(), keep.end(), [&](Eigen::Index a, Eigen::Index c) {
    return xs[static_cast<std::size_t>(a)] < xs[static_cast<std::size_t>(c)];
  });
  const auto n = static_cast<Eigen::Index>(keep.size());
  if (n <= 3) fail(ErrorCode::DegenerateBias, "too few observations for the local quadratic bias fit");
  Matrix Rq(n, 3);
  Vector y(n), wh(n), wb(n), u2(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double x = xs[static_cast<std::size_t>(keep[static_cast<std::size_t>(k)])];
    Rq(k, 0) = 1.0;
    Rq(k, 1) = x;
    Rq(k, 2) = x * x;
    y[k] = ys[static_cast<std::size_t>(keep[static_cast<std::size_t>(k)])];
    wh[k] = kernel_weight(x / h, kernel) / h;
    wb[k] = kernel_weight(x / b, kernel) / b;
    u2[k] = (x / h) * (x / h);
  }
  const Matrix Rp = Rq.leftCols(2);
  const Matrix RWp = wh.asDiagonal() * Rp;
  const Matrix Gp = Rp.transpose() * RWp;
  const Matrix Gq = Rq.transpose() * wb.asDiagonal() * Rq;
  const Eigen::FullPivLU<Matrix> lu_p(Gp), lu_q(Gq);
  if (!lu_p.isInvertible()) fail(ErrorCode::InsufficientSupport, "local-linear fit is singular on one side");
  if (!lu_q.isInvertible()) fail(ErrorCode::DegenerateBias, "local quadratic bias fit is singular on one side");
  const Matrix invGp = lu_p.inverse();
  const Matrix invGq = lu_q.inverse();

  const Vector L = RWp.transpose() * u2;
  const Vector m = (Rq * invGq.row(2).transpose()).cwiseProduct(wb);
  const Matrix Q = RWp - h * h * m * L.transpose();

  SideFit out;
  out.beta_p = invGp * (RWp.transpose() * y);
  out.beta_bc = invGp * (Q.transpose() * y);
  const Vector beta_q = invGq * (Rq.transpose() * wb.asDiagonal() * y);

  const double nd = static_cast<double>(n);
  Vector res_h, res_b;
  if (opt.vce == VceKind::NearestNeighbor) {
    res_h = res_b = nn_residuals(Rq.col(1), y, opt.nn_matches);
  } else {
    res_h = std::sqrt(nd / (nd - 2.0)) * (y - Rp * out.beta_p);
    res_b = std::sqrt(nd / (nd - 3.0)) * (y - Rq * beta_q);
  }
  const Matrix Sh = res_h.asDiagonal() * RWp;
  const Matrix Sb = res_b.asDiagonal() * Q;
  out.v_cl = (invGp * (Sh.transpose() * Sh) * invGp)(0, 0);
  out.v_rb = (invGp * (Sb.transpose() * Sb) * invGp)(0, 0);
  return out;
}

}  // namespace detail

/// Kernel-weighted local linear regression on [1, T, F - f, T (F - f), X]
/// at bandwidth h with HC1 standard errors.
inline RddEstimate llr_estimate(const RddDataset& data, const BandwidthResult& bw, KernelSpec kernel,
                                const std::vector<std::string>& covariate_subset) {
  if (!(bw.h > 0.0)) fail(ErrorCode::InvalidSpec, "bandwidth must be positive");
  RddEstimate est;
  detail::split_covariates(data, covariate_subset, est);
  const Vector x = data.centered_running();
  const Vector w = detail::window_weights(x, bw.h, kernel);
  detail::require_support(x, w);
  const DesignMatrix D = detail::rdd_design(x, data.covariates().select_columns(data.covariate_indices(covariate_subset)));
  const WlsFit fit = wls_fit(D, data.outcome(), w);
  const Vector se = hc_standard_errors(fit, D, w);
  est.tau_hat = est.tau_conventional = fit.coefficients[1];
  est.se = est.se_conventional = se[1];
  est.ci_low = est.tau_hat - kNormalQuantile975 * est.se;
  est.ci_high = est.tau_hat + kNormalQuantile975 * est.se;
  est.bandwidth = bw;
  est.estimator = Estimator::Conventional;
  est.n_effective = fit.n_effective;
  return est;
}

/// Robust bias-corrected estimate: local linear at h, curvature bias from
/// local quadratics at b, variance accounting for the bias estimate.
/// Covariates are partialled out with the coefficients of the pooled
/// local-linear fit at h, then the covariate-free procedure is applied.
inline RddEstimate robust_bias_corrected(const RddDataset& data, const BandwidthResult& bw, KernelSpec kernel,
                                         const std::vector<std::string>& covariate_subset,
                                         const RobustOptions& options = {}) {
  if (options.nn_matches < 1) fail(ErrorCode::InvalidSpec, "nearest-neighbour matches must be positive");
  if (!(bw.h > 0.0) || !(bw.b >= bw.h)) fail(ErrorCode::InvalidSpec, "need h > 0 and b >= h");
  RddEstimate est;
  detail::split_covariates(data, covariate_subset, est);
  const Vector x = data.centered_running();
  const Vector w = detail::window_weights(x, bw.h, kernel);
  detail::require_support(x, w);

  Vector y = data.outcome();
  if (!covariate_subset.empty()) {
    const DesignMatrix Z = data.covariates().select_columns(data.covariate_indices(covariate_subset));
    const WlsFit pooled = wls_fit(detail::rdd_design(x, Z), y, w);
    y -= Z.values() * pooled.coefficients.tail(Z.p());
  }

  std::vector<double> xl, yl, xr, yr;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (x[i] < 0.0) {
      xl.push_back(x[i]);
      yl.push_back(y[i]);
    } else {
      xr.push_back(x[i]);
      yr.push_back(y[i]);
    }
  }
  const detail::SideFit left = detail::robust_side(xl, yl, bw.h, bw.b, kernel, options);
  const detail::SideFit right = detail::robust_side(xr, yr, bw.h, bw.b, kernel, options);

  est.tau_conventional = right.beta_p[0] - left.beta_p[0];
  est.se_conventional = std::sqrt(left.v_cl + right.v_cl);
  est.tau_hat = right.beta_bc[0] - left.beta_bc[0];
  est.se = std::sqrt(left.v_rb + right.v_rb);
  est.bias_hat = est.tau_conventional - est.tau_hat;
  est.ci_low = est.tau_hat - kNormalQuantile975 * est.se;
  est.ci_high = est.tau_hat + kNormalQuantile975 * est.se;
  est.bandwidth = bw;
  est.estimator = Estimator::RobustBiasCorrected;
  est.n_effective = (w.array() > 0.0).count();
  return est;
}

}  // namespace ardd

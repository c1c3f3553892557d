#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <string>
#include <thread>
#include <vector>

#include "ardd/core_regression.hpp"
#include "ardd/error.hpp"
#include "ardd/pipeline.hpp"
#include "ardd/random.hpp"
#include "ardd/rdd.hpp"

namespace ardd {

/// Joint normal draw of covariates and running variable plus the outcome
/// equation Y = tau T + gamma F + delta T F + X beta + noise.
struct DgpSpec {
  Vector mu;
  Matrix sigma;
  double tau_true = 0.3;
  Vector beta_true;
  double gamma_true = 0.5;
  double delta_true = 0.0;
  double noise_sd = 1.0;
  Eigen::Index margin_index = 0;

  Eigen::Index n_covariates() const { return mu.size() - 1; }

  void validate() const {
    const Eigen::Index k = mu.size();
    if (k < 1) fail(ErrorCode::ConfigInvalid, "mu must have at least the running-variable entry");
    if (sigma.rows() != k || sigma.cols() != k) fail(ErrorCode::ConfigInvalid, "sigma must be square and match mu");
    if (beta_true.size() != k - 1) fail(ErrorCode::ConfigInvalid, "beta must have one entry per covariate");
    if (margin_index < 0 || margin_index >= k) fail(ErrorCode::ConfigInvalid, "margin index out of range");
    if (!mu.allFinite() || !sigma.allFinite() || !beta_true.allFinite() || !std::isfinite(tau_true) ||
        !std::isfinite(gamma_true) || !std::isfinite(delta_true))
      fail(ErrorCode::ConfigInvalid, "DGP parameters must be finite");
    if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd)) fail(ErrorCode::ConfigInvalid, "noise sd must be nonnegative");
    if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + sigma.cwiseAbs().maxCoeff()))
      fail(ErrorCode::ConfigInvalid, "sigma must be symmetric");
    const Vector lambda = Eigen::SelfAdjointEigenSolver<Matrix>(sigma, Eigen::EigenvaluesOnly).eigenvalues();
    const double top = std::max(lambda.maxCoeff(), 0.0);
    if (lambda.minCoeff() < -1e-8 * top || (top == 0.0 && lambda.minCoeff() < 0.0))
      fail(ErrorCode::NotPsd, "sigma is not positive semidefinite (min eigenvalue " + std::to_string(lambda.minCoeff()) + ")");
  }
};

/// p covariates with exchangeable correlation `rho`, running variable (last
/// column) correlated `rho_margin` with each covariate, unit variances, zero
/// means, null covariate effects.
inline DgpSpec default_dgp(Eigen::Index p = 7, double rho = 0.3, double rho_margin = 0.2) {
  DgpSpec d;
  d.mu = Vector::Zero(p + 1);
  d.sigma = Matrix::Constant(p + 1, p + 1, rho);
  d.sigma.row(p).setConstant(rho_margin);
  d.sigma.col(p).setConstant(rho_margin);
  d.sigma.diagonal().setOnes();
  d.beta_true = Vector::Zero(p);
  d.margin_index = p;
  return d;
}

/// n draws from N(mu, sigma) through the symmetric eigendecomposition;
/// eigenvalues within tolerance below zero are clamped.
inline Matrix mvn_sample(const Vector& mu, const Matrix& sigma, Eigen::Index n, std::uint64_t seed) {
  const Eigen::Index k = mu.size();
  if (sigma.rows() != k || sigma.cols() != k) fail(ErrorCode::DimensionMismatch, "sigma does not match mu");
  if (n < 1) fail(ErrorCode::InvalidSpec, "need at least one draw");
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(sigma);
  const Vector lambda = eig.eigenvalues();
  const double top = std::max(lambda.maxCoeff(), 0.0);
  if (lambda.minCoeff() < -1e-8 * top || (top == 0.0 && lambda.minCoeff() < 0.0))
    fail(ErrorCode::NotPsd, "covariance matrix is not positive semidefinite (min eigenvalue " + std::to_string(lambda.minCoeff()) + ")");
  const Matrix A = eig.eigenvectors() * lambda.cwiseMax(0.0).cwiseSqrt().asDiagonal();
  Rng rng(seed);
  Matrix z(k, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < k; ++j) z(j, i) = rng.normal();
  Matrix out = (A * z).transpose();
  out.rowwise() += mu.transpose();
  return out;
}

inline RddDataset generate_dataset(const DgpSpec& dgp, Eigen::Index n, std::uint64_t seed) {
  dgp.validate();
  const Matrix xi = mvn_sample(dgp.mu, dgp.sigma, n, derive_seed(seed, 0));
  const Eigen::Index p = dgp.n_covariates();
  Matrix cov(n, p);
  std::vector<std::string> names;
  for (Eigen::Index j = 0, c = 0; j <= p; ++j) {
    if (j == dgp.margin_index) continue;
    cov.col(c++) = xi.col(j);
    names.push_back("x" + std::to_string(c));
  }
  const Vector f = xi.col(dgp.margin_index);
  Rng noise(derive_seed(seed, 1));
  Vector y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = f[i] > 0.0 ? 1.0 : 0.0;
    y[i] = dgp.tau_true * t + dgp.gamma_true * f[i] + dgp.delta_true * t * f[i] + cov.row(i).dot(dgp.beta_true) +
           dgp.noise_sd * noise.normal();
  }
  return RddDataset(y, f, 0.0, DesignMatrix(cov, names));
}

struct McConfig {
  DgpSpec dgp = default_dgp();
  Eigen::Index n_obs = 100;
  int n_reps = 2000;
  PipelineConfig pipeline{};
  std::uint64_t master_seed = 0;
  /// 0 = hardware concurrency. Never affects results.
  unsigned threads = 0;

  void validate() const {
    dgp.validate();
    if (n_reps < 1) fail(ErrorCode::ConfigInvalid, "need at least one replication");
    if (n_obs < 40) fail(ErrorCode::ConfigInvalid, "need at least 40 observations per replication");
    pipeline.validate();
  }
};

struct RepRecord {
  int rep = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double tau_hat = 0.0;
  double se = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double bandwidth = 0.0;
  bool covered = false;
  double abs_error = 0.0;
  double signed_error = 0.0;
  int n_kept = 0;
  Eigen::Index n_effective = 0;
};

struct SimulationSummary {
  /// Mean |tau_hat - tau_true| over successful replications.
  double mean_bias = 0.0;
  /// Mean tau_hat - tau_true.
  double mean_signed_bias = 0.0;
  double coverage = 0.0;
  double mean_tau = 0.0;
  double mean_bandwidth = 0.0;
  double mean_se = 0.0;
  double mean_kept = 0.0;
  int n_reps = 0;
  int n_failed = 0;
  std::vector<RepRecord> per_rep;
};

struct MonteCarloResult {
  SimulationSummary adaptive;
  SimulationSummary conventional;
};

namespace detail {

inline RepRecord to_record(int rep, std::uint64_t seed, const RddEstimate& e, double tau_true) {
  RepRecord r;
  r.rep = rep;
  r.seed = seed;
  r.ok = true;
  r.tau_hat = e.tau_hat;
  r.se = e.se;
  r.ci_low = e.ci_low;
  r.ci_high = e.ci_high;
  r.bandwidth = e.bandwidth.h;
  r.covered = e.ci_low <= tau_true && tau_true <= e.ci_high;
  r.abs_error = std::abs(e.tau_hat - tau_true);
  r.signed_error = e.tau_hat - tau_true;
  r.n_kept = static_cast<int>(e.covariates_kept.size());
  r.n_effective = e.n_effective;
  return r;
}

inline SimulationSummary summarise(std::vector<RepRecord> recs) {
  SimulationSummary s;
  s.n_reps = static_cast<int>(recs.size());
  int used = 0, covered = 0;
  for (const auto& r : recs) {
    if (!r.ok) {
      ++s.n_failed;
      continue;
    }
    ++used;
    covered += r.covered;
    s.mean_bias += r.abs_error;
    s.mean_signed_bias += r.signed_error;
    s.mean_tau += r.tau_hat;
    s.mean_bandwidth += r.bandwidth;
    s.mean_se += r.se;
    s.mean_kept += r.n_kept;
  }
  if (used == 0) fail(ErrorCode::AllRepsFailed, "every replication failed" + (recs.empty() ? std::string() : ": " + recs.front().error));
  const double u = used;
  s.mean_bias /= u;
  s.mean_signed_bias /= u;
  s.mean_tau /= u;
  s.mean_bandwidth /= u;
  s.mean_se /= u;
  s.mean_kept /= u;
  s.coverage = covered / u;
  s.per_rep = std::move(recs);
  return s;
}

/// Runs body(i) for i in [0, count) over a thread pool.
template <class Body>
void parallel_for(int count, unsigned threads, Body&& body) {
  unsigned t = threads ? threads : std::max(1u, std::thread::hardware_concurrency());
  t = std::min<unsigned>(t, static_cast<unsigned>(std::max(count, 1)));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < count; i = next++) body(i);
  };
  if (t <= 1) {
    worker();
    return;
  }
  std::vector<std::thread> pool;
  for (unsigned k = 0; k < t; ++k) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

}  // namespace detail

/// Both arms on identical datasets; replication s uses derive_seed(master, s).
/// Failed replications are counted per arm and excluded from that arm's means.
inline MonteCarloResult run_monte_carlo(const McConfig& config) {
  config.validate();
  const int reps = config.n_reps;
  std::vector<RepRecord> adaptive(static_cast<std::size_t>(reps)), conventional(static_cast<std::size_t>(reps));
  detail::parallel_for(reps, config.threads, [&](int s) {
    const std::uint64_t seed = derive_seed(config.master_seed, static_cast<std::uint64_t>(s));
    auto& a = adaptive[static_cast<std::size_t>(s)];
    auto& c = conventional[static_cast<std::size_t>(s)];
    a.rep = c.rep = s;
    a.seed = c.seed = seed;
    try {
      const RddDataset data = generate_dataset(config.dgp, config.n_obs, seed);
      try {
        a = detail::to_record(s, seed, run_pipeline(data, config.pipeline).estimate, config.dgp.tau_true);
      } catch (const Error& e) {
        a.error = e.what();
      }
      try {
        c = detail::to_record(s, seed, run_conventional(data, config.pipeline).estimate, config.dgp.tau_true);
      } catch (const Error& e) {
        c.error = e.what();
      }
    } catch (const Error& e) {
      a.error = c.error = e.what();
    }
  });
  return {detail::summarise(std::move(adaptive)), detail::summarise(std::move(conventional))};
}

struct SweepRow {
  Eigen::Index n = 0;
  SimulationSummary adaptive;
  SimulationSummary conventional;
};

inline std::vector<SweepRow> sweep_sample_size(const McConfig& config, const std::vector<Eigen::Index>& n_grid) {
  if (n_grid.empty()) fail(ErrorCode::ConfigInvalid, "sample-size grid is empty");
  for (std::size_t i = 0; i < n_grid.size(); ++i) {
    if (n_grid[i] < 40) fail(ErrorCode::ConfigInvalid, "sample sizes must be at least 40");
    if (i > 0 && n_grid[i] <= n_grid[i - 1]) fail(ErrorCode::ConfigInvalid, "sample-size grid must be strictly ascending");
  }
  std::vector<SweepRow> out;
  for (Eigen::Index n : n_grid) {
    McConfig c = config;
    c.n_obs = n;
    auto r = run_monte_carlo(c);
    out.push_back({n, std::move(r.adaptive), std::move(r.conventional)});
  }
  return out;
}

}  // namespace ardd

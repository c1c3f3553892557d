#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ardd/core_regression.hpp"
#include "ardd/error.hpp"
#include "ardd/penalized.hpp"
#include "ardd/rdd.hpp"

namespace ardd {

enum class BandwidthMode { Variable, Fixed };
enum class PilotSample { FullSample, IkNoCovariates };

inline constexpr std::string_view to_string(BandwidthMode m) { return m == BandwidthMode::Variable ? "variable" : "fixed"; }
inline constexpr std::string_view to_string(PilotSample s) {
  return s == PilotSample::FullSample ? "full-sample" : "ik-no-covariates";
}

struct PipelineConfig {
  /// Fixed gamma unless gamma_cross_validated, in which case the candidates
  /// are searched by cross-validation.
  double gamma = 2.0;
  bool gamma_cross_validated = false;
  std::vector<double> gamma_candidates{0.5, 1.0, 2.0};
  BandwidthMode bandwidth_mode = BandwidthMode::Variable;
  /// Used when bandwidth_mode == Fixed.
  double fixed_h = 0.0;
  KernelSpec kernel{};
  /// Requested folds; reduced to max(5, n/10) when the selection sample has
  /// fewer than 100 rows.
  int k_folds = 10;
  std::uint64_t seed = 0;
  PilotSample pilot_sample = PilotSample::IkNoCovariates;
  /// Covariates exempt from the penalty (e.g. whole fixed-effect groups).
  std::vector<std::string> protected_covariates;
  std::size_t lambda_grid_size = 100;
  /// Variance construction for the final robust estimate; nearest-neighbour
  /// residuals with three matches by default.
  RobustOptions robust{VceKind::NearestNeighbor, 3};

  void validate() const {
    if (bandwidth_mode == BandwidthMode::Fixed && !(fixed_h > 0.0 && std::isfinite(fixed_h)))
      fail(ErrorCode::ConfigInvalid, "fixed bandwidth must be positive");
    if (k_folds < 2) fail(ErrorCode::ConfigInvalid, "need at least 2 folds");
    if (lambda_grid_size < 1) fail(ErrorCode::ConfigInvalid, "lambda grid must be nonempty");
    if (robust.nn_matches < 1) fail(ErrorCode::ConfigInvalid, "nearest-neighbour matches must be positive");
    if (gamma_cross_validated) {
      if (gamma_candidates.empty()) fail(ErrorCode::ConfigInvalid, "no gamma candidates");
      for (double g : gamma_candidates)
        if (!(g > 0.0)) fail(ErrorCode::ConfigInvalid, "gamma candidates must be positive");
    } else if (!(gamma > 0.0) || !std::isfinite(gamma)) {
      fail(ErrorCode::ConfigInvalid, "gamma must be positive");
    }
  }
};

struct PilotSummary {
  std::vector<std::string> names;
  Vector coefficients;
  Eigen::Index n_effective = 0;
  double sigma2_hat = 0.0;
  /// Bandwidth defining the pilot sample (0 for the full sample).
  double window_h = 0.0;
};

struct SelectionSummary {
  std::vector<std::string> names;
  Vector coefficients;
  Vector penalty_weights;
  double lambda = 0.0;
  double gamma = 0.0;
  int n_iter = 0;
  bool converged = true;
  int k_folds = 0;
};

struct AuditEntry {
  std::string step;
  std::string detail;
  std::uint64_t input_hash = 0;
  std::uint64_t output_hash = 0;
  std::uint64_t chain_hash = 0;
};

struct PipelineResult {
  std::string arm;  // "adaptive" or "conventional"
  PipelineConfig config;
  RddEstimate estimate;
  std::optional<PilotSummary> pilot;
  std::optional<SelectionSummary> selection;
  std::optional<CvRecord> lambda_record;
  double h_initial = 0.0;
  double h_final = 0.0;
  std::vector<AuditEntry> audit;
};

namespace detail {

/// 64-bit FNV-1a over raw bytes.
class Fnv1a {
 public:
  Fnv1a& bytes(const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h_ ^= p[i];
      h_ *= 0x100000001b3ULL;
    }
    return *this;
  }
  Fnv1a& add(double v) { return bytes(&v, sizeof v); }
  Fnv1a& add(std::uint64_t v) { return bytes(&v, sizeof v); }
  Fnv1a& add(std::string_view s) {
    add(static_cast<std::uint64_t>(s.size()));
    return bytes(s.data(), s.size());
  }
  Fnv1a& add(const Eigen::MatrixXd& m) {
    add(static_cast<std::uint64_t>(m.rows())).add(static_cast<std::uint64_t>(m.cols()));
    return bytes(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
  }
  Fnv1a& add(const Vector& v) { return add(Eigen::MatrixXd(v)); }
  Fnv1a& add(const std::vector<std::string>& names) {
    add(static_cast<std::uint64_t>(names.size()));
    for (const auto& s : names) add(std::string_view(s));
    return *this;
  }
  std::uint64_t value() const { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

inline std::uint64_t hash_dataset(const RddDataset& d) {
  return Fnv1a()
      .add(d.outcome())
      .add(d.running())
      .add(d.cutoff())
      .add(d.covariates().values())
      .add(d.covariates().column_names())
      .value();
}

inline std::uint64_t hash_config(const PipelineConfig& c) {
  Fnv1a h;
  h.add(c.gamma).add(static_cast<std::uint64_t>(c.gamma_cross_validated));
  for (double g : c.gamma_candidates) h.add(g);
  h.add(static_cast<std::uint64_t>(c.bandwidth_mode)).add(c.fixed_h).add(static_cast<std::uint64_t>(c.kernel.kind));
  h.add(static_cast<std::uint64_t>(c.k_folds)).add(c.seed).add(static_cast<std::uint64_t>(c.pilot_sample));
  h.add(c.protected_covariates).add(static_cast<std::uint64_t>(c.lambda_grid_size));
  h.add(static_cast<std::uint64_t>(c.robust.vce)).add(static_cast<std::uint64_t>(c.robust.nn_matches));
  return h.value();
}

inline std::uint64_t hash_estimate(const RddEstimate& e) {
  return Fnv1a()
      .add(e.tau_hat)
      .add(e.se)
      .add(e.ci_low)
      .add(e.ci_high)
      .add(e.bandwidth.h)
      .add(e.bandwidth.b)
      .add(e.covariates_kept)
      .add(e.covariates_dropped)
      .add(static_cast<std::uint64_t>(e.n_effective))
      .value();
}

inline std::uint64_t chain(std::uint64_t prev, const AuditEntry& e) {
  return Fnv1a().add(prev).add(std::string_view(e.step)).add(std::string_view(e.detail)).add(e.input_hash).add(e.output_hash).value();
}

class AuditLog {
 public:
  explicit AuditLog(std::vector<AuditEntry>& entries) : entries_(entries) {}
  void record(std::string step, std::string detail, std::uint64_t input, std::uint64_t output) {
    AuditEntry e{std::move(step), std::move(detail), input, output, 0};
    e.chain_hash = chain(entries_.empty() ? 0 : entries_.back().chain_hash, e);
    entries_.push_back(std::move(e));
  }

 private:
  std::vector<AuditEntry>& entries_;
};

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
  return s;
}

// Y minus the covariate part of a full-sample OLS of Y on
// [1, T, F - f, T (F - f), X_subset].
inline Vector partial_out(const RddDataset& data, const std::vector<std::string>& subset) {
  if (subset.empty()) return data.outcome();
  const DesignMatrix Z = data.covariates().select_columns(data.covariate_indices(subset));
  const WlsFit fit = wls_fit(rdd_design(data.centered_running(), Z), data.outcome(), Vector::Ones(data.n()));
  return data.outcome() - Z.values() * fit.coefficients.tail(Z.p());
}

inline BandwidthResult configured_bandwidth(const RddDataset& data, const PipelineConfig& cfg,
                                            const std::vector<std::string>& partial_set) {
  if (cfg.bandwidth_mode == BandwidthMode::Fixed) return fixed_bandwidth(data, cfg.fixed_h);
  return ik_bandwidth(data.with_outcome(partial_out(data, partial_set)), cfg.kernel);
}

inline int effective_folds(int requested, Eigen::Index n) {
  if (n >= 100) return requested;
  return std::min(requested, std::max(5, static_cast<int>(n / 10)));
}

inline std::string bandwidth_detail(const BandwidthResult& bw) {
  return std::string("method=") + std::string(to_string(bw.method)) + " h=" + fmt(bw.h) + " b=" + fmt(bw.b) +
         " n_left=" + std::to_string(bw.n_left) + " n_right=" + std::to_string(bw.n_right);
}

inline void begin_audit(AuditLog& log, const RddDataset& data, const PipelineConfig& cfg, std::string_view arm) {
  const std::uint64_t dh = hash_dataset(data);
  log.record("input", std::string("arm=") + std::string(arm) + " n=" + std::to_string(data.n()) + " cutoff=" + fmt(data.cutoff()) +
                          " covariates=" + join(data.covariates().column_names()),
             dh, hash_config(cfg));
}

inline void finish(PipelineResult& res, AuditLog& log, const std::vector<std::string>& subset, const RddDataset& data,
                   const BandwidthResult& bw, std::uint64_t input_hash) {
  res.estimate = robust_bias_corrected(data, bw, res.config.kernel, subset, res.config.robust);
  log.record("estimate",
             std::string("robust bias-corrected; kept=") + join(res.estimate.covariates_kept) +
                 " tau=" + fmt(res.estimate.tau_hat) + " se=" + fmt(res.estimate.se),
             input_hash, hash_estimate(res.estimate));
}

}  // namespace detail

/// Four-step principled estimation: researcher covariate set, adaptive-lasso
/// selection on a pilot sample with the design terms protected, pruning with
/// an optional bandwidth update, and robust bias-corrected estimation.
inline PipelineResult run_pipeline(const RddDataset& data, const PipelineConfig& config) {
  config.validate();
  PipelineResult res;
  res.arm = "adaptive";
  res.config = config;
  detail::AuditLog log(res.audit);
  detail::begin_audit(log, data, config, res.arm);

  const auto& all_names = data.covariates().column_names();
  const auto protected_idx = data.covariate_indices(config.protected_covariates);
  log.record("step1_covariates", "researcher set=" + detail::join(all_names) + " protected=" + detail::join(config.protected_covariates),
             detail::hash_dataset(data), detail::Fnv1a().add(all_names).value());

  if (all_names.empty()) {
    const BandwidthResult bw = detail::configured_bandwidth(data, config, {});
    res.h_initial = res.h_final = bw.h;
    log.record("step2_selection", "no covariates supplied: selection skipped, plain robust estimation", 0, 0);
    log.record("step3_bandwidth", detail::bandwidth_detail(bw), 0, detail::Fnv1a().add(bw.h).add(bw.b).value());
    detail::finish(res, log, {}, data, bw, res.audit.back().chain_hash);
    return res;
  }

  // Step 2: pilot sample and adaptive-lasso selection.
  const Vector x = data.centered_running();
  Vector w = Vector::Ones(data.n());
  double pilot_h = 0.0;
  if (config.pilot_sample == PilotSample::IkNoCovariates) {
    pilot_h = ik_bandwidth(data, config.kernel).h;
    w = detail::window_weights(x, pilot_h, config.kernel);
  }
  res.h_initial = config.bandwidth_mode == BandwidthMode::Fixed ? config.fixed_h : pilot_h;
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < data.n(); ++i)
    if (w[i] > 0.0) rows.push_back(i);
  const RddDataset& d = data;
  const Eigen::Index ns = static_cast<Eigen::Index>(rows.size());
  Vector ys(ns), ws(ns), xs(ns);
  for (Eigen::Index r = 0; r < ns; ++r) {
    ys[r] = d.outcome()[rows[static_cast<std::size_t>(r)]];
    ws[r] = w[rows[static_cast<std::size_t>(r)]];
    xs[r] = x[rows[static_cast<std::size_t>(r)]];
  }
  const DesignMatrix Zs = d.covariates().select_rows(rows);

  // Covariates constant on the pilot sample carry no information there; they
  // are dropped as if their pilot coefficient were zero.
  std::vector<Eigen::Index> active;
  std::vector<std::string> constant_dropped;
  for (Eigen::Index j = 0; j < Zs.p(); ++j) {
    const auto col = Zs.values().col(j);
    const bool is_protected = std::find(protected_idx.begin(), protected_idx.end(), j) != protected_idx.end();
    if (!is_protected && ns > 0 && (col.array() == col[0]).all())
      constant_dropped.push_back(all_names[static_cast<std::size_t>(j)]);
    else
      active.push_back(j);
  }
  const DesignMatrix Za = Zs.select_columns(active);
  const DesignMatrix X = detail::rdd_design(xs, Za);

  std::vector<Index> unpenalized{0, 1, 2, 3};
  for (std::size_t a = 0; a < active.size(); ++a)
    if (std::find(protected_idx.begin(), protected_idx.end(), active[a]) != protected_idx.end())
      unpenalized.push_back(4 + static_cast<Index>(a));

  WlsFit pilot;
  try {
    pilot = wls_fit(X, ys, ws);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::RankDeficient) throw;
    fail(ErrorCode::PilotRankDeficient, std::string("full covariate model is singular on the pilot sample (") +
                                            std::to_string(ns) + " rows): " + e.what());
  }
  res.pilot = PilotSummary{X.column_names(), pilot.coefficients, pilot.n_effective, pilot.sigma2_hat, pilot_h};
  log.record("step2_pilot",
             std::string("sample=") + std::string(to_string(config.pilot_sample)) + " window_h=" + detail::fmt(pilot_h) +
                 " rows=" + std::to_string(ns) + " constant_dropped=" + detail::join(constant_dropped),
             res.audit.back().chain_hash, detail::Fnv1a().add(pilot.coefficients).value());

  std::vector<std::string> kept, dropped = constant_dropped;
  const bool any_penalized = static_cast<Index>(unpenalized.size()) < X.p();
  if (any_penalized) {
    const int k = detail::effective_folds(config.k_folds, ns);
    PenalizedOptions opt;
    PenaltySpec spec = PenaltySpec::uniform(PenaltyKind::AdaptiveLasso, X.p(), 0.0, unpenalized);
    double gamma = config.gamma;
    CvRecord rec;
    if (config.gamma_cross_validated) {
      GammaSelection sel = cv_select_gamma(X, ys, ws, unpenalized, config.gamma_candidates, k, config.lambda_grid_size, config.seed);
      gamma = sel.gamma;
      spec = PenaltySpec(PenaltyKind::AdaptiveLasso, 0.0, sel.weights, unpenalized);
      rec = std::move(sel.record);
    } else {
      spec = PenaltySpec(PenaltyKind::AdaptiveLasso, 0.0,
                         adaptive_weights(standardized_pilot(X, ys, ws, unpenalized), gamma, unpenalized), unpenalized);
      opt.fold_pilot_gamma = gamma;
      rec = cv_select_lambda(X, ys, ws, spec, k, config.lambda_grid_size, config.seed, opt);
    }
    const PenalizedFit fit = fit_penalized(X, ys, ws, spec.with_lambda(rec.lambda_min));
    res.selection = SelectionSummary{X.column_names(), fit.coefficients, spec.weights(), rec.lambda_min, gamma,
                                     fit.n_iter, fit.converged, k};
    res.lambda_record = rec;
    for (std::size_t a = 0; a < active.size(); ++a) {
      const auto col = 4 + static_cast<Index>(a);
      const auto& name = all_names[static_cast<std::size_t>(active[a])];
      (spec.is_unpenalized(col) || fit.coefficients[col] != 0.0 ? kept : dropped).push_back(name);
    }
    log.record("step2_selection",
               "gamma=" + detail::fmt(gamma) + " lambda=" + detail::fmt(rec.lambda_min) + " folds=" + std::to_string(k) +
                   " grid=" + std::to_string(rec.lambda_grid.size()) + " seed=" + std::to_string(config.seed),
               res.audit.back().chain_hash, detail::Fnv1a().add(fit.coefficients).add(spec.weights()).value());
  } else {
    for (Eigen::Index j : active) kept.push_back(all_names[static_cast<std::size_t>(j)]);
    log.record("step2_selection", "no penalized covariates remain: selection skipped", res.audit.back().chain_hash, 0);
  }

  // Keep the researcher's column order in the final model.
  std::vector<std::string> kept_ordered;
  for (const auto& name : all_names)
    if (std::find(kept.begin(), kept.end(), name) != kept.end()) kept_ordered.push_back(name);

  // Step 3: prune and update the bandwidth.
  const BandwidthResult bw = detail::configured_bandwidth(data, config, kept_ordered);
  res.h_final = bw.h;
  log.record("step3_bandwidth", "kept=" + detail::join(kept_ordered) + " dropped=" + detail::join(dropped) + " " + detail::bandwidth_detail(bw),
             res.audit.back().chain_hash, detail::Fnv1a().add(bw.h).add(bw.b).add(kept_ordered).value());

  // Step 4: robust estimation on the pruned model.
  detail::finish(res, log, kept_ordered, data, bw, res.audit.back().chain_hash);
  return res;
}

/// Comparison arm: the full researcher model at the configured bandwidth
/// (plug-in on the outcome net of all covariates), no selection.
inline PipelineResult run_conventional(const RddDataset& data, const PipelineConfig& config) {
  config.validate();
  PipelineResult res;
  res.arm = "conventional";
  res.config = config;
  detail::AuditLog log(res.audit);
  detail::begin_audit(log, data, config, res.arm);
  const auto& names = data.covariates().column_names();
  const BandwidthResult bw = detail::configured_bandwidth(data, config, names);
  res.h_initial = res.h_final = bw.h;
  log.record("step3_bandwidth", "full model " + detail::bandwidth_detail(bw), res.audit.back().chain_hash,
             detail::Fnv1a().add(bw.h).add(bw.b).add(names).value());
  detail::finish(res, log, names, data, bw, res.audit.back().chain_hash);
  return res;
}

/// True when every chain hash follows from its predecessor and entry.
inline bool verify_audit(const std::vector<AuditEntry>& audit) {
  std::uint64_t prev = 0;
  for (const auto& e : audit) {
    if (detail::chain(prev, e) != e.chain_hash) return false;
    prev = e.chain_hash;
  }
  return true;
}

/// Re-runs the recorded arm with the recorded configuration and checks that
/// the dataset matches the logged input and the new log reproduces the old
/// one entry for entry.
inline bool replay_matches(const RddDataset& data, const PipelineResult& recorded) {
  if (recorded.audit.empty() || !verify_audit(recorded.audit)) return false;
  if (recorded.audit.front().input_hash != detail::hash_dataset(data)) return false;
  if (recorded.audit.front().output_hash != detail::hash_config(recorded.config)) return false;
  const PipelineResult again = recorded.arm == "conventional" ? run_conventional(data, recorded.config)
                                                              : run_pipeline(data, recorded.config);
  if (again.audit.size() != recorded.audit.size()) return false;
  for (std::size_t i = 0; i < again.audit.size(); ++i)
    if (again.audit[i].chain_hash != recorded.audit[i].chain_hash) return false;
  return true;
}

}  // namespace ardd

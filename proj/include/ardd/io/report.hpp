#pragma once

#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "ardd/io/csv.hpp"
#include "ardd/io/dgp_file.hpp"
#include "ardd/pipeline.hpp"
#include "ardd/sim.hpp"

#ifndef ARDD_VERSION
#define ARDD_VERSION "0.0.0"
#endif

namespace ardd::io {

using json = nlohmann::ordered_json;

inline constexpr const char* kVersion = ARDD_VERSION;

/// Covariate choice for dataset ingestion.
struct ColumnSpec {
  std::string outcome;
  std::string running;
  double cutoff = 0.0;
  /// Empty with all_covariates = true: every remaining column.
  std::vector<std::string> covariates;
  bool all_covariates = true;
};

inline RddDataset dataset_from_table(const CsvTable& t, const ColumnSpec& spec) {
  const Vector y = t.column(spec.outcome);
  const Vector f = t.column(spec.running);
  std::vector<std::string> names = spec.covariates;
  if (spec.all_covariates) {
    names.clear();
    for (const auto& h : t.header)
      if (h != spec.outcome && h != spec.running) names.push_back(h);
  }
  Matrix z(t.rows(), static_cast<Eigen::Index>(names.size()));
  for (std::size_t j = 0; j < names.size(); ++j) {
    if (names[j] == spec.outcome || names[j] == spec.running)
      fail(ErrorCode::InvalidDataset, "column '" + names[j] + "' cannot be both a covariate and the outcome or running variable");
    z.col(static_cast<Eigen::Index>(j)) = t.column(names[j]);
  }
  return RddDataset(y, f, spec.cutoff, DesignMatrix(z, names));
}

/// Writes outcome, running variable and covariates at full precision so the
/// file re-ingests to the identical dataset.
inline void write_dataset_csv(std::ostream& out, const RddDataset& d, const std::string& outcome = "y",
                              const std::string& running = "running") {
  out << outcome << "," << running;
  for (const auto& n : d.covariates().column_names()) out << "," << n;
  out << "\n";
  for (Eigen::Index i = 0; i < d.n(); ++i) {
    out << format_exact(d.outcome()[i]) << "," << format_exact(d.running()[i]);
    for (Eigen::Index j = 0; j < d.covariates().p(); ++j) out << "," << format_exact(d.covariates().values()(i, j));
    out << "\n";
  }
}

inline std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// FNV-1a digest of a file's bytes.
inline std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::InvalidDataset, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();
  return "fnv1a64:" + hex64(ardd::detail::Fnv1a().bytes(bytes.data(), bytes.size()).value());
}

inline std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline json to_json(const Vector& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

inline json to_json(const PipelineConfig& c) {
  return {{"gamma", c.gamma},
          {"gamma_cross_validated", c.gamma_cross_validated},
          {"gamma_candidates", c.gamma_candidates},
          {"bandwidth_mode", std::string(to_string(c.bandwidth_mode))},
          {"fixed_h", c.fixed_h},
          {"kernel", std::string(to_string(c.kernel.kind))},
          {"k_folds", c.k_folds},
          {"seed", c.seed},
          {"pilot_sample", std::string(to_string(c.pilot_sample))},
          {"protected_covariates", c.protected_covariates},
          {"lambda_grid_size", c.lambda_grid_size},
          {"lambda_rule", "lambda_min"},
          {"robust_vce", std::string(to_string(c.robust.vce))},
          {"nn_matches", c.robust.nn_matches},
          {"confidence_level", 0.95}};
}

inline json to_json(const BandwidthResult& b) {
  return {{"h", b.h}, {"b", b.b}, {"method", std::string(to_string(b.method))}, {"n_left", b.n_left}, {"n_right", b.n_right}};
}

inline json to_json(const RddEstimate& e) {
  return {{"tau_hat", e.tau_hat},
          {"se", e.se},
          {"ci_low", e.ci_low},
          {"ci_high", e.ci_high},
          {"estimator", std::string(to_string(e.estimator))},
          {"tau_conventional", e.tau_conventional},
          {"se_conventional", e.se_conventional},
          {"bias_hat", e.bias_hat},
          {"n_effective", e.n_effective},
          {"bandwidth", to_json(e.bandwidth)},
          {"covariates_kept", e.covariates_kept},
          {"covariates_dropped", e.covariates_dropped}};
}

inline json to_json(const PipelineResult& r) {
  json j = {{"arm", r.arm}, {"estimate", to_json(r.estimate)}, {"h_initial", r.h_initial}, {"h_final", r.h_final}};
  if (r.pilot) {
    j["pilot"] = {{"names", r.pilot->names},
                  {"coefficients", to_json(r.pilot->coefficients)},
                  {"n_effective", r.pilot->n_effective},
                  {"sigma2_hat", r.pilot->sigma2_hat},
                  {"window_h", r.pilot->window_h}};
  } else {
    j["pilot"] = nullptr;
  }
  if (r.selection) {
    j["selection"] = {{"names", r.selection->names},
                      {"coefficients", to_json(r.selection->coefficients)},
                      {"penalty_weights", to_json(r.selection->penalty_weights)},
                      {"lambda", r.selection->lambda},
                      {"gamma", r.selection->gamma},
                      {"n_iter", r.selection->n_iter},
                      {"converged", r.selection->converged},
                      {"k_folds", r.selection->k_folds}};
  } else {
    j["selection"] = nullptr;
  }
  if (r.lambda_record) {
    j["lambda_record"] = {{"lambda_grid", r.lambda_record->lambda_grid},
                          {"cv_mse", r.lambda_record->cv_mse},
                          {"cv_se", r.lambda_record->cv_se},
                          {"lambda_min", r.lambda_record->lambda_min},
                          {"index_min", r.lambda_record->index_min},
                          {"k", r.lambda_record->k}};
  } else {
    j["lambda_record"] = nullptr;
  }
  json audit = json::array();
  for (const auto& a : r.audit) {
    audit.push_back({{"step", a.step},
                     {"detail", a.detail},
                     {"input_hash", hex64(a.input_hash)},
                     {"output_hash", hex64(a.output_hash)},
                     {"chain_hash", hex64(a.chain_hash)}});
  }
  j["audit"] = audit;
  j["audit_verified"] = verify_audit(r.audit);
  return j;
}

inline json to_json(const DgpSpec& d) {
  json sigma = json::array();
  for (Eigen::Index i = 0; i < d.sigma.rows(); ++i) sigma.push_back(to_json(Vector(d.sigma.row(i).transpose())));
  return {{"mu", to_json(d.mu)},       {"sigma", sigma},           {"tau_true", d.tau_true},
          {"beta", to_json(d.beta_true)}, {"gamma_true", d.gamma_true}, {"delta_true", d.delta_true},
          {"noise_sd", d.noise_sd},    {"margin_index", d.margin_index}};
}

struct EstimateInputs {
  std::string data_path;
  std::string data_digest;
  ColumnSpec columns;
  Eigen::Index n = 0;
};

inline json estimate_report(const EstimateInputs& in, const PipelineConfig& cfg, const std::vector<PipelineResult>& results,
                            const std::string& timestamp) {
  json cols = {{"outcome", in.columns.outcome},
               {"running", in.columns.running},
               {"cutoff", in.columns.cutoff},
               {"covariates", in.columns.covariates}};
  json arms = json::array();
  for (const auto& r : results) arms.push_back(to_json(r));
  return {{"software", "ardd"},
          {"version", kVersion},
          {"generated_at", timestamp},
          {"input", {{"path", in.data_path}, {"digest", in.data_digest}, {"n", in.n}, {"columns", cols}}},
          {"config", to_json(cfg)},
          {"results", arms}};
}

// CSV outputs: numbers at 12 significant digits.

inline void write_estimate_csv(std::ostream& out, const std::vector<PipelineResult>& results) {
  auto names = [](const std::vector<std::string>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ";" : "") + v[i];
    return s;
  };
  out << "arm,tau_hat,se,ci_low,ci_high,tau_conventional,se_conventional,h,b,n_effective,covariates_kept,covariates_dropped\n";
  for (const auto& r : results) {
    const auto& e = r.estimate;
    out << r.arm << "," << format_number(e.tau_hat) << "," << format_number(e.se) << "," << format_number(e.ci_low) << ","
        << format_number(e.ci_high) << "," << format_number(e.tau_conventional) << "," << format_number(e.se_conventional) << ","
        << format_number(e.bandwidth.h) << "," << format_number(e.bandwidth.b) << "," << e.n_effective << "," << names(e.covariates_kept)
        << "," << names(e.covariates_dropped) << "\n";
  }
}

inline const char* kSummaryHeader =
    "n,arm,coverage,bias,signed_bias,mean_tau,mean_se,mean_bandwidth,mean_kept,n_reps,n_failed\n";

inline void write_summary_row(std::ostream& out, Eigen::Index n, const std::string& arm, const SimulationSummary& s) {
  out << n << "," << arm << "," << format_number(s.coverage) << "," << format_number(s.mean_bias) << ","
      << format_number(s.mean_signed_bias) << "," << format_number(s.mean_tau) << "," << format_number(s.mean_se) << ","
      << format_number(s.mean_bandwidth) << "," << format_number(s.mean_kept) << "," << s.n_reps << "," << s.n_failed << "\n";
}

inline void write_summary_csv(std::ostream& out, Eigen::Index n, const MonteCarloResult& r) {
  out << kSummaryHeader;
  write_summary_row(out, n, "adaptive", r.adaptive);
  write_summary_row(out, n, "conventional", r.conventional);
}

inline void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << kSummaryHeader;
  for (const auto& row : rows) {
    write_summary_row(out, row.n, "adaptive", row.adaptive);
    write_summary_row(out, row.n, "conventional", row.conventional);
  }
}

inline void write_replications_csv(std::ostream& out, const MonteCarloResult& r) {
  out << "rep,seed,arm,ok,tau_hat,se,ci_low,ci_high,bandwidth,covered,abs_error,signed_error,n_kept,n_effective,error\n";
  auto emit = [&](const std::string& arm, const SimulationSummary& s) {
    for (const auto& x : s.per_rep) {
      std::string err = x.error;
      std::replace(err.begin(), err.end(), ',', ';');
      std::replace(err.begin(), err.end(), '\n', ' ');
      out << x.rep << "," << x.seed << "," << arm << "," << (x.ok ? 1 : 0) << "," << format_number(x.tau_hat) << ","
          << format_number(x.se) << "," << format_number(x.ci_low) << "," << format_number(x.ci_high) << ","
          << format_number(x.bandwidth) << "," << (x.covered ? 1 : 0) << "," << format_number(x.abs_error) << ","
          << format_number(x.signed_error) << "," << x.n_kept << "," << x.n_effective << "," << err << "\n";
    }
  };
  emit("adaptive", r.adaptive);
  emit("conventional", r.conventional);
}

/// Run manifest: everything needed to reproduce a simulation. Thread count is
/// omitted on purpose; it never changes results.
inline json simulation_manifest(const McConfig& c, const std::vector<Eigen::Index>& n_grid, const std::string& dgp_source) {
  return {{"software", "ardd"},
          {"version", kVersion},
          {"master_seed", c.master_seed},
          {"n_reps", c.n_reps},
          {"n_grid", n_grid},
          {"seed_derivation", "replication s uses splitmix64-derived seed(master_seed, s)"},
          {"dgp_source", dgp_source},
          {"dgp", to_json(c.dgp)},
          {"pipeline", to_json(c.pipeline)}};
}

}  // namespace ardd::io

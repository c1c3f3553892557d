// Command-line front end: estimate, simulate, sweep.
#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ardd/io/csv.hpp"
#include "ardd/io/dgp_file.hpp"
#include "ardd/io/report.hpp"
#include "ardd/pipeline.hpp"
#include "ardd/sim.hpp"

namespace {

constexpr int kExitData = 2;
constexpr int kExitEstimation = 3;

// Input, specification and usage problems exit 2; failures inside estimation
// or simulation exit 3.
int exit_code(ardd::ErrorCode c) {
  using ardd::ErrorCode;
  switch (c) {
    case ErrorCode::ParseError:
    case ErrorCode::InvalidDataset:
    case ErrorCode::InvalidSpec:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::ConfigInvalid:
    case ErrorCode::NotPsd:
      return kExitData;
    default:
      return kExitEstimation;
  }
}

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

ardd::KernelSpec parse_kernel(const std::string& k) {
  if (k == "tri") return {ardd::KernelKind::Triangular};
  if (k == "uni") return {ardd::KernelKind::Uniform};
  if (k == "epa") return {ardd::KernelKind::Epanechnikov};
  throw UsageError("--kernel must be tri, uni or epa (got '" + k + "')");
}

double parse_positive(const std::string& flag, const std::string& text) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || !(v > 0.0) || !std::isfinite(v)) throw UsageError(flag + " must be a positive number (got '" + text + "')");
  return v;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto a = item.find_first_not_of(" \t");
    const auto b = item.find_last_not_of(" \t");
    if (a == std::string::npos) throw UsageError("empty name in list '" + s + "'");
    out.push_back(item.substr(a, b - a + 1));
  }
  return out;
}

void write_output(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write '" + path + "'");
  out << text;
}

struct EstimateArgs {
  std::string data, outcome, running, covariates = "all", protect, bandwidth = "auto", kernel = "tri", gamma = "2", format = "json", out;
  double cutoff = 0.0;
  int folds = 10;
  std::uint64_t seed = 0;
  bool conventional = false;
};

int cmd_estimate(const EstimateArgs& a) {
  ardd::PipelineConfig cfg;
  cfg.kernel = parse_kernel(a.kernel);
  cfg.k_folds = a.folds;
  cfg.seed = a.seed;
  if (a.bandwidth != "auto") {
    cfg.bandwidth_mode = ardd::BandwidthMode::Fixed;
    cfg.fixed_h = parse_positive("--bandwidth", a.bandwidth);
  }
  if (a.gamma == "cv") {
    cfg.gamma_cross_validated = true;
  } else {
    cfg.gamma = parse_positive("--gamma", a.gamma);
  }
  if (!a.protect.empty()) cfg.protected_covariates = split_list(a.protect);
  if (a.format != "json" && a.format != "csv") throw UsageError("--format must be json or csv");

  ardd::io::ColumnSpec cols;
  cols.outcome = a.outcome;
  cols.running = a.running;
  cols.cutoff = a.cutoff;
  if (a.covariates == "none") {
    cols.all_covariates = false;
  } else if (a.covariates != "all") {
    cols.all_covariates = false;
    cols.covariates = split_list(a.covariates);
  }
  const auto table = ardd::io::read_csv_file(a.data);
  const auto data = ardd::io::dataset_from_table(table, cols);
  cols.covariates = data.covariates().column_names();
  cfg.validate();

  std::vector<ardd::PipelineResult> results{ardd::run_pipeline(data, cfg)};
  if (a.conventional) results.push_back(ardd::run_conventional(data, cfg));

  std::ostringstream out;
  if (a.format == "json") {
    const ardd::io::EstimateInputs in{a.data, ardd::io::file_digest(a.data), cols, data.n()};
    out << ardd::io::estimate_report(in, cfg, results, ardd::io::utc_timestamp()).dump(2) << "\n";
  } else {
    ardd::io::write_estimate_csv(out, results);
  }
  write_output(a.out, out.str());
  return 0;
}

struct SimArgs {
  std::string dgp, out_dir;
  bool default_dgp = false;
  std::optional<double> fixed_bandwidth;
  int reps = 2000;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  std::string gamma = "2";
};

ardd::McConfig mc_config(const SimArgs& a, std::string& dgp_source) {
  if (a.default_dgp == !a.dgp.empty()) throw UsageError("give exactly one of --dgp <file> or --default-dgp");
  ardd::McConfig c;
  if (a.default_dgp) {
    c.dgp = ardd::default_dgp();
    dgp_source = "default";
  } else {
    c.dgp = ardd::io::read_dgp_file(a.dgp);
    dgp_source = a.dgp + " (" + ardd::io::file_digest(a.dgp) + ")";
  }
  c.n_reps = a.reps;
  c.master_seed = a.seed;
  c.threads = a.threads;
  if (a.fixed_bandwidth) {
    if (!(*a.fixed_bandwidth > 0.0)) throw UsageError("--fixed-bandwidth must be positive");
    c.pipeline.bandwidth_mode = ardd::BandwidthMode::Fixed;
    c.pipeline.fixed_h = *a.fixed_bandwidth;
  }
  if (a.gamma == "cv") {
    c.pipeline.gamma_cross_validated = true;
  } else {
    c.pipeline.gamma = parse_positive("--gamma", a.gamma);
  }
  return c;
}

std::filesystem::path prepare_dir(const std::string& dir) {
  std::filesystem::path p(dir);
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  if (ec) throw UsageError("cannot create output directory '" + dir + "': " + ec.message());
  return p;
}

void write_file(const std::filesystem::path& p, const std::string& text) { write_output(p.string(), text); }

int cmd_simulate(const SimArgs& a, Eigen::Index n) {
  std::string source;
  auto c = mc_config(a, source);
  c.n_obs = n;
  const auto dir = prepare_dir(a.out_dir);
  const auto r = ardd::run_monte_carlo(c);
  std::ostringstream summary, reps;
  ardd::io::write_summary_csv(summary, n, r);
  ardd::io::write_replications_csv(reps, r);
  write_file(dir / "summary.csv", summary.str());
  write_file(dir / "replications.csv", reps.str());
  write_file(dir / "manifest.json", ardd::io::simulation_manifest(c, {n}, source).dump(2) + "\n");
  std::cerr << "wrote " << (dir / "summary.csv").string() << ", replications.csv, manifest.json\n";
  return 0;
}

int cmd_sweep(const SimArgs& a, long from, long to, long by, const std::string& out) {
  if (by <= 0) throw UsageError("--n-by must be positive");
  if (from > to) throw UsageError("--n-from must not exceed --n-to");
  std::vector<Eigen::Index> grid;
  for (long n = from; n <= to; n += by) grid.push_back(n);
  std::string source;
  const auto c = mc_config(a, source);
  const auto rows = ardd::sweep_sample_size(c, grid);
  std::ostringstream csv;
  ardd::io::write_sweep_csv(csv, rows);
  if (!a.out_dir.empty()) {
    const auto dir = prepare_dir(a.out_dir);
    write_file(dir / "sweep.csv", csv.str());
    write_file(dir / "manifest.json", ardd::io::simulation_manifest(c, grid, source).dump(2) + "\n");
  }
  if (a.out_dir.empty() || !out.empty()) write_output(out, csv.str());
  return 0;
}

void add_sim_options(CLI::App* cmd, SimArgs& a) {
  cmd->add_option("--dgp", a.dgp, "DGP spec file (key = value lines, sigma block)");
  cmd->add_flag("--default-dgp", a.default_dgp, "Documented default DGP: 7 covariates, correlation 0.3, null effects");
  cmd->add_option("--reps", a.reps, "Replications")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", a.seed, "Master seed");
  cmd->add_option("--fixed-bandwidth", a.fixed_bandwidth, "Fix h for both arms instead of the plug-in");
  cmd->add_option("--gamma", a.gamma, "Adaptive weight exponent, or 'cv'");
  cmd->add_option("--threads", a.threads, "Worker threads (0 = all cores); never changes results");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Covariate-selected regression discontinuity estimation and simulation"};
  app.set_version_flag("--version", std::string(ardd::io::kVersion));
  app.require_subcommand(1);

  EstimateArgs ea;
  auto* est = app.add_subcommand("estimate", "Run the selection pipeline on a CSV dataset");
  est->add_option("--data", ea.data, "CSV file with a header row")->required();
  est->add_option("--outcome", ea.outcome, "Outcome column")->required();
  est->add_option("--running", ea.running, "Running-variable column")->required();
  est->add_option("--cutoff", ea.cutoff, "Cutoff on the running variable");
  est->add_option("--covariates", ea.covariates, "Comma-separated columns, 'all' (remaining columns) or 'none'");
  est->add_option("--protect", ea.protect, "Comma-separated covariates exempt from the penalty");
  est->add_option("--bandwidth", ea.bandwidth, "'auto' (plug-in) or a fixed h");
  est->add_option("--kernel", ea.kernel, "tri, uni or epa");
  est->add_option("--gamma", ea.gamma, "Adaptive weight exponent, or 'cv'");
  est->add_option("--folds", ea.folds, "Cross-validation folds");
  est->add_option("--seed", ea.seed, "Fold-assignment seed");
  est->add_flag("--conventional", ea.conventional, "Also report the all-covariates comparison arm");
  est->add_option("--format", ea.format, "json or csv");
  est->add_option("--out", ea.out, "Output file (default stdout)");

  SimArgs sa;
  Eigen::Index n_obs = 100;
  auto* sim = app.add_subcommand("simulate", "Monte Carlo comparison of both arms at one sample size");
  add_sim_options(sim, sa);
  sim->add_option("--n", n_obs, "Observations per replication");
  sim->add_option("--out-dir", sa.out_dir, "Directory for summary.csv, replications.csv, manifest.json")->required();

  SimArgs wa;
  long from = 0, to = 0, by = 0;
  std::string sweep_out;
  auto* sweep = app.add_subcommand("sweep", "Coverage and bias across a sample-size grid (long-format CSV)");
  add_sim_options(sweep, wa);
  sweep->add_option("--n-from", from, "First sample size")->required();
  sweep->add_option("--n-to", to, "Last sample size (inclusive)")->required();
  sweep->add_option("--n-by", by, "Step")->required();
  sweep->add_option("--out-dir", wa.out_dir, "Directory for sweep.csv and manifest.json");
  sweep->add_option("--out", sweep_out, "CSV output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitData;
  }

  try {
    if (*est) return cmd_estimate(ea);
    if (*sim) return cmd_simulate(sa, n_obs);
    if (*sweep) return cmd_sweep(wa, from, to, by, sweep_out);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const ardd::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.code());
  }
  return 0;
}

#include <gtest/gtest.h>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "ardd/io/csv.hpp"
#include "ardd/io/dgp_file.hpp"
#include "ardd/io/report.hpp"
#include "ardd/sim.hpp"
#include "support/fixture.hpp"

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

const fs::path& scratch() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("ardd_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

struct CliRun {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CliRun cli(const std::string& args) {
  static int counter = 0;
  const fs::path out = scratch() / ("out" + std::to_string(counter) + ".txt");
  const fs::path err = scratch() / ("err" + std::to_string(counter++) + ".txt");
  const std::string cmd = std::string(ARDD_CLI) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

std::string fixture_csv() { return ardd::testing::fixture_path("ik_fixture.csv"); }

fs::path write_dataset(const ardd::RddDataset& d, const std::string& name) {
  const fs::path p = scratch() / name;
  std::ofstream out(p);
  ardd::io::write_dataset_csv(out, d);
  return p;
}

json without_timestamp(const std::string& text) {
  json j = json::parse(text);
  j.erase("generated_at");
  return j;
}

TEST(CliEstimate, DeterministicApartFromTimestamp) {
  const std::string args = "estimate --data " + fixture_csv() + " --outcome y --running x --bandwidth 0.2 --seed 7 --conventional";
  const CliRun a = cli(args), b = cli(args);
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(without_timestamp(a.out).dump(), without_timestamp(b.out).dump());
  const json j = json::parse(a.out);
  EXPECT_TRUE(j.contains("generated_at"));
  EXPECT_EQ(j["config"]["bandwidth_mode"], "fixed");
  EXPECT_EQ(j["config"]["fixed_h"], 0.2);
  EXPECT_EQ(j["config"]["seed"], 7);
  EXPECT_EQ(j["results"].size(), 2u);
  EXPECT_EQ(j["results"][0]["estimate"]["bandwidth"]["h"], 0.2);
  EXPECT_TRUE(j["results"][0]["audit_verified"].get<bool>());
  EXPECT_EQ(j["input"]["digest"], ardd::io::file_digest(fixture_csv()));
}

TEST(CliEstimate, MatchesLibrary) {
  const CliRun r = cli("estimate --data " + fixture_csv() + " --outcome y --running x --covariates z1,z3 --protect z3 --seed 3");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto data = ardd::testing::load_ik_fixture().with_covariates({"z1", "z3"});
  ardd::PipelineConfig cfg;
  cfg.seed = 3;
  cfg.protected_covariates = {"z3"};
  const auto res = ardd::run_pipeline(data, cfg);
  const json e = json::parse(r.out)["results"][0]["estimate"];
  EXPECT_EQ(e["tau_hat"].get<double>(), res.estimate.tau_hat);
  EXPECT_EQ(e["se"].get<double>(), res.estimate.se);
  EXPECT_EQ(e["covariates_kept"].get<std::vector<std::string>>(), res.estimate.covariates_kept);
}

TEST(CliEstimate, MissingColumnExitsTwoNamingIt) {
  const CliRun r = cli("estimate --data " + fixture_csv() + " --outcome turnout --running x");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("turnout"), std::string::npos) << r.err;
  EXPECT_EQ(r.err.find('\n'), r.err.size() - 1) << "message should be one line: " << r.err;
}

TEST(CliEstimate, ParseErrorExitsTwoWithLocation) {
  const fs::path p = scratch() / "bad.csv";
  std::ofstream(p) << "y,x,z\n1,-0.5,2\n2,0.5,abc\n";
  const CliRun r = cli("estimate --data " + p.string() + " --outcome y --running x");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("row 2"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("'z'"), std::string::npos) << r.err;
}

TEST(CliEstimate, EstimationErrorExitsThree) {
  const CliRun r = cli("estimate --data " + fixture_csv() + " --outcome y --running x --bandwidth 0.001");
  EXPECT_EQ(r.code, 3) << r.err;
  EXPECT_NE(r.err.find("InsufficientSupport"), std::string::npos) << r.err;
}

TEST(CliEstimate, UsageErrorsExitTwo) {
  EXPECT_EQ(cli("estimate --data " + fixture_csv() + " --outcome y --running x --kernel gauss").code, 2);
  EXPECT_EQ(cli("estimate --data " + fixture_csv() + " --outcome y --running x --bandwidth -1").code, 2);
  EXPECT_EQ(cli("estimate --outcome y --running x").code, 2);
  EXPECT_EQ(cli("estimate --data " + fixture_csv() + " --outcome y --running x --protect nope").code, 2);
}

// Seeded null-covariate fixture: every covariate is pure noise and the
// report lists all of them as dropped.
TEST(CliEstimate, NullCovariateFixtureDropsAll) {
  const auto data = ardd::generate_dataset(ardd::default_dgp(4), 400, 1);
  const auto path = write_dataset(data, "null_covariates.csv");
  const CliRun r = cli("estimate --data " + path.string() + " --outcome y --running running --covariates all --seed 1");
  ASSERT_EQ(r.code, 0) << r.err;
  const json e = json::parse(r.out)["results"][0]["estimate"];
  EXPECT_EQ(e["covariates_dropped"].get<std::vector<std::string>>(), (std::vector<std::string>{"x1", "x2", "x3", "x4"}));
  EXPECT_TRUE(e["covariates_kept"].empty());
}

TEST(CliEstimate, SimulatedDatasetRoundTrips) {
  const auto data = ardd::generate_dataset(ardd::default_dgp(3), 300, 21);
  const auto path = write_dataset(data, "roundtrip.csv");
  ardd::io::ColumnSpec cols{"y", "running", 0.0, {}, true};
  const auto back = ardd::io::dataset_from_table(ardd::io::read_csv_file(path.string()), cols);
  ASSERT_EQ(back.n(), data.n());
  EXPECT_EQ(back.outcome(), data.outcome());
  EXPECT_EQ(back.running(), data.running());
  EXPECT_EQ(back.covariates().values(), data.covariates().values());

  ardd::PipelineConfig cfg;
  cfg.seed = 4;
  const auto direct = ardd::run_pipeline(data, cfg);
  const CliRun r = cli("estimate --data " + path.string() + " --outcome y --running running --seed 4");
  ASSERT_EQ(r.code, 0) << r.err;
  const json e = json::parse(r.out)["results"][0]["estimate"];
  EXPECT_NEAR(e["tau_hat"].get<double>(), direct.estimate.tau_hat, 1e-12);
  EXPECT_NEAR(e["se"].get<double>(), direct.estimate.se, 1e-12);
}

TEST(CliEstimate, CsvFormatTwelveDigits) {
  const CliRun r = cli("estimate --data " + fixture_csv() + " --outcome y --running x --format csv --conventional");
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream in(r.out);
  std::string header, adaptive, conventional, extra;
  std::getline(in, header);
  std::getline(in, adaptive);
  std::getline(in, conventional);
  EXPECT_FALSE(std::getline(in, extra));
  EXPECT_EQ(header.rfind("arm,tau_hat,se", 0), 0u);
  EXPECT_EQ(adaptive.rfind("adaptive,", 0), 0u);
  EXPECT_EQ(conventional.rfind("conventional,", 0), 0u);
  const std::string tau = adaptive.substr(9, adaptive.find(',', 9) - 9);
  std::string digits;
  for (char ch : tau.substr(0, tau.find('e')))
    if (std::isdigit(static_cast<unsigned char>(ch))) digits += ch;
  EXPECT_LE(digits.size() - digits.find_first_not_of('0'), 12u) << tau;
}

TEST(CliSimulate, DeterministicAcrossRunsAndThreads) {
  const fs::path a = scratch() / "sim_a", b = scratch() / "sim_b";
  const CliRun ra = cli("simulate --default-dgp --n 100 --reps 20 --seed 1 --threads 1 --out-dir " + a.string());
  const CliRun rb = cli("simulate --default-dgp --n 100 --reps 20 --seed 1 --threads 4 --out-dir " + b.string());
  ASSERT_EQ(ra.code, 0) << ra.err;
  ASSERT_EQ(rb.code, 0) << rb.err;
  for (const char* f : {"summary.csv", "replications.csv", "manifest.json"}) EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  const json m = json::parse(slurp(a / "manifest.json"));
  EXPECT_EQ(m["master_seed"], 1);
  EXPECT_EQ(m["n_reps"], 20);
  EXPECT_EQ(m["dgp"]["mu"].size(), 8u);
  EXPECT_EQ(m["pipeline"]["k_folds"], 10);
}

TEST(CliSimulate, SingleReplicationTableEqualsSummary) {
  const fs::path d = scratch() / "sim_one";
  ASSERT_EQ(cli("simulate --default-dgp --n 120 --reps 1 --seed 5 --out-dir " + d.string()).code, 0);
  auto rows_of = [](const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      std::vector<std::string> f;
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, ',')) f.push_back(cell);
      rows.push_back(f);
    }
    return rows;
  };
  const auto summary = rows_of(slurp(d / "summary.csv"));
  const auto reps = rows_of(slurp(d / "replications.csv"));
  ASSERT_EQ(summary.size(), 2u);
  ASSERT_EQ(reps.size(), 2u);
  for (std::size_t arm = 0; arm < 2; ++arm) {
    const auto& s = summary[arm];
    const auto& r = reps[arm];
    EXPECT_EQ(s[1], r[2]);
    EXPECT_EQ(s[5], r[4]) << "mean_tau";
    EXPECT_EQ(s[6], r[5]) << "mean_se";
    EXPECT_EQ(s[7], r[8]) << "mean_bandwidth";
    EXPECT_EQ(std::stod(s[2]), std::stod(r[9])) << "coverage";
    EXPECT_EQ(s[3], r[10]) << "bias";
    EXPECT_EQ(s[4], r[11]) << "signed bias";
  }
}

TEST(CliSimulate, DgpFileAndValidation) {
  const fs::path spec = scratch() / "dgp.txt";
  auto dgp = ardd::default_dgp(2);
  dgp.beta_true << 0.5, 0.0;
  {
    std::ofstream out(spec);
    ardd::io::write_dgp(out, dgp);
  }
  const fs::path d = scratch() / "sim_file";
  const CliRun r = cli("simulate --dgp " + spec.string() + " --n 80 --reps 3 --seed 2 --out-dir " + d.string());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(json::parse(slurp(d / "manifest.json"))["dgp"]["beta"][0], 0.5);
  EXPECT_EQ(cli("simulate --n 80 --reps 3 --out-dir " + d.string()).code, 2);
  EXPECT_EQ(cli("simulate --default-dgp --dgp " + spec.string() + " --n 80 --reps 3 --out-dir " + d.string()).code, 2);
  const fs::path bad = scratch() / "bad_dgp.txt";
  std::ofstream(bad) << "tau_true = 0.3\n";
  const CliRun rb = cli("simulate --dgp " + bad.string() + " --n 80 --reps 3 --out-dir " + d.string());
  EXPECT_EQ(rb.code, 2);
  EXPECT_NE(rb.err.find("missing required key"), std::string::npos) << rb.err;
}

TEST(CliSweep, ShapeAndValidation) {
  const CliRun r = cli("sweep --default-dgp --n-from 80 --n-to 120 --n-by 20 --reps 3 --seed 1");
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream in(r.out);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "n,arm,coverage,bias,signed_bias,mean_tau,mean_se,mean_bandwidth,mean_kept,n_reps,n_failed");
  std::vector<std::string> keys;
  while (std::getline(in, line)) keys.push_back(line.substr(0, line.find(',', line.find(',') + 1)));
  EXPECT_EQ(keys, (std::vector<std::string>{"80,adaptive", "80,conventional", "100,adaptive", "100,conventional",
                                            "120,adaptive", "120,conventional"}));
  EXPECT_EQ(cli("sweep --default-dgp --n-from 80 --n-to 120 --n-by 0 --reps 3").code, 2);
  EXPECT_EQ(cli("sweep --default-dgp --n-from 120 --n-to 80 --n-by 20 --reps 3").code, 2);
  EXPECT_EQ(cli("sweep --default-dgp --n-from 20 --n-to 80 --n-by 20 --reps 3").code, 2);
}

TEST(DgpFile, RoundTripAndStrictness) {
  auto dgp = ardd::default_dgp(3, 0.25, 0.1);
  dgp.beta_true << 1.0, 0.0, -0.5;
  dgp.tau_true = 0.4;
  std::stringstream ss;
  ardd::io::write_dgp(ss, dgp);
  const auto back = ardd::io::read_dgp(ss);
  EXPECT_EQ(back.mu, dgp.mu);
  EXPECT_EQ(back.sigma, dgp.sigma);
  EXPECT_EQ(back.beta_true, dgp.beta_true);
  EXPECT_EQ(back.tau_true, 0.4);
  EXPECT_EQ(back.margin_index, 3);

  auto code = [](const std::string& text) {
    std::istringstream in(text);
    try {
      ardd::io::read_dgp(in);
    } catch (const ardd::Error& e) {
      return e.code();
    }
    return ardd::ErrorCode::DimensionMismatch;
  };
  const std::string ok =
      "tau_true = 0.3\ngamma_true = 0.5\ndelta_true = 0\nnoise_sd = 1\nmargin_index = 1\nmu = 0 0\nbeta = 0\n"
      "sigma =\n1 0.2\n0.2 1\nend\n";
  std::istringstream in(ok);
  EXPECT_NO_THROW(ardd::io::read_dgp(in));
  EXPECT_EQ(code(ok + "tau_true = 0.3\n"), ardd::ErrorCode::ParseError);
  EXPECT_EQ(code(ok + "colour = 1\n"), ardd::ErrorCode::ParseError);
  EXPECT_EQ(code(ok.substr(0, ok.find("end"))), ardd::ErrorCode::ParseError);
  std::string short_row = ok;
  short_row.replace(short_row.find("0.2 1"), 5, "0.2");
  EXPECT_EQ(code(short_row), ardd::ErrorCode::ParseError);
  std::string bad_num = ok;
  bad_num.replace(bad_num.find("noise_sd = 1"), 12, "noise_sd = x");
  EXPECT_EQ(code(bad_num), ardd::ErrorCode::ParseError);
  std::string not_psd = ok;
  not_psd.replace(not_psd.find("1 0.2\n0.2 1"), 11, "1 2\n2 1");
  EXPECT_EQ(code(not_psd), ardd::ErrorCode::NotPsd);
}

}  // namespace

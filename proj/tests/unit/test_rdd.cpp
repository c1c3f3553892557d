#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "ardd/random.hpp"
#include "ardd/rdd.hpp"
#include "support/fixture.hpp"

namespace {

using ardd::BandwidthResult;
using ardd::DesignMatrix;
using ardd::ErrorCode;
using ardd::KernelKind;
using ardd::KernelSpec;
using ardd::Matrix;
using ardd::RddDataset;
using ardd::Vector;
using ardd::testing::relative_error;

const KernelSpec kTri{KernelKind::Triangular};

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const ardd::Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an ardd::Error";
  return ErrorCode::ParseError;
}

RddDataset linear_noiseless(std::uint64_t seed, Eigen::Index n, Eigen::Index p_cov = 0) {
  ardd::Rng rng(seed);
  Vector f(n), y(n);
  Matrix z(n, p_cov);
  for (Eigen::Index i = 0; i < n; ++i) {
    f[i] = 2.0 * rng.uniform() - 1.0;
    for (Eigen::Index j = 0; j < p_cov; ++j) z(i, j) = rng.normal();
    y[i] = 0.3 * (f[i] >= 0.0) + 0.5 * f[i];
  }
  std::vector<std::string> names;
  for (Eigen::Index j = 0; j < p_cov; ++j) names.push_back("c" + std::to_string(j));
  return RddDataset(y, f, 0.0, DesignMatrix(z, names));
}

TEST(Kernel, Examples) {
  EXPECT_DOUBLE_EQ(ardd::kernel_weight(0.0, kTri), 1.0);
  EXPECT_DOUBLE_EQ(ardd::kernel_weight(1.0, kTri), 0.0);
  EXPECT_DOUBLE_EQ(ardd::kernel_weight(0.5, {KernelKind::Epanechnikov}), 0.5625);
  EXPECT_DOUBLE_EQ(ardd::kernel_weight(1.0, {KernelKind::Uniform}), 1.0);
  EXPECT_DOUBLE_EQ(ardd::kernel_weight(-1.5, {KernelKind::Uniform}), 0.0);
}

// Closed forms from the one-sided kernel moments: triangular 480^(1/5),
// uniform 144^(1/5).
TEST(Kernel, BandwidthConstants) {
  EXPECT_NEAR(ardd::kernel_constant(kTri), std::pow(480.0, 0.2), 1e-8);
  EXPECT_NEAR(ardd::kernel_constant(kTri), 3.4375, 1e-4);
  EXPECT_NEAR(ardd::kernel_constant({KernelKind::Uniform}), std::pow(144.0, 0.2), 1e-8);
}

TEST(RddDataset, Validation) {
  const Vector f{{-1.0, -0.5, 0.5, 1.0}};
  const Vector y = Vector::Zero(4);
  EXPECT_EQ(code_of([&] { RddDataset(y, Vector(f.array().abs()), 0.0); }), ErrorCode::InvalidDataset);
  EXPECT_EQ(code_of([&] { RddDataset(y, Vector::Ones(3), 0.0); }), ErrorCode::DimensionMismatch);
  Matrix z(4, 1);
  z.col(0) = 2.0 * f.array() + 1.0;
  EXPECT_EQ(code_of([&] { RddDataset(y, f, 0.0, DesignMatrix(z, {"copy"})); }), ErrorCode::InvalidDataset);
  z.col(0) = (f.array() >= 0.0).cast<double>();
  EXPECT_EQ(code_of([&] { RddDataset(y, f, 0.0, DesignMatrix(z, {"treat"})); }), ErrorCode::InvalidDataset);
  z.col(0).setConstant(3.0);
  EXPECT_NO_THROW(RddDataset(y, f, 0.0, DesignMatrix(z, {"const"})));
}

TEST(CheckPositivity, Examples) {
  const auto data = ardd::testing::load_ik_fixture();
  const double hmax = (data.running().array() - data.cutoff()).abs().maxCoeff();
  const auto [l, r] = ardd::check_positivity(data, hmax);
  EXPECT_EQ(l + r, data.n());
  const double gap = (data.running().array() - data.cutoff()).abs().minCoeff();
  const auto [l0, r0] = ardd::check_positivity(data, gap / 2.0);
  EXPECT_EQ(l0, 0);
  EXPECT_EQ(r0, 0);
  // Brute-force scan over a sorted copy.
  std::vector<double> xs(data.running().begin(), data.running().end());
  std::sort(xs.begin(), xs.end());
  long bl = 0, br = 0;
  for (double x : xs) {
    if (x >= -0.05 && x < 0.0) ++bl;
    if (x >= 0.0 && x <= 0.05) ++br;
  }
  const auto [l5, r5] = ardd::check_positivity(data, 0.05);
  EXPECT_EQ(l5, bl);
  EXPECT_EQ(r5, br);
}

TEST(IkBandwidth, MatchesReferenceImplementation) {
  const auto data = ardd::testing::load_ik_fixture();
  const auto ref = ardd::testing::load_ik_reference();
  const BandwidthResult bw = ardd::ik_bandwidth(data, kTri);
  EXPECT_LT(relative_error(bw.h, ref["ik_bandwidth_triangular"].get<double>()), 1e-4);
  EXPECT_GE(bw.b, bw.h);
  EXPECT_EQ(bw.method, ardd::BandwidthMethod::IK);
  const auto [l, r] = ardd::check_positivity(data, bw.h);
  EXPECT_EQ(bw.n_left, l);
  EXPECT_EQ(bw.n_right, r);
}

TEST(IkBandwidth, RunningScaleEquivariance) {
  const auto data = ardd::testing::load_ik_fixture();
  const double h = ardd::ik_bandwidth(data, kTri).h;
  for (double c : {2.0, 0.5, 4.0}) {
    const RddDataset scaled(data.outcome(), Vector(c * data.running()), 0.0, data.covariates());
    EXPECT_LT(relative_error(ardd::ik_bandwidth(scaled, kTri).h, c * h), 1e-8) << "c = " << c;
  }
}

TEST(IkBandwidth, OutcomeScaleMovesBandwidthLittle) {
  const auto data = ardd::testing::load_ik_fixture();
  const double h = ardd::ik_bandwidth(data, kTri).h;
  for (double c : {0.5, 0.75, 1.5, 2.0}) {
    const double hc = ardd::ik_bandwidth(data.with_outcome(c * data.outcome()), kTri).h;
    EXPECT_LT(relative_error(hc, h), 0.10) << "c = " << c;
  }
}

TEST(IkBandwidth, TooFewObservations) {
  const auto small = linear_noiseless(1, 30);
  EXPECT_EQ(code_of([&] { ardd::ik_bandwidth(small, kTri); }), ErrorCode::TooFewObservations);
}

TEST(LlrEstimate, NoiselessLinearIsExact) {
  const auto data = linear_noiseless(2, 200);
  for (double h : {0.3, 0.6, 1.0, 5.0}) {
    const auto est = ardd::llr_estimate(data, ardd::fixed_bandwidth(data, h), kTri, {});
    EXPECT_NEAR(est.tau_hat, 0.3, 1e-10);
    EXPECT_EQ(est.estimator, ardd::Estimator::Conventional);
    EXPECT_NEAR(est.ci_low, est.tau_hat - 1.96 * est.se, 1e-10);
    EXPECT_NEAR(est.ci_high, est.tau_hat + 1.96 * est.se, 1e-10);
  }
}

// A covariate constructed to be kernel-weighted orthogonal to the local
// linear design cannot move the treatment coefficient.
TEST(LlrEstimate, OrthogonalCovariateLeavesTauUnchanged) {
  const auto base = ardd::testing::load_ik_fixture();
  const double h = 0.5;
  const Vector x = base.centered_running();
  Vector w(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) w[i] = ardd::kernel_weight(x[i] / h, kTri);
  Matrix D(x.size(), 4);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double t = x[i] >= 0.0;
    D.row(i) << 1.0, t, x[i], t * x[i];
  }
  ardd::Rng rng(3);
  Vector raw(x.size());
  for (auto& v : raw) v = rng.normal();
  const Matrix DtW = D.transpose() * w.asDiagonal();
  const Vector coef = (DtW * D).ldlt().solve(DtW * raw);
  Matrix z(x.size(), 1);
  z.col(0) = raw - D * coef;
  const RddDataset data(base.outcome(), base.running(), 0.0, DesignMatrix(z, {"orth"}));
  const auto bw = ardd::fixed_bandwidth(data, h);
  const auto without = ardd::llr_estimate(data, bw, kTri, {});
  const auto with = ardd::llr_estimate(data, bw, kTri, {"orth"});
  EXPECT_NEAR(with.tau_hat, without.tau_hat, 1e-8);
  EXPECT_EQ(with.covariates_kept, std::vector<std::string>{"orth"});
  EXPECT_TRUE(without.covariates_dropped == std::vector<std::string>{"orth"});
}

TEST(LlrEstimate, InsufficientSupport) {
  const auto data = ardd::testing::load_ik_fixture();
  EXPECT_EQ(code_of([&] { ardd::llr_estimate(data, ardd::fixed_bandwidth(data, 0.005), kTri, {}); }),
            ErrorCode::InsufficientSupport);
  EXPECT_EQ(code_of([&] { ardd::llr_estimate(data, ardd::fixed_bandwidth(data, 0.5), kTri, {"nope"}); }),
            ErrorCode::InvalidSpec);
}

TEST(LlrEstimate, Properties) {
  const auto data = ardd::testing::load_ik_fixture();
  const auto bw = ardd::fixed_bandwidth(data, 0.4);
  const std::vector<std::string> covs{"z1", "z3"};
  const auto base = ardd::llr_estimate(data, bw, kTri, covs);
  const double c = 3.7;
  const auto scaled = ardd::llr_estimate(data.with_outcome(c * data.outcome()), bw, kTri, covs);
  EXPECT_LT(relative_error(scaled.tau_hat, c * base.tau_hat), 1e-10);
  EXPECT_LT(relative_error(scaled.se, c * base.se), 1e-10);
  EXPECT_LT(relative_error(scaled.ci_low, c * base.ci_low), 1e-10);
  EXPECT_LT(relative_error(scaled.ci_high, c * base.ci_high), 1e-10);
  const auto shifted = ardd::llr_estimate(data.with_outcome(Vector(data.outcome().array() + 11.0)), bw, kTri, covs);
  EXPECT_NEAR(shifted.tau_hat, base.tau_hat, 1e-10);
  const auto again = ardd::llr_estimate(data, bw, kTri, covs);
  EXPECT_EQ(again.tau_hat, base.tau_hat);
  EXPECT_EQ(again.se, base.se);
  EXPECT_EQ(base.covariates_dropped, std::vector<std::string>{"z2"});
  Eigen::Index prev = 0;
  for (double h = 0.1; h <= 1.2; h += 0.05) {
    const auto est = ardd::llr_estimate(data, ardd::fixed_bandwidth(data, h), kTri, {});
    EXPECT_GE(est.n_effective, prev);
    prev = est.n_effective;
  }
}

TEST(RobustBiasCorrected, MatchesReferenceImplementation) {
  const auto data = ardd::testing::load_ik_fixture();
  const auto ref = ardd::testing::load_ik_reference();
  for (const auto& r : ref["robust"]) {
    const auto bw = ardd::fixed_bandwidth(data, r["h"].get<double>(), r["b"].get<double>());
    const auto covs = r["covariates"].get<std::vector<std::string>>();
    ardd::RobustOptions opt;
    opt.vce = r["vce"].get<std::string>() == "nn" ? ardd::VceKind::NearestNeighbor : ardd::VceKind::HC1;
    const auto est = ardd::robust_bias_corrected(data, bw, kTri, covs, opt);
    SCOPED_TRACE("h=" + std::to_string(bw.h) + " covariates=" + std::to_string(covs.size()) + " vce=" + r["vce"].get<std::string>());
    EXPECT_LT(relative_error(est.tau_hat, r["tau_bias_corrected"].get<double>()), 1e-3);
    EXPECT_LT(relative_error(est.se, r["se_robust"].get<double>()), 1e-3);
    EXPECT_LT(relative_error(est.tau_conventional, r["tau_conventional"].get<double>()), 1e-3);
    EXPECT_LT(relative_error(est.se_conventional, r["se_conventional"].get<double>()), 1e-3);
    EXPECT_EQ(est.estimator, ardd::Estimator::RobustBiasCorrected);
  }
}

TEST(RobustBiasCorrected, LinearNoiselessHasZeroBias) {
  const auto data = linear_noiseless(4, 300, 2);
  const auto est = ardd::robust_bias_corrected(data, ardd::fixed_bandwidth(data, 0.5), kTri, {"c0", "c1"});
  EXPECT_NEAR(est.bias_hat, 0.0, 1e-8);
  EXPECT_NEAR(est.tau_hat, est.tau_conventional, 1e-8);
  EXPECT_NEAR(est.tau_hat, 0.3, 1e-8);
}

// Y = 0.3 T + (F - f)^2 exactly, F uniform on (-1, 1) so h = 0.5 * range = 1.
// The local quadratic absorbs the curvature exactly, while the local linear
// fit carries a finite-sample smoothing bias.
TEST(RobustBiasCorrected, CurvatureMonteCarlo) {
  int wins = 0;
  for (int s = 0; s < 200; ++s) {
    ardd::Rng rng(ardd::derive_seed(77, static_cast<std::uint64_t>(s)));
    const Eigen::Index n = 5000;
    Vector f(n), y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      f[i] = 2.0 * rng.uniform() - 1.0;
      y[i] = 0.3 * (f[i] >= 0.0) + f[i] * f[i];
    }
    const RddDataset data(y, f);
    const double range = f.maxCoeff() - f.minCoeff();
    const auto est = ardd::robust_bias_corrected(data, ardd::fixed_bandwidth(data, 0.5 * range), kTri, {});
    if (std::abs(est.tau_hat - 0.3) < std::abs(est.tau_conventional - 0.3)) ++wins;
  }
  EXPECT_GE(wins, 160);
}

TEST(RobustBiasCorrected, RejectsBadBandwidth) {
  const auto data = ardd::testing::load_ik_fixture();
  BandwidthResult bw;
  bw.h = 0.5;
  bw.b = 0.4;
  EXPECT_EQ(code_of([&] { ardd::robust_bias_corrected(data, bw, kTri, {}); }), ErrorCode::InvalidSpec);
}

}  // namespace

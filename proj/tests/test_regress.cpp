#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "iae/regress.hpp"
#include "oracles.hpp"

using namespace iae;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = nd(rng);
  }
  return m;
}

oracle::Mat rows_of(const Eigen::MatrixXd& m) {
  oracle::Mat out;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out.emplace_back();
    for (Eigen::Index j = 0; j < m.cols(); ++j) out.back().push_back(m(i, j));
  }
  return out;
}

oracle::Vec vec_of(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

RegressorConfig svr_config(double c = 1.0, double eps = 0.1) {
  RegressorConfig cfg;
  cfg.backend = Backend::EpsilonSvr;
  cfg.svr.c = c;
  cfg.svr.epsilon = eps;
  return cfg;
}

}  // namespace

// --- kernels ----------------------------------------------------------------

TEST(Kernel, RbfIdentityIsOne) {
  Eigen::VectorXd a(3);
  a << 1, -2, 3;
  for (double g : {0.01, 1.0, 7.5}) EXPECT_EQ(kernel_eval(KernelSpec::rbf(g), a, a), 1.0);
}

TEST(Kernel, RbfForcedArithmetic) {
  Eigen::VectorXd a(2), b(2);
  a << 0, 0;
  b << 1, 1;
  EXPECT_NEAR(kernel_eval(KernelSpec::rbf(0.5), a, b), std::exp(-1.0), 1e-15);
  EXPECT_NEAR(kernel_eval(KernelSpec::rbf(0.5), a, b), 0.367879, 1e-6);
}

TEST(Kernel, LinearAndPolynomial) {
  Eigen::VectorXd a(2), b(2);
  a << 1, 2;
  b << 3, 4;
  EXPECT_EQ(kernel_eval(KernelSpec::linear(), a, b), 11.0);
  EXPECT_EQ(kernel_eval(KernelSpec::polynomial(2, 1.0), a, b), 144.0);
}

TEST(Kernel, DimensionMismatch) {
  Eigen::VectorXd a(2), b(3);
  a.setZero();
  b.setZero();
  try {
    kernel_eval(KernelSpec::linear(), a, b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::DimensionMismatch);
  }
}

TEST(Kernel, AutoGammaIsInverseDimension) {
  EXPECT_DOUBLE_EQ(*KernelSpec::rbf_auto().resolved(4).gamma, 0.25);
  EXPECT_DOUBLE_EQ(*KernelSpec::rbf(2.0).resolved(4).gamma, 2.0);
  EXPECT_THROW(KernelSpec::rbf(-1.0).validate(), Error);
}

TEST(Gram, SingleRow) {
  Eigen::MatrixXd x(1, 2);
  x << 3, 4;
  const Eigen::MatrixXd g = gram(KernelSpec::linear(), x);
  ASSERT_EQ(g.rows(), 1);
  EXPECT_EQ(g(0, 0), 25.0);
}

TEST(Gram, SymmetricUnitDiagonalAndPsd) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::MatrixXd x = random_matrix(5 + trial % 7, 3, rng);
    const Eigen::MatrixXd g = gram(KernelSpec::rbf(0.3 + 0.1 * (trial % 5)), x);
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      EXPECT_EQ(g(i, i), 1.0);
      for (Eigen::Index j = 0; j < g.cols(); ++j) EXPECT_NEAR(g(i, j), g(j, i), 1e-12);
    }
    oracle::Mat gm = rows_of(g);
    const auto eig = oracle::jacobi(gm);
    EXPECT_GE(eig.values.back(), -1e-9);
  }
}

// --- kernel ridge -------------------------------------------------------------

TEST(KernelRidge, SingleSampleCentersToZero) {
  Eigen::MatrixXd x(1, 2);
  x << 0.5, -1;
  Eigen::VectorXd y(1);
  y << 2;
  const TrainedRegressor m = fit_kernel_ridge(x, y, KernelSpec::rbf_auto(), 1.0);
  EXPECT_EQ(m.dual_coeffs(0), 0.0);
  EXPECT_EQ(m.bias, 2.0);
  EXPECT_EQ(predict(m, x)(0), 2.0);
}

TEST(KernelRidge, InterpolatesAtTinyRidge) {
  Eigen::MatrixXd x(2, 1);
  x << 0, 1;
  Eigen::VectorXd y(2);
  y << 30, 50;
  const TrainedRegressor m = fit_kernel_ridge(x, y, KernelSpec::rbf(1.0), 1e-10);
  const Eigen::VectorXd f = predict(m, x);
  EXPECT_NEAR(f(0), 30.0, 1e-5);
  EXPECT_NEAR(f(1), 50.0, 1e-5);
}

TEST(KernelRidge, MatchesGaussianElimination) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index n = 5 + trial % 16;
    const Eigen::MatrixXd x = random_matrix(n, 3, rng);
    const Eigen::VectorXd y = 50.0 * Eigen::VectorXd::Ones(n) + random_matrix(n, 1, rng, 10.0);
    const double gamma = 0.5;
    const double ridge = trial % 2 ? 1e-3 : 0.1;
    const TrainedRegressor m = fit_kernel_ridge(x, y, KernelSpec::rbf(gamma), ridge);
    const oracle::Vec alpha = oracle::kernel_ridge_alpha(oracle::rbf_gram(rows_of(x), gamma), vec_of(y), ridge);
    for (Eigen::Index i = 0; i < n; ++i) EXPECT_NEAR(m.dual_coeffs(i), alpha[i], 1e-8) << "trial " << trial;
    EXPECT_NEAR(m.bias, oracle::mean(vec_of(y)), 1e-12);
  }
}

TEST(KernelRidge, BitStable) {
  std::mt19937_64 rng(3);
  const Eigen::MatrixXd x = random_matrix(12, 4, rng);
  const Eigen::VectorXd y = random_matrix(12, 1, rng, 5.0);
  const TrainedRegressor a = fit_kernel_ridge(x, y, KernelSpec::rbf_auto(), 1e-3);
  const TrainedRegressor b = fit_kernel_ridge(x, y, KernelSpec::rbf_auto(), 1e-3);
  EXPECT_EQ(a.dual_coeffs, b.dual_coeffs);
  EXPECT_EQ(a.bias, b.bias);
}

TEST(KernelRidge, ShapeErrors) {
  Eigen::MatrixXd x(3, 2);
  x.setZero();
  Eigen::VectorXd y(2);
  y.setZero();
  try {
    fit_kernel_ridge(x, y, KernelSpec::linear(), 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::LengthMismatch);
  }
  EXPECT_THROW(fit_kernel_ridge(Eigen::MatrixXd(0, 2), Eigen::VectorXd(0), KernelSpec::linear(), 1.0), Error);
}

// --- epsilon-SVR -----------------------------------------------------------------

TEST(Svr, ConstantLabels) {
  std::mt19937_64 rng(4);
  const Eigen::MatrixXd x = random_matrix(10, 3, rng);
  const Eigen::VectorXd y = Eigen::VectorXd::Constant(10, 42.0);
  const TrainedRegressor m = fit_epsilon_svr(x, y, svr_config());
  EXPECT_TRUE(m.dual_coeffs.isZero(0.0));
  EXPECT_NEAR(m.bias, 42.0, 1e-12);
  const Eigen::VectorXd f = predict(m, random_matrix(5, 3, rng));
  for (Eigen::Index i = 0; i < f.size(); ++i) EXPECT_NEAR(f(i), 42.0, 1e-12);
}

TEST(Svr, LabelsInsideTubeHaveNoSupport) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  const Eigen::MatrixXd x = random_matrix(10, 2, rng);
  Eigen::VectorXd y(10);
  for (auto& v : y) v = 30.0 + u(rng);
  const TrainedRegressor m = fit_epsilon_svr(x, y, svr_config(1.0, 0.1));
  EXPECT_TRUE(m.dual_coeffs.isZero(0.0));
}

TEST(Svr, DualObjectiveMatchesProjectedGradient) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::MatrixXd x = random_matrix(8, 2, rng);
    const Eigen::VectorXd y = random_matrix(8, 1, rng, 1.5);
    const RegressorConfig cfg = svr_config(1.0, 0.1);
    const TrainedRegressor m = fit_epsilon_svr(x, y, cfg);
    ASSERT_TRUE(m.converged);
    const Eigen::MatrixXd k = gram(m.kernel, x);
    const oracle::Mat km = rows_of(k);
    const oracle::Vec beta = oracle::svr_dual(km, vec_of(y), 1.0, 0.1);
    const double ours = svr_dual_objective(k, y, m.dual_coeffs, 0.1);
    const double ref = oracle::svr_objective(km, vec_of(y), beta, 0.1);
    EXPECT_NEAR(ours, ref, 1e-4) << "trial " << trial;
    EXPECT_NEAR(m.dual_coeffs.sum(), 0.0, 1e-9);
    EXPECT_LE(m.dual_coeffs.cwiseAbs().maxCoeff(), 1.0 + 1e-12);
  }
}

TEST(Svr, KktScanClean) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    const Eigen::Index n = 10 + trial;
    const Eigen::MatrixXd x = random_matrix(n, 3, rng);
    Eigen::VectorXd y = 50.0 * Eigen::VectorXd::Ones(n) + 3.0 * x.col(0) + random_matrix(n, 1, rng, 2.0);
    const RegressorConfig cfg = svr_config(trial % 2 ? 1.0 : 10.0, 0.1);
    const TrainedRegressor m = fit_epsilon_svr(x, y, cfg);
    ASSERT_TRUE(m.converged);
    EXPECT_EQ(svr_kkt_violations(m, x, y, cfg.svr, cfg.svr.tol), 0u) << "trial " << trial;
  }
}

TEST(Svr, Deterministic) {
  std::mt19937_64 rng(8);
  const Eigen::MatrixXd x = random_matrix(30, 3, rng);
  const Eigen::VectorXd y = random_matrix(30, 1, rng, 4.0);
  const TrainedRegressor a = fit_epsilon_svr(x, y, svr_config());
  const TrainedRegressor b = fit_epsilon_svr(x, y, svr_config());
  EXPECT_EQ(a.dual_coeffs, b.dual_coeffs);
  EXPECT_EQ(a.bias, b.bias);
  EXPECT_EQ(a.iterations, b.iterations);
}

TEST(Svr, BudgetExhaustionReportsNonConverged) {
  std::mt19937_64 rng(9);
  const Eigen::MatrixXd x = random_matrix(40, 3, rng);
  const Eigen::VectorXd y = random_matrix(40, 1, rng, 20.0);
  RegressorConfig cfg = svr_config(100.0, 0.01);
  cfg.svr.tol = 1e-12;
  cfg.svr.max_passes = 1;
  const TrainedRegressor m = fit_epsilon_svr(x, y, cfg);
  EXPECT_LE(m.iterations, smo_pass_length(40));
  if (!m.converged) EXPECT_EQ(m.iterations, smo_pass_length(40));
}

TEST(Svr, ParameterValidation) {
  SvrParams p;
  p.c = 0.0;
  EXPECT_THROW(p.validate(), Error);
  p = {};
  p.epsilon = -1;
  EXPECT_THROW(p.validate(), Error);
  p = {};
  p.max_passes = 0;
  EXPECT_THROW(p.validate(), Error);
}

// --- predict -----------------------------------------------------------------------

TEST(Predict, ZeroDualsGiveBias) {
  TrainedRegressor m;
  m.support = Eigen::MatrixXd::Zero(3, 2);
  m.dual_coeffs = Eigen::VectorXd::Zero(3);
  m.bias = 40.0;
  m.kernel = KernelSpec::rbf(1.0);
  std::mt19937_64 rng(10);
  const Eigen::VectorXd f = predict(m, random_matrix(4, 2, rng));
  for (Eigen::Index i = 0; i < 4; ++i) EXPECT_EQ(f(i), 40.0);
}

TEST(Predict, SingleSupportAtItself) {
  TrainedRegressor m;
  m.support = Eigen::MatrixXd::Constant(1, 2, 0.7);
  m.dual_coeffs = Eigen::VectorXd::Ones(1);
  m.kernel = KernelSpec::rbf(3.0);
  EXPECT_EQ(predict(m, m.support)(0), 1.0);
}

TEST(Predict, BatchConcatenation) {
  std::mt19937_64 rng(11);
  const Eigen::MatrixXd x = random_matrix(15, 3, rng);
  const Eigen::VectorXd y = random_matrix(15, 1, rng, 5.0);
  const TrainedRegressor m = fit_kernel_ridge(x, y, KernelSpec::rbf_auto(), 1e-2);
  const Eigen::MatrixXd q = random_matrix(9, 3, rng);
  const Eigen::VectorXd all = predict(m, q);
  const Eigen::VectorXd a = predict(m, q.topRows(4));
  const Eigen::VectorXd b = predict(m, q.bottomRows(5));
  for (int i = 0; i < 4; ++i) EXPECT_EQ(all(i), a(i));
  for (int i = 0; i < 5; ++i) EXPECT_EQ(all(4 + i), b(i));
}

TEST(Predict, LinearInDualCoefficients) {
  std::mt19937_64 rng(12);
  TrainedRegressor m1;
  m1.support = random_matrix(6, 2, rng);
  m1.kernel = KernelSpec::rbf(0.7);
  m1.dual_coeffs = random_matrix(6, 1, rng);
  m1.bias = 3.0;
  TrainedRegressor m2 = m1;
  m2.dual_coeffs = random_matrix(6, 1, rng);
  m2.bias = 5.0;
  TrainedRegressor sum = m1;
  sum.dual_coeffs = m1.dual_coeffs + m2.dual_coeffs;
  sum.bias = 1.0;
  const Eigen::MatrixXd q = random_matrix(7, 2, rng);
  const Eigen::VectorXd lhs = predict(sum, q);
  const Eigen::VectorXd rhs = predict(m1, q) + predict(m2, q) - Eigen::VectorXd::Constant(7, 3.0 + 5.0 - 1.0);
  EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Predict, DimensionMismatch) {
  TrainedRegressor m;
  m.support = Eigen::MatrixXd::Zero(2, 3);
  m.dual_coeffs = Eigen::VectorXd::Zero(2);
  EXPECT_THROW(predict(m, Eigen::MatrixXd::Zero(1, 2)), Error);
}

TEST(FitRegressor, DispatchesOnBackend) {
  std::mt19937_64 rng(13);
  const Eigen::MatrixXd x = random_matrix(10, 2, rng);
  const Eigen::VectorXd y = random_matrix(10, 1, rng, 3.0);
  RegressorConfig cfg;
  cfg.backend = Backend::KernelRidge;
  const TrainedRegressor kr = fit_regressor(x, y, cfg);
  EXPECT_EQ(kr.dual_coeffs, fit_kernel_ridge(x, y, cfg.kernel, cfg.ridge).dual_coeffs);
  cfg.backend = Backend::EpsilonSvr;
  EXPECT_EQ(fit_regressor(x, y, cfg).dual_coeffs, fit_epsilon_svr(x, y, cfg).dual_coeffs);
}

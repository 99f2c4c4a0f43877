#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "iae/error.hpp"

namespace iae {

enum class KernelKind { Rbf, Linear, Polynomial };

struct KernelSpec {
  KernelKind kind = KernelKind::Rbf;
  /// RBF width; unset means 1 / feature dimension, resolved at fit time.
  std::optional<double> gamma;
  int degree = 3;
  double coef0 = 0.0;

  static KernelSpec rbf(double gamma) { return {KernelKind::Rbf, gamma, 3, 0.0}; }
  static KernelSpec rbf_auto() { return {KernelKind::Rbf, std::nullopt, 3, 0.0}; }
  static KernelSpec linear() { return {KernelKind::Linear, std::nullopt, 3, 0.0}; }
  static KernelSpec polynomial(int degree, double coef0) {
    return {KernelKind::Polynomial, std::nullopt, degree, coef0};
  }

  void validate() const {
    if (kind == KernelKind::Rbf && gamma && !(*gamma > 0.0)) fail(Errc::ConfigError, "RBF gamma must be positive");
    if (kind == KernelKind::Polynomial && degree < 1) fail(Errc::ConfigError, "polynomial degree must be >= 1");
  }

  KernelSpec resolved(Eigen::Index dim) const {
    KernelSpec out = *this;
    if (out.kind == KernelKind::Rbf && !out.gamma) out.gamma = 1.0 / static_cast<double>(std::max<Eigen::Index>(dim, 1));
    return out;
  }
};

template <typename A, typename B>
double kernel_eval(const KernelSpec& spec, const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  if (a.size() != b.size()) fail(Errc::DimensionMismatch, "kernel arguments differ in dimension");
  switch (spec.kind) {
    case KernelKind::Rbf: {
      const double gamma = spec.gamma.value_or(1.0 / static_cast<double>(std::max<Eigen::Index>(a.size(), 1)));
      double sq = 0.0;
      for (Eigen::Index k = 0; k < a.size(); ++k) {
        const double diff = a(k) - b(k);
        sq += diff * diff;
      }
      return std::exp(-gamma * sq);
    }
    case KernelKind::Linear: {
      double dot = 0.0;
      for (Eigen::Index k = 0; k < a.size(); ++k) dot += a(k) * b(k);
      return dot;
    }
    case KernelKind::Polynomial: {
      double dot = 0.0;
      for (Eigen::Index k = 0; k < a.size(); ++k) dot += a(k) * b(k);
      return std::pow(dot + spec.coef0, spec.degree);
    }
  }
  return 0.0;
}

/// K(i, j) = k(a_i, b_j) over the rows of `a` and `b`.
inline Eigen::MatrixXd cross_kernel(const KernelSpec& spec, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.cols() != b.cols()) fail(Errc::DimensionMismatch, "kernel arguments differ in dimension");
  Eigen::MatrixXd k(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.rows(); ++j) k(i, j) = kernel_eval(spec, a.row(i), b.row(j));
  }
  return k;
}

inline Eigen::MatrixXd gram(const KernelSpec& spec, const Eigen::MatrixXd& x) {
  if (x.rows() == 0) fail(Errc::EmptyInput, "gram matrix of an empty set");
  Eigen::MatrixXd g(x.rows(), x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    g(i, i) = kernel_eval(spec, x.row(i), x.row(i));
    for (Eigen::Index j = i + 1; j < x.rows(); ++j) {
      g(i, j) = kernel_eval(spec, x.row(i), x.row(j));
      g(j, i) = g(i, j);
    }
  }
  return g;
}

// ---------------------------------------------------------------------------

enum class Backend { KernelRidge, EpsilonSvr };

struct SvrParams {
  double c = 1.0;
  double epsilon = 0.1;
  double tol = 1e-3;
  int max_passes = 5;

  void validate() const {
    if (!(c > 0.0)) fail(Errc::ConfigError, "SVR c must be positive");
    if (!(epsilon >= 0.0)) fail(Errc::ConfigError, "SVR epsilon must be non-negative");
    if (!(tol > 0.0)) fail(Errc::ConfigError, "SVR tol must be positive");
    if (max_passes < 1) fail(Errc::ConfigError, "SVR max_passes must be >= 1");
  }
};

struct RegressorConfig {
  Backend backend = Backend::EpsilonSvr;
  KernelSpec kernel = KernelSpec::rbf_auto();
  double ridge = 1e-3;
  SvrParams svr;

  void validate() const {
    kernel.validate();
    if (backend == Backend::KernelRidge && !(ridge > 0.0)) fail(Errc::ConfigError, "ridge must be positive");
    if (backend == Backend::EpsilonSvr) svr.validate();
  }
};

/// f(x) = bias + sum_j dual_coeffs[j] * k(support_j, x).
struct TrainedRegressor {
  Eigen::MatrixXd support;
  Eigen::VectorXd dual_coeffs;
  double bias = 0.0;
  KernelSpec kernel;
  bool converged = true;
  std::size_t iterations = 0;

  Eigen::Index dim() const noexcept { return support.cols(); }
};

inline Eigen::VectorXd predict(const TrainedRegressor& model, const Eigen::MatrixXd& x) {
  if (x.cols() != model.support.cols()) fail(Errc::DimensionMismatch, "query dimension differs from model");
  Eigen::VectorXd out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double acc = model.bias;
    for (Eigen::Index j = 0; j < model.support.rows(); ++j) {
      const double coef = model.dual_coeffs(j);
      if (coef != 0.0) acc += coef * kernel_eval(model.kernel, model.support.row(j), x.row(i));
    }
    out(i) = acc;
  }
  return out;
}

inline void check_training_shape(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, Eigen::Index min_rows) {
  if (x.rows() != y.size()) fail(Errc::LengthMismatch, "feature rows and labels differ in length");
  if (x.rows() < min_rows) {
    fail(Errc::TooFewSamples, "need at least " + std::to_string(min_rows) + " training samples");
  }
  if (!x.allFinite() || !y.allFinite()) fail(Errc::ParseError, "training data contains non-finite values");
}

/// Solves (G + ridge*n*I) alpha = y - mean(y); bias = mean(y).
inline TrainedRegressor fit_kernel_ridge(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const KernelSpec& spec,
                                         double ridge) {
  check_training_shape(x, y, 1);
  if (!(ridge > 0.0)) fail(Errc::ConfigError, "ridge must be positive");
  TrainedRegressor model;
  model.kernel = spec.resolved(x.cols());
  model.kernel.validate();
  model.support = x;
  model.bias = y.mean();

  const auto n = x.rows();
  Eigen::MatrixXd system = gram(model.kernel, x);
  system.diagonal().array() += ridge * static_cast<double>(n);
  const Eigen::VectorXd target = y.array() - model.bias;

  Eigen::LDLT<Eigen::MatrixXd> ldlt(system);
  if (ldlt.info() != Eigen::Success) fail(Errc::SingularSystem, "kernel ridge factorization failed");
  Eigen::VectorXd alpha = ldlt.solve(target);
  const double bound = 1e-8 * std::max(y.norm(), std::numeric_limits<double>::min());
  Eigen::VectorXd residual = system * alpha - target;
  for (int refine = 0; refine < 3 && residual.norm() > bound; ++refine) {
    alpha -= ldlt.solve(residual);
    residual = system * alpha - target;
  }
  if (!alpha.allFinite() || residual.norm() > bound) {
    fail(Errc::SingularSystem, "kernel ridge solve residual " + std::to_string(residual.norm()) + " above bound");
  }
  model.dual_coeffs = std::move(alpha);
  return model;
}

// ---------------------------------------------------------------------------
// epsilon-SVR, SMO over the 2n-variable dual
//
//   min 1/2 a^T Q a + p^T a   s.t.  s^T a = 0,  0 <= a_t <= C
//
// with a = [alpha; alpha*], s = [+1; -1], p = [eps - y; eps + y] and
// Q_tu = s_t s_u K(t mod n, u mod n). The working pair is the maximal KKT
// violating pair; among equal violations the lowest index wins.

struct SvrSolution {
  Eigen::VectorXd beta;  // alpha - alpha*, length n
  double bias = 0.0;
  double gap = 0.0;  // final m(a) - M(a)
  std::size_t iterations = 0;
  bool converged = true;
};

/// Number of SMO pair updates that make up one pass.
inline std::size_t smo_pass_length(Eigen::Index n) { return static_cast<std::size_t>(200 * n); }

inline SvrSolution solve_svr_dual(const Eigen::MatrixXd& kernel, const Eigen::VectorXd& y, const SvrParams& params) {
  const Eigen::Index l = y.size();
  const Eigen::Index m = 2 * l;
  const double c = params.c;
  constexpr double tau = 1e-12;

  std::vector<double> a(static_cast<std::size_t>(m), 0.0);
  std::vector<double> grad(static_cast<std::size_t>(m));
  std::vector<int> sign(static_cast<std::size_t>(m));
  for (Eigen::Index t = 0; t < l; ++t) {
    grad[t] = params.epsilon - y(t);
    grad[t + l] = params.epsilon + y(t);
    sign[t] = 1;
    sign[t + l] = -1;
  }
  auto q = [&](Eigen::Index t, Eigen::Index u) {
    return static_cast<double>(sign[t] * sign[u]) * kernel(t % l, u % l);
  };
  auto in_up = [&](Eigen::Index t) { return sign[t] > 0 ? a[t] < c : a[t] > 0.0; };
  auto in_low = [&](Eigen::Index t) { return sign[t] > 0 ? a[t] > 0.0 : a[t] < c; };

  SvrSolution sol;
  const std::size_t budget = static_cast<std::size_t>(params.max_passes) * smo_pass_length(l);
  sol.converged = false;
  for (;;) {
    double up_max = -std::numeric_limits<double>::infinity();
    double low_min = std::numeric_limits<double>::infinity();
    Eigen::Index i = -1;
    Eigen::Index j = -1;
    for (Eigen::Index t = 0; t < m; ++t) {
      const double v = -sign[t] * grad[t];
      if (in_up(t) && v > up_max) {
        up_max = v;
        i = t;
      }
      if (in_low(t) && v < low_min) {
        low_min = v;
        j = t;
      }
    }
    sol.gap = (i < 0 || j < 0) ? 0.0 : up_max - low_min;
    if (sol.gap < params.tol) {
      sol.converged = true;
      break;
    }
    if (sol.iterations >= budget) break;
    ++sol.iterations;

    const double old_i = a[i];
    const double old_j = a[j];
    if (sign[i] != sign[j]) {
      double quad = q(i, i) + q(j, j) + 2.0 * q(i, j);
      if (quad <= 0.0) quad = tau;
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = a[i] - a[j];
      a[i] += delta;
      a[j] += delta;
      if (diff > 0.0) {
        if (a[j] < 0.0) {
          a[j] = 0.0;
          a[i] = diff;
        }
      } else if (a[i] < 0.0) {
        a[i] = 0.0;
        a[j] = -diff;
      }
      if (diff > 0.0) {
        if (a[i] > c) {
          a[i] = c;
          a[j] = c - diff;
        }
      } else if (a[j] > c) {
        a[j] = c;
        a[i] = c + diff;
      }
    } else {
      double quad = q(i, i) + q(j, j) - 2.0 * q(i, j);
      if (quad <= 0.0) quad = tau;
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = a[i] + a[j];
      a[i] -= delta;
      a[j] += delta;
      if (sum > c) {
        if (a[i] > c) {
          a[i] = c;
          a[j] = sum - c;
        }
      } else if (a[j] < 0.0) {
        a[j] = 0.0;
        a[i] = sum;
      }
      if (sum > c) {
        if (a[j] > c) {
          a[j] = c;
          a[i] = sum - c;
        }
      } else if (a[i] < 0.0) {
        a[i] = 0.0;
        a[j] = sum;
      }
    }
    const double di = a[i] - old_i;
    const double dj = a[j] - old_j;
    for (Eigen::Index t = 0; t < m; ++t) grad[t] += q(t, i) * di + q(t, j) * dj;
  }

  // bias: mean over free variables, else midpoint of the feasible interval
  double ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  double free_sum = 0.0;
  int free_count = 0;
  for (Eigen::Index t = 0; t < m; ++t) {
    const double yg = sign[t] * grad[t];
    if (a[t] >= c) {
      if (sign[t] < 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else if (a[t] <= 0.0) {
      if (sign[t] > 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else {
      ++free_count;
      free_sum += yg;
    }
  }
  const double rho = free_count > 0 ? free_sum / free_count : 0.5 * (ub + lb);
  sol.bias = -rho;
  sol.beta.resize(l);
  for (Eigen::Index t = 0; t < l; ++t) sol.beta(t) = a[t] - a[t + l];
  return sol;
}

/// Dual objective 1/2 b^T K b + eps*|b|_1 - y^T b of an SVR solution.
inline double svr_dual_objective(const Eigen::MatrixXd& kernel, const Eigen::VectorXd& y, const Eigen::VectorXd& beta,
                                 double epsilon) {
  return 0.5 * beta.dot(kernel * beta) + epsilon * beta.lpNorm<1>() - y.dot(beta);
}

/// Fits epsilon-SVR. A solver that exhausts its pass budget returns its last
/// iterate with `converged == false` instead of failing.
inline TrainedRegressor fit_epsilon_svr(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const RegressorConfig& config) {
  check_training_shape(x, y, 2);
  config.svr.validate();
  TrainedRegressor model;
  model.kernel = config.kernel.resolved(x.cols());
  model.kernel.validate();
  model.support = x;
  const SvrSolution sol = solve_svr_dual(gram(model.kernel, x), y, config.svr);
  model.dual_coeffs = sol.beta;
  model.bias = sol.bias;
  model.converged = sol.converged;
  model.iterations = sol.iterations;
  return model;
}

inline TrainedRegressor fit_regressor(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const RegressorConfig& config) {
  switch (config.backend) {
    case Backend::KernelRidge: return fit_kernel_ridge(x, y, config.kernel, config.ridge);
    case Backend::EpsilonSvr: return fit_epsilon_svr(x, y, config);
  }
  fail(Errc::ConfigError, "unknown regression backend");
}

/// Counts training samples whose epsilon-insensitive KKT condition is
/// violated by more than `tol` (residual r = y - f(x)):
///   beta = 0        ->  |r| <= eps
///   0 < beta < C    ->  r == eps       -C < beta < 0  ->  r == -eps
///   beta = C        ->  r >= eps       beta = -C      ->  r <= -eps
inline std::size_t svr_kkt_violations(const TrainedRegressor& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                      const SvrParams& params, double tol) {
  const Eigen::VectorXd f = predict(model, x);
  std::size_t count = 0;
  for (Eigen::Index j = 0; j < y.size(); ++j) {
    const double r = y(j) - f(j);
    const double b = model.dual_coeffs(j);
    const double eps = params.epsilon;
    double violation = 0.0;
    if (b == 0.0) {
      violation = std::max(0.0, std::abs(r) - eps);
    } else if (b >= params.c) {
      violation = std::max(0.0, eps - r);
    } else if (b <= -params.c) {
      violation = std::max(0.0, r + eps);
    } else if (b > 0.0) {
      violation = std::abs(r - eps);
    } else {
      violation = std::abs(r + eps);
    }
    if (violation > tol) ++count;
  }
  return count;
}

}  // namespace iae

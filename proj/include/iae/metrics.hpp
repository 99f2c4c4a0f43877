#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "iae/dataset.hpp"
#include "iae/error.hpp"

namespace iae {

enum class FitnessCriterion { SeparabilityDistance, ClassCorrelation };

/// Per-run evaluation on a test partition.
struct RunMetrics {
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double mae_nc = 0.0;
  double mae_all = 0.0;
  double icc = 0.0;
};

namespace detail {

inline void require_same_length(std::size_t a, std::size_t b) {
  if (a != b) fail(Errc::LengthMismatch, "vectors differ in length (" + std::to_string(a) + " vs " + std::to_string(b) + ")");
}

inline double mean(std::span<const double> v) {
  // exact for constant vectors, so their deviations vanish
  if (!v.empty() && std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); })) return v.front();
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double sample_variance(std::span<const double> v, double mu) {
  double s = 0.0;
  for (double x : v) s += (x - mu) * (x - mu);
  return s / static_cast<double>(v.size() - 1);
}

}  // namespace detail

inline double mae(std::span<const double> estimates, std::span<const double> ages) {
  detail::require_same_length(estimates.size(), ages.size());
  if (estimates.empty()) fail(Errc::EmptyInput, "mae of empty vectors");
  double s = 0.0;
  for (std::size_t i = 0; i < ages.size(); ++i) s += std::abs(estimates[i] - ages[i]);
  return s / static_cast<double>(ages.size());
}

/// lambda1: |mean_NC - mean_DG| / sqrt(var_NC + var_DG), sample variances.
/// Two point masses at different locations give `cap`.
inline double separability_distance(std::span<const double> estimates, std::span<const ClassTag> classes,
                                    double cap = 1e6) {
  detail::require_same_length(estimates.size(), classes.size());
  std::vector<double> nc;
  std::vector<double> dg;
  for (std::size_t i = 0; i < estimates.size(); ++i) (classes[i] == ClassTag::NC ? nc : dg).push_back(estimates[i]);
  if (nc.empty() || dg.empty()) fail(Errc::ClassMissing, "separability needs both classes");
  if (nc.size() < 2 || dg.size() < 2) fail(Errc::TooFewPerClass, "separability needs >= 2 samples per class");
  const double m_nc = detail::mean(nc);
  const double m_dg = detail::mean(dg);
  const double spread = detail::sample_variance(nc, m_nc) + detail::sample_variance(dg, m_dg);
  const double gap = std::abs(m_nc - m_dg);
  if (spread == 0.0) return gap == 0.0 ? 0.0 : cap;
  return gap / std::sqrt(spread);
}

inline double pearson(std::span<const double> a, std::span<const double> b) {
  detail::require_same_length(a.size(), b.size());
  if (a.size() < 2) fail(Errc::TooFewSamples, "pearson needs >= 2 pairs");
  const double ma = detail::mean(a);
  const double mb = detail::mean(b);
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) fail(Errc::ZeroVariance, "pearson of a constant vector");
  const double r = sab / std::sqrt(saa * sbb);
  return std::clamp(r, -1.0, 1.0);
}

/// lambda2: absolute point-biserial correlation between estimates and the
/// 0 (NC) / 1 (DG) indicator.
inline double class_correlation(std::span<const double> estimates, std::span<const ClassTag> classes) {
  detail::require_same_length(estimates.size(), classes.size());
  std::vector<double> indicator;
  indicator.reserve(classes.size());
  bool has_nc = false;
  bool has_dg = false;
  for (ClassTag c : classes) {
    indicator.push_back(c == ClassTag::DG ? 1.0 : 0.0);
    (c == ClassTag::DG ? has_dg : has_nc) = true;
  }
  if (!has_nc || !has_dg) fail(Errc::ClassMissing, "class correlation needs both classes");
  return std::abs(pearson(estimates, indicator));
}

/// ICC(2,1): two-way random effects, absolute agreement, single measure, over
/// the n x 2 table [ages, estimates].
inline double icc(std::span<const double> estimates, std::span<const double> ages) {
  detail::require_same_length(estimates.size(), ages.size());
  const std::size_t n = ages.size();
  if (n < 3) fail(Errc::TooFewSamples, "ICC needs >= 3 subjects");
  constexpr double k = 2.0;
  const double nn = static_cast<double>(n);

  double grand = 0.0;
  double col_a = 0.0;
  double col_e = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    col_a += ages[i];
    col_e += estimates[i];
  }
  grand = (col_a + col_e) / (k * nn);
  col_a /= nn;
  col_e /= nn;

  double ss_rows = 0.0;
  double ss_total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double row_mean = 0.5 * (ages[i] + estimates[i]);
    ss_rows += (row_mean - grand) * (row_mean - grand);
    ss_total += (ages[i] - grand) * (ages[i] - grand) + (estimates[i] - grand) * (estimates[i] - grand);
  }
  ss_rows *= k;
  const double ss_cols = nn * ((col_a - grand) * (col_a - grand) + (col_e - grand) * (col_e - grand));
  const double ss_err = std::max(0.0, ss_total - ss_rows - ss_cols);

  const double ms_rows = ss_rows / (nn - 1.0);
  const double ms_cols = ss_cols / (k - 1.0);
  const double ms_err = ss_err / ((nn - 1.0) * (k - 1.0));
  if (ms_rows == 0.0) fail(Errc::DegenerateAnova, "zero between-subject variance");
  return (ms_rows - ms_err) / (ms_rows + (k - 1.0) * ms_err + k * (ms_cols - ms_err) / nn);
}

/// Fitness of a candidate under the chosen criterion; NaN when undefined
/// (constant estimates under lambda2).
inline double fitness(FitnessCriterion criterion, std::span<const double> estimates, std::span<const ClassTag> classes,
                      double cap = 1e6) {
  if (criterion == FitnessCriterion::SeparabilityDistance) return separability_distance(estimates, classes, cap);
  try {
    return class_correlation(estimates, classes);
  } catch (const Error& e) {
    if (e.code() == Errc::ZeroVariance) return std::numeric_limits<double>::quiet_NaN();
    throw;
  }
}

/// Metrics of test-partition estimates. ICC is taken over NC samples, whose
/// estimates are meant to agree with chronological age.
inline RunMetrics evaluate(std::span<const double> estimates, std::span<const double> ages,
                           std::span<const ClassTag> classes, double cap = 1e6) {
  detail::require_same_length(estimates.size(), ages.size());
  detail::require_same_length(estimates.size(), classes.size());
  std::vector<double> nc_est;
  std::vector<double> nc_age;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    if (classes[i] == ClassTag::NC) {
      nc_est.push_back(estimates[i]);
      nc_age.push_back(ages[i]);
    }
  }
  if (nc_est.empty()) fail(Errc::EmptyNcGroup, "test partition has no NC samples");
  RunMetrics m;
  m.lambda1 = separability_distance(estimates, classes, cap);
  m.lambda2 = class_correlation(estimates, classes);
  m.mae_nc = mae(nc_est, nc_age);
  m.mae_all = mae(estimates, ages);
  m.icc = icc(nc_est, nc_age);
  return m;
}

}  // namespace iae

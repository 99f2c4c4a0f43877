#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "iae/dataset.hpp"
#include "iae/error.hpp"
#include "iae/metrics.hpp"
#include "iae/parallel.hpp"
#include "iae/regress.hpp"

namespace iae {

enum class Mechanism { TAE, PAE, IAE };

constexpr std::string_view mechanism_name(Mechanism m) noexcept {
  switch (m) {
    case Mechanism::TAE: return "TAE";
    case Mechanism::PAE: return "PAE";
    case Mechanism::IAE: return "IAE";
  }
  return "?";
}

/// Label offsets in years: p for NC samples, q for DG samples.
struct DeviationPair {
  double p = 0.0;
  double q = 0.0;

  friend bool operator==(const DeviationPair&, const DeviationPair&) = default;
};

namespace detail {

// min, min+step, ..., with max always included
inline std::vector<double> lattice(double lo, double hi, double step) {
  std::vector<double> out;
  const auto n = static_cast<long long>(std::floor((hi - lo) / step + 1e-9));
  for (long long k = 0; k <= n; ++k) out.push_back(lo + static_cast<double>(k) * step);
  if (hi - out.back() > 1e-9 * step) out.push_back(hi);
  return out;
}

}  // namespace detail

struct DeviationGrid {
  double p_min = -10.0;
  double p_max = 10.0;
  double q_min = -10.0;
  double q_max = 10.0;
  double step = 1.0;

  static DeviationGrid singleton(DeviationPair at) { return {at.p, at.p, at.q, at.q, 1.0}; }

  void validate() const {
    if (!(step > 0.0)) fail(Errc::ConfigError, "deviation grid step must be positive");
    if (!(p_min <= p_max) || !(q_min <= q_max)) fail(Errc::ConfigError, "deviation grid bounds are inverted");
  }

  std::vector<double> p_values() const { return detail::lattice(p_min, p_max, step); }
  std::vector<double> q_values() const { return detail::lattice(q_min, q_max, step); }

  /// Scan order: p ascending (outer), q ascending (inner).
  std::vector<DeviationPair> candidates() const {
    validate();
    std::vector<DeviationPair> out;
    for (double p : p_values()) {
      for (double q : q_values()) out.push_back({p, q});
    }
    return out;
  }
};

struct FusionGrid {
  double w_min = 0.0;
  double w_max = 1.0;
  double step = 0.01;

  static FusionGrid singleton(double w_t) { return {w_t, w_t, 1.0}; }

  void validate() const {
    if (!(step > 0.0 && step <= 1.0)) fail(Errc::ConfigError, "w_step must lie in (0, 1]");
    if (!(0.0 <= w_min && w_min <= w_max && w_max <= 1.0)) fail(Errc::ConfigError, "w range must lie within [0, 1]");
  }

  std::vector<double> values() const {
    validate();
    return detail::lattice(w_min, w_max, step);
  }
};

/// Convex weights; w_p is always 1 - w_t.
class FusionWeights {
 public:
  explicit FusionWeights(double w_t = 1.0) : w_t_(w_t), w_p_(1.0 - w_t) {
    if (!(w_t >= 0.0 && w_t <= 1.0)) fail(Errc::ConfigError, "w_t must lie in [0, 1]");
  }
  double w_t() const noexcept { return w_t_; }
  double w_p() const noexcept { return w_p_; }

 private:
  double w_t_;
  double w_p_;
};

/// A full scan: every candidate with its objective value (NaN where the
/// objective is undefined) and the index of the selected extremum.
template <typename Candidate>
struct GridTrace {
  std::vector<Candidate> candidates;
  std::vector<double> values;
  std::size_t selected = 0;

  const Candidate& best() const { return candidates.at(selected); }
  double best_value() const { return values.at(selected); }
};

struct MechanismConfig {
  RegressorConfig regressor;
  FeaturePipeline features;
  DeviationGrid grid;
  FusionGrid weights;
  FitnessCriterion criterion = FitnessCriterion::SeparabilityDistance;
  double lambda1_cap = 1e6;
  SplitRatios inner_ratios;
  unsigned threads = 0;
};

/// Gamma[.]: feature pipeline fitted on the training rows plus a regressor.
struct AgeModel {
  FittedFeatures features;
  TrainedRegressor regressor;

  std::vector<double> predict(const Dataset& data, std::span<const Index> idx) const {
    const Eigen::VectorXd y = iae::predict(regressor, features.transform(select_rows(data.features(), idx)));
    return {y.data(), y.data() + y.size()};
  }
};

namespace detail {

inline Eigen::VectorXd to_vector(std::span<const double> v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline void require_both_classes(const Dataset& data, std::span<const Index> idx, std::size_t per_class,
                                 std::string_view what) {
  for (ClassTag tag : {ClassTag::NC, ClassTag::DG}) {
    if (filter_class(data, idx, tag).size() < per_class) {
      fail(Errc::TooFewSamples, std::string(what) + " needs >= " + std::to_string(per_class) + " " +
                                    std::string(class_name(tag)) + " samples");
    }
  }
}

}  // namespace detail

/// Seed of the inner re-split used by IAE for a given outer split seed.
inline std::uint64_t inner_split_seed(std::uint64_t outer_seed) {
  return detail::splitmix64(outer_seed ^ 0x1AE1AE1AE1AE1AEULL);
}

inline AgeModel fit_age_model(const Dataset& data, std::span<const Index> idx, std::span<const double> labels,
                              const MechanismConfig& config) {
  if (idx.size() != labels.size()) fail(Errc::LengthMismatch, "one label per training row required");
  AgeModel model;
  model.features = fit_features(config.features, data, idx);
  model.regressor =
      fit_regressor(model.features.transform(select_rows(data.features(), idx)), detail::to_vector(labels), config.regressor);
  return model;
}

/// Error-oriented estimation: NC rows of `idx`, real ages as labels.
inline AgeModel tae_train(const Dataset& data, std::span<const Index> idx, const MechanismConfig& config) {
  const IndexSet nc = filter_class(data, idx, ClassTag::NC);
  if (nc.size() < 2) fail(Errc::TooFewSamples, "TAE needs >= 2 NC training samples");
  const std::vector<double> labels = select(data.ages(), nc);
  return fit_age_model(data, nc, labels, config);
}

/// NC labels become age + p, DG labels age + q.
inline std::vector<double> shift_labels(const Dataset& data, std::span<const Index> idx, DeviationPair deviation) {
  std::vector<double> out;
  out.reserve(idx.size());
  for (Index i : idx) out.push_back(data.age(i) + (data.tag(i) == ClassTag::NC ? deviation.p : deviation.q));
  return out;
}

/// Relative margin a candidate's fitness must exceed the incumbent by.
inline constexpr double kFitnessTieTolerance = 1e-9;

inline bool fitness_improves(double candidate, double incumbent) {
  return candidate > incumbent + kFitnessTieTolerance * std::max(1.0, std::abs(incumbent));
}

struct PaeResult {
  DeviationPair deviation;
  AgeModel model;
  GridTrace<DeviationPair> trace;
  std::size_t nonconverged_fits = 0;
};

/// Deviation-oriented estimation: one regressor per lattice point trained on
/// shifted labels of `train`, scored on `val`; the fittest point wins, ties
/// going to the first in scan order.
inline PaeResult pae_train(const Dataset& data, std::span<const Index> train, std::span<const Index> val,
                           const MechanismConfig& config) {
  detail::require_both_classes(data, train, 1, "PAE training partition");
  detail::require_both_classes(data, val, 2, "PAE validation partition");

  PaeResult result;
  result.trace.candidates = config.grid.candidates();
  const std::size_t n = result.trace.candidates.size();
  result.trace.values.assign(n, std::numeric_limits<double>::quiet_NaN());

  // the feature pipeline only sees features, so one fit serves every candidate
  const FittedFeatures features = fit_features(config.features, data, train);
  const Eigen::MatrixXd train_x = features.transform(select_rows(data.features(), train));
  const Eigen::MatrixXd val_x = features.transform(select_rows(data.features(), val));
  const std::vector<ClassTag> val_tags = select(data.tags(), val);
  std::vector<char> nonconverged(n, 0);

  parallel_for(n, config.threads, [&](std::size_t c) {
    const std::vector<double> labels = shift_labels(data, train, result.trace.candidates[c]);
    const TrainedRegressor reg = fit_regressor(train_x, detail::to_vector(labels), config.regressor);
    nonconverged[c] = reg.converged ? 0 : 1;
    const Eigen::VectorXd est = predict(reg, val_x);
    result.trace.values[c] =
        fitness(config.criterion, std::span<const double>(est.data(), static_cast<std::size_t>(est.size())), val_tags,
                config.lambda1_cap);
  });
  for (char f : nonconverged) result.nonconverged_fits += static_cast<std::size_t>(f);

  // a common shift of p and q only moves the bias, so diagonals tie up to
  // rounding; the first in scan order keeps such ties
  std::optional<std::size_t> best;
  for (std::size_t c = 0; c < n; ++c) {
    const double v = result.trace.values[c];
    if (std::isnan(v)) continue;
    if (!best || fitness_improves(v, result.trace.values[*best])) best = c;
  }
  if (!best) fail(Errc::DegenerateFitness, "fitness undefined on every deviation candidate");
  result.trace.selected = *best;
  result.deviation = result.trace.candidates[*best];

  // refit of the winner; training is deterministic so this is the scanned model
  result.model.features = features;
  const std::vector<double> labels = shift_labels(data, train, result.deviation);
  result.model.regressor = fit_regressor(train_x, detail::to_vector(labels), config.regressor);
  return result;
}

/// Weight scan minimizing the NC-group MAE of the blend; ties go to the
/// smallest w_t.
inline std::pair<FusionWeights, GridTrace<double>> fit_fusion_weights(std::span<const double> y_hat_t,
                                                                      std::span<const double> y_hat_p,
                                                                      std::span<const double> ages,
                                                                      const std::vector<bool>& nc_mask,
                                                                      const FusionGrid& grid) {
  if (y_hat_t.size() != y_hat_p.size() || y_hat_t.size() != ages.size() || y_hat_t.size() != nc_mask.size()) {
    fail(Errc::LengthMismatch, "fusion inputs differ in length");
  }
  std::vector<std::size_t> nc;
  for (std::size_t i = 0; i < nc_mask.size(); ++i) {
    if (nc_mask[i]) nc.push_back(i);
  }
  if (nc.empty()) fail(Errc::EmptyNcGroup, "weight search needs at least one NC sample");

  GridTrace<double> trace;
  trace.candidates = grid.values();
  trace.values.reserve(trace.candidates.size());
  for (std::size_t c = 0; c < trace.candidates.size(); ++c) {
    const FusionWeights w(trace.candidates[c]);
    double err = 0.0;
    for (std::size_t i : nc) err += std::abs(w.w_t() * y_hat_t[i] + w.w_p() * y_hat_p[i] - ages[i]);
    trace.values.push_back(err / static_cast<double>(nc.size()));
    if (trace.values[c] < trace.values[trace.selected]) trace.selected = c;
  }
  return {FusionWeights(trace.best()), std::move(trace)};
}

inline std::vector<double> iae_predict(std::span<const double> y_hat_t, std::span<const double> y_hat_p,
                                       const FusionWeights& weights) {
  if (y_hat_t.size() != y_hat_p.size()) fail(Errc::LengthMismatch, "TAE and PAE estimates differ in length");
  std::vector<double> out(y_hat_t.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = weights.w_t() * y_hat_t[i] + weights.w_p() * y_hat_p[i];
  return out;
}

// ---------------------------------------------------------------------------
// Outer-split protocols. Each returns estimates for the outer test partition.

struct MechanismOutput {
  Mechanism mechanism = Mechanism::TAE;
  IndexSet eval_idx;
  std::vector<double> estimates;
  std::optional<DeviationPair> deviation;
  std::optional<FusionWeights> weights;
  std::optional<GridTrace<DeviationPair>> deviation_trace;
  std::optional<GridTrace<double>> weight_trace;
  // IAE only: the two constituent estimates on the outer test partition and
  // the inner re-split they were trained on
  std::vector<double> tae_estimates;
  std::vector<double> pae_estimates;
  std::optional<TriSplit> inner_split;
  std::size_t nonconverged_fits = 0;
};

inline MechanismOutput run_tae(const Dataset& data, const TriSplit& outer, const MechanismConfig& config) {
  MechanismOutput out;
  out.mechanism = Mechanism::TAE;
  const AgeModel model = tae_train(data, outer.train_val(), config);
  out.eval_idx = outer.test;
  out.estimates = model.predict(data, outer.test);
  out.nonconverged_fits = model.regressor.converged ? 0 : 1;
  return out;
}

inline MechanismOutput run_pae(const Dataset& data, const TriSplit& outer, const MechanismConfig& config) {
  MechanismOutput out;
  out.mechanism = Mechanism::PAE;
  PaeResult pae = pae_train(data, outer.train, outer.val, config);
  out.eval_idx = outer.test;
  out.estimates = pae.model.predict(data, outer.test);
  out.deviation = pae.deviation;
  out.deviation_trace = std::move(pae.trace);
  out.nonconverged_fits = pae.nonconverged_fits;
  return out;
}

/// Integrated estimation: re-split train ∪ val, fit TAE (inner-train NC rows)
/// and PAE (inner train / inner val), choose weights on the inner-test NC
/// group, then blend both models' predictions on the outer test partition.
inline MechanismOutput run_iae(const Dataset& data, const TriSplit& outer, const MechanismConfig& config) {
  MechanismOutput out;
  out.mechanism = Mechanism::IAE;
  const TriSplit inner = merge_and_resplit(outer, data, config.inner_ratios, inner_split_seed(outer.seed));
  detail::require_both_classes(data, inner.test, 1, "IAE inner test partition");

  const AgeModel tae = tae_train(data, inner.train, config);
  PaeResult pae = pae_train(data, inner.train, inner.val, config);

  const std::vector<double> inner_t = tae.predict(data, inner.test);
  const std::vector<double> inner_p = pae.model.predict(data, inner.test);
  const std::vector<double> inner_ages = select(data.ages(), inner.test);
  std::vector<bool> nc_mask;
  for (Index i : inner.test) nc_mask.push_back(data.tag(i) == ClassTag::NC);
  auto [weights, weight_trace] = fit_fusion_weights(inner_t, inner_p, inner_ages, nc_mask, config.weights);

  out.eval_idx = outer.test;
  out.tae_estimates = tae.predict(data, outer.test);
  out.pae_estimates = pae.model.predict(data, outer.test);
  out.estimates = iae_predict(out.tae_estimates, out.pae_estimates, weights);
  out.deviation = pae.deviation;
  out.weights = weights;
  out.deviation_trace = std::move(pae.trace);
  out.weight_trace = std::move(weight_trace);
  out.inner_split = inner;
  out.nonconverged_fits = pae.nonconverged_fits + (tae.regressor.converged ? 0 : 1);
  return out;
}

inline MechanismOutput run_mechanism(Mechanism m, const Dataset& data, const TriSplit& outer,
                                     const MechanismConfig& config) {
  switch (m) {
    case Mechanism::TAE: return run_tae(data, outer, config);
    case Mechanism::PAE: return run_pae(data, outer, config);
    case Mechanism::IAE: return run_iae(data, outer, config);
  }
  fail(Errc::ConfigError, "unknown mechanism");
}

}  // namespace iae

#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "iae/config.hpp"
#include "iae/dataset.hpp"
#include "iae/error.hpp"
#include "iae/mechanisms.hpp"
#include "iae/metrics.hpp"

namespace iae {

// ---------------------------------------------------------------------------
// Synthetic cohorts

/// Two classes drawn over the same latent-age range with the same linear
/// feature map; DG recorded ages sit `delta` years below the latent age.
struct SynthSpec {
  int n_nc = 200;
  int n_dg = 200;
  int dim = 5;
  double age_min = 30.0;
  double age_max = 80.0;
  double noise_sd = 0.5;
  double delta = 5.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_nc < 4 || n_dg < 4) fail(Errc::ConfigError, "synth needs n_nc, n_dg >= 4");
    if (dim < 1) fail(Errc::ConfigError, "synth dim must be >= 1");
    if (!(noise_sd >= 0.0)) fail(Errc::ConfigError, "synth noise_sd must be >= 0");
    if (!(age_min < age_max)) fail(Errc::ConfigError, "synth age range is empty");
    if (!(age_min - delta > 0.0) || !(age_min > 0.0)) fail(Errc::ConfigError, "synth would produce non-positive ages");
  }
};

inline Dataset synth_generate(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> loading_dist(0.5, 1.5);
  std::uniform_real_distribution<double> age_dist(spec.age_min, spec.age_max);
  std::normal_distribution<double> noise(0.0, 1.0);

  const int n = spec.n_nc + spec.n_dg;
  std::vector<double> loading(static_cast<std::size_t>(spec.dim));
  for (double& l : loading) l = loading_dist(rng);

  Eigen::MatrixXd x(n, spec.dim);
  std::vector<double> ages;
  std::vector<ClassTag> tags;
  for (int i = 0; i < n; ++i) {
    const bool dg = i >= spec.n_nc;
    const double latent = age_dist(rng);
    for (int j = 0; j < spec.dim; ++j) x(i, j) = loading[static_cast<std::size_t>(j)] * latent + spec.noise_sd * noise(rng);
    ages.push_back(dg ? latent - spec.delta : latent);
    tags.push_back(dg ? ClassTag::DG : ClassTag::NC);
  }
  std::vector<std::string> names;
  for (int j = 0; j < spec.dim; ++j) names.push_back("f" + std::to_string(j + 1));
  return Dataset(std::move(x), std::move(ages), std::move(tags), std::move(names));
}

inline SynthSpec synth_from_json(const Json& j) {
  detail::check_keys(j, {"n_nc", "n_dg", "dim", "age_min", "age_max", "age_range", "noise_sd", "delta", "seed"}, "synth");
  SynthSpec s;
  s.n_nc = detail::get_or<int>(j, "n_nc", s.n_nc);
  s.n_dg = detail::get_or<int>(j, "n_dg", s.n_dg);
  s.dim = detail::get_or<int>(j, "dim", s.dim);
  s.age_min = detail::get_or<double>(j, "age_min", s.age_min);
  s.age_max = detail::get_or<double>(j, "age_max", s.age_max);
  std::tie(s.age_min, s.age_max) = detail::get_range(j, "age_range", {s.age_min, s.age_max});
  s.noise_sd = detail::get_or<double>(j, "noise_sd", s.noise_sd);
  s.delta = detail::get_or<double>(j, "delta", s.delta);
  s.seed = detail::get_or<std::uint64_t>(j, "seed", s.seed);
  s.validate();
  return s;
}

inline Json to_json(const SynthSpec& s) {
  return Json{{"n_nc", s.n_nc},         {"n_dg", s.n_dg},   {"dim", s.dim},   {"age_min", s.age_min},
              {"age_max", s.age_max},   {"noise_sd", s.noise_sd}, {"delta", s.delta}, {"seed", s.seed}};
}

// ---------------------------------------------------------------------------
// Number formatting shared by every text output: shortest round-trip form.

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

/// CSV text for a dataset, with feature columns then age and class.
inline std::string dataset_to_csv(const Dataset& data) {
  std::string out;
  for (const auto& name : data.feature_names()) out += name + ",";
  out += "age,class\n";
  for (Index i = 0; i < data.size(); ++i) {
    for (Index j = 0; j < data.dim(); ++j) {
      out += format_double(data.features()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
      out += ',';
    }
    out += format_double(data.age(i));
    out += ',';
    out += class_name(data.tag(i));
    out += '\n';
  }
  return out;
}

inline SchemaConfig synth_schema() {
  SchemaConfig s;
  s.target_column = "age";
  s.class_column = "class";
  s.nc_value = "NC";
  s.dg_value = "DG";
  return s;
}

// ---------------------------------------------------------------------------
// Dataset description (per-class counts and age statistics)

struct ClassSummary {
  Index count = 0;
  double age_min = 0.0;
  double age_max = 0.0;
  double age_mean = 0.0;
  double age_sd = 0.0;
};

struct DatasetSummary {
  Index samples = 0;
  Index features = 0;
  ClassSummary nc;
  ClassSummary dg;
};

inline DatasetSummary describe(const Dataset& data) {
  DatasetSummary s;
  s.samples = data.size();
  s.features = data.dim();
  for (ClassTag tag : {ClassTag::NC, ClassTag::DG}) {
    ClassSummary& c = tag == ClassTag::NC ? s.nc : s.dg;
    std::vector<double> ages;
    for (Index i = 0; i < data.size(); ++i) {
      if (data.tag(i) == tag) ages.push_back(data.age(i));
    }
    c.count = ages.size();
    if (ages.empty()) continue;
    c.age_min = *std::min_element(ages.begin(), ages.end());
    c.age_max = *std::max_element(ages.begin(), ages.end());
    c.age_mean = detail::mean(ages);
    c.age_sd = ages.size() > 1 ? std::sqrt(detail::sample_variance(ages, c.age_mean)) : 0.0;
  }
  return s;
}

inline Json to_json(const ClassSummary& c) {
  return Json{{"count", c.count}, {"age_min", c.age_min}, {"age_max", c.age_max}, {"age_mean", c.age_mean}, {"age_sd", c.age_sd}};
}

inline Json to_json(const DatasetSummary& s) {
  return Json{{"samples", s.samples}, {"features", s.features}, {"NC", to_json(s.nc)}, {"DG", to_json(s.dg)}};
}

// ---------------------------------------------------------------------------
// Experiment configuration

struct ExperimentConfig {
  std::optional<std::string> data_path;
  SchemaConfig schema;
  std::optional<SynthSpec> synth;
  std::vector<Mechanism> mechanisms{Mechanism::TAE, Mechanism::PAE, Mechanism::IAE};
  MechanismConfig mechanism;
  SplitRatios ratios;
  int repetitions = 30;
  std::uint64_t base_seed = 0;

  void validate() const {
    if (repetitions < 1) fail(Errc::ConfigError, "repetitions must be >= 1");
    if (data_path.has_value() == synth.has_value()) fail(Errc::ConfigError, "exactly one of data or synth is required");
    ratios.validate();
    mechanism.inner_ratios.validate();
    mechanism.regressor.validate();
    mechanism.grid.validate();
    mechanism.weights.validate();
    if (mechanism.features.pca && !(mechanism.features.pca_precision > 0.0 && mechanism.features.pca_precision <= 1.0)) {
      fail(Errc::ConfigError, "pca_precision must lie in (0, 1]");
    }
  }
};

/// `base_dir` resolves a relative data path (normally the config file's
/// directory).
inline ExperimentConfig experiment_from_json(const Json& j, const std::filesystem::path& base_dir = {}) {
  detail::check_keys(j,
                     {"data", "synth", "mechanisms", "mechanism", "criterion", "regressor", "p_range", "q_range", "p_step",
                      "w_range", "w_step", "ratios", "inner_ratios", "repetitions", "base_seed", "standardize", "pca",
                      "pca_precision", "threads", "lambda1_cap"},
                     "experiment config");
  ExperimentConfig c;
  if (j.contains("data")) {
    const Json& d = j.at("data");
    if (!d.is_object() || !d.contains("path")) fail(Errc::ConfigError, "data requires a path");
    Json schema = d;
    schema.erase("path");
    c.schema = schema_from_json(schema, "data");
    std::filesystem::path p = d.at("path").get<std::string>();
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    c.data_path = p.lexically_normal().string();
  }
  if (j.contains("synth")) c.synth = synth_from_json(j.at("synth"));

  for (const char* key : {"mechanisms", "mechanism"}) {
    if (!j.contains(key)) continue;
    const Json& m = j.at(key);
    c.mechanisms.clear();
    if (m.is_string()) {
      c.mechanisms.push_back(mechanism_from_string(m.get<std::string>()));
    } else {
      for (const auto& s : detail::get_or<std::vector<std::string>>(j, key, {})) {
        c.mechanisms.push_back(mechanism_from_string(s));
      }
    }
  }
  MechanismConfig& mc = c.mechanism;
  if (j.contains("criterion")) mc.criterion = criterion_from_string(detail::get_or<std::string>(j, "criterion", ""));
  if (j.contains("regressor")) mc.regressor = regressor_from_json(j.at("regressor"));
  std::tie(mc.grid.p_min, mc.grid.p_max) = detail::get_range(j, "p_range", {mc.grid.p_min, mc.grid.p_max});
  std::tie(mc.grid.q_min, mc.grid.q_max) = detail::get_range(j, "q_range", {mc.grid.q_min, mc.grid.q_max});
  mc.grid.step = detail::get_or<double>(j, "p_step", mc.grid.step);
  std::tie(mc.weights.w_min, mc.weights.w_max) = detail::get_range(j, "w_range", {mc.weights.w_min, mc.weights.w_max});
  mc.weights.step = detail::get_or<double>(j, "w_step", mc.weights.step);
  c.ratios = detail::get_ratios(j, "ratios", c.ratios);
  mc.inner_ratios = detail::get_ratios(j, "inner_ratios", c.ratios);
  c.repetitions = detail::get_or<int>(j, "repetitions", c.repetitions);
  c.base_seed = detail::get_or<std::uint64_t>(j, "base_seed", c.base_seed);
  mc.features.standardize = detail::get_or<bool>(j, "standardize", mc.features.standardize);
  mc.features.pca = detail::get_or<bool>(j, "pca", mc.features.pca);
  mc.features.pca_precision = detail::get_or<double>(j, "pca_precision", mc.features.pca_precision);
  mc.threads = detail::get_or<unsigned>(j, "threads", mc.threads);
  mc.lambda1_cap = detail::get_or<double>(j, "lambda1_cap", mc.lambda1_cap);
  c.validate();
  return c;
}

inline ExperimentConfig load_experiment(const std::string& path) {
  return experiment_from_json(load_config_tree(path), std::filesystem::path(path).parent_path());
}

/// Resolved configuration, as echoed into summary.json. Thread count is
/// deliberately left out: it never changes results.
inline Json to_json(const ExperimentConfig& c) {
  Json j;
  if (c.data_path) {
    Json d = to_json(c.schema);
    d["path"] = *c.data_path;
    j["data"] = d;
  }
  if (c.synth) j["synth"] = to_json(*c.synth);
  Json mechs = Json::array();
  for (Mechanism m : c.mechanisms) mechs.push_back(std::string(mechanism_name(m)));
  j["mechanisms"] = mechs;
  const MechanismConfig& mc = c.mechanism;
  j["criterion"] = criterion_name(mc.criterion);
  j["regressor"] = to_json(mc.regressor);
  j["p_range"] = {mc.grid.p_min, mc.grid.p_max};
  j["q_range"] = {mc.grid.q_min, mc.grid.q_max};
  j["p_step"] = mc.grid.step;
  j["w_range"] = {mc.weights.w_min, mc.weights.w_max};
  j["w_step"] = mc.weights.step;
  j["ratios"] = {c.ratios.train, c.ratios.val, c.ratios.test};
  j["inner_ratios"] = {mc.inner_ratios.train, mc.inner_ratios.val, mc.inner_ratios.test};
  j["repetitions"] = c.repetitions;
  j["base_seed"] = c.base_seed;
  j["standardize"] = mc.features.standardize;
  j["pca"] = mc.features.pca;
  j["pca_precision"] = mc.features.pca_precision;
  j["lambda1_cap"] = mc.lambda1_cap;
  return j;
}

inline Dataset load_experiment_data(const ExperimentConfig& c) {
  if (c.synth) return synth_generate(*c.synth);
  return load_csv(*c.data_path, c.schema);
}

// ---------------------------------------------------------------------------
// Repeated hold-out runs

struct RepetitionRecord {
  int rep = 0;
  std::uint64_t seed = 0;
  std::uint64_t split_hash = 0;
  bool ok = false;
  std::string error;
  RunMetrics metrics;
  std::optional<DeviationPair> deviation;
  std::optional<FusionWeights> weights;
  std::size_t nonconverged_fits = 0;
};

struct ScatterRecord {
  int rep = 0;
  Mechanism mechanism = Mechanism::TAE;
  Index sample_id = 0;
  ClassTag class_tag = ClassTag::NC;
  double real_age = 0.0;
  double estimated_age = 0.0;
};

struct MechanismSummary {
  Mechanism mechanism = Mechanism::TAE;
  std::vector<RepetitionRecord> runs;
  RunMetrics mean;
  RunMetrics sd;
  std::size_t failures = 0;
};

struct ExperimentReport {
  Json config;
  DatasetSummary dataset;
  std::vector<MechanismSummary> mechanisms;
  std::vector<ScatterRecord> scatter;
};

namespace detail {

template <typename Field>
std::pair<double, double> mean_sd(const std::vector<RepetitionRecord>& runs, Field field) {
  std::vector<double> v;
  for (const auto& r : runs) {
    if (r.ok) v.push_back(field(r.metrics));
  }
  if (v.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  double s = 0.0;
  for (double x : v) s += x;
  const double mu = s / static_cast<double>(v.size());
  if (v.size() < 2) return {mu, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mu) * (x - mu);
  return {mu, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

inline void aggregate(MechanismSummary& m) {
  m.failures = static_cast<std::size_t>(std::count_if(m.runs.begin(), m.runs.end(), [](const auto& r) { return !r.ok; }));
  std::tie(m.mean.lambda1, m.sd.lambda1) = mean_sd(m.runs, [](const RunMetrics& x) { return x.lambda1; });
  std::tie(m.mean.lambda2, m.sd.lambda2) = mean_sd(m.runs, [](const RunMetrics& x) { return x.lambda2; });
  std::tie(m.mean.mae_nc, m.sd.mae_nc) = mean_sd(m.runs, [](const RunMetrics& x) { return x.mae_nc; });
  std::tie(m.mean.mae_all, m.sd.mae_all) = mean_sd(m.runs, [](const RunMetrics& x) { return x.mae_all; });
  std::tie(m.mean.icc, m.sd.icc) = mean_sd(m.runs, [](const RunMetrics& x) { return x.icc; });
}

}  // namespace detail

/// Repetition r splits with seed base_seed + r; every mechanism of a
/// repetition sees that same split. A failing mechanism/repetition is kept
/// in the report with its error and left out of the aggregates.
inline ExperimentReport run_repeated(const ExperimentConfig& config, const Dataset& data) {
  config.validate();
  ExperimentReport report;
  report.config = to_json(config);
  report.dataset = describe(data);
  for (Mechanism m : config.mechanisms) report.mechanisms.push_back(MechanismSummary{m, {}, {}, {}, 0});

  for (int rep = 0; rep < config.repetitions; ++rep) {
    const std::uint64_t seed = config.base_seed + static_cast<std::uint64_t>(rep);
    std::optional<TriSplit> split;
    std::string split_error;
    try {
      split = holdout_split(data, config.ratios, seed);
    } catch (const Error& e) {
      split_error = e.what();
    }
    for (auto& summary : report.mechanisms) {
      RepetitionRecord rec;
      rec.rep = rep;
      rec.seed = seed;
      if (!split) {
        rec.error = split_error;
        summary.runs.push_back(std::move(rec));
        continue;
      }
      rec.split_hash = split->hash();
      try {
        const MechanismOutput out = run_mechanism(summary.mechanism, data, *split, config.mechanism);
        const std::vector<double> ages = select(data.ages(), out.eval_idx);
        const std::vector<ClassTag> tags = select(data.tags(), out.eval_idx);
        rec.metrics = evaluate(out.estimates, ages, tags, config.mechanism.lambda1_cap);
        rec.deviation = out.deviation;
        rec.weights = out.weights;
        rec.nonconverged_fits = out.nonconverged_fits;
        rec.ok = true;
        for (std::size_t i = 0; i < out.eval_idx.size(); ++i) {
          report.scatter.push_back({rep, summary.mechanism, out.eval_idx[i], tags[i], ages[i], out.estimates[i]});
        }
      } catch (const Error& e) {
        rec.error = e.what();
      }
      summary.runs.push_back(std::move(rec));
    }
  }
  for (auto& summary : report.mechanisms) detail::aggregate(summary);
  return report;
}

inline ExperimentReport run_repeated(const ExperimentConfig& config) {
  return run_repeated(config, load_experiment_data(config));
}

// ---------------------------------------------------------------------------
// Report files

enum class ReportFormat { Json, Csv };

inline Json to_json(const RunMetrics& m) {
  return Json{{"lambda1", m.lambda1}, {"lambda2", m.lambda2}, {"mae_nc", m.mae_nc}, {"mae_all", m.mae_all}, {"icc", m.icc}};
}

inline Json summary_json(const ExperimentReport& report) {
  Json mechs = Json::array();
  for (const auto& m : report.mechanisms) {
    Json runs = Json::array();
    for (const auto& r : m.runs) {
      Json jr{{"rep", r.rep}, {"seed", r.seed}, {"split_hash", r.split_hash}, {"ok", r.ok}};
      if (r.ok) {
        jr["metrics"] = to_json(r.metrics);
        jr["nonconverged_fits"] = r.nonconverged_fits;
        if (r.deviation) jr["deviation"] = {{"p", r.deviation->p}, {"q", r.deviation->q}};
        if (r.weights) jr["weights"] = {{"w_t", r.weights->w_t()}, {"w_p", r.weights->w_p()}};
      } else {
        jr["error"] = r.error;
      }
      runs.push_back(std::move(jr));
    }
    mechs.push_back(Json{{"mechanism", std::string(mechanism_name(m.mechanism))},
                         {"repetitions", m.runs.size()},
                         {"failures", m.failures},
                         {"mean", to_json(m.mean)},
                         {"sd", to_json(m.sd)},
                         {"runs", std::move(runs)}});
  }
  return Json{{"config", report.config}, {"dataset", to_json(report.dataset)}, {"mechanisms", std::move(mechs)}};
}

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::IoError, "cannot write '" + path.string() + "'");
  out << text;
  if (!out) fail(Errc::IoError, "write to '" + path.string() + "' failed");
}

}  // namespace detail

inline std::string metrics_csv(const ExperimentReport& report) {
  std::string out = "mechanism,rep,seed,split_hash,ok,lambda1,lambda2,mae_nc,mae_all,icc,p,q,w_t,w_p\n";
  for (const auto& m : report.mechanisms) {
    for (const auto& r : m.runs) {
      out += std::string(mechanism_name(m.mechanism)) + "," + std::to_string(r.rep) + "," + std::to_string(r.seed) + "," +
             std::to_string(r.split_hash) + "," + (r.ok ? "1" : "0");
      auto cell = [&](std::optional<double> v) { out += "," + (v ? format_double(*v) : std::string()); };
      const auto ok = [&](double v) { return r.ok ? std::optional<double>(v) : std::nullopt; };
      cell(ok(r.metrics.lambda1));
      cell(ok(r.metrics.lambda2));
      cell(ok(r.metrics.mae_nc));
      cell(ok(r.metrics.mae_all));
      cell(ok(r.metrics.icc));
      cell(r.deviation ? std::optional<double>(r.deviation->p) : std::nullopt);
      cell(r.deviation ? std::optional<double>(r.deviation->q) : std::nullopt);
      cell(r.weights ? std::optional<double>(r.weights->w_t()) : std::nullopt);
      cell(r.weights ? std::optional<double>(r.weights->w_p()) : std::nullopt);
      out += '\n';
    }
  }
  return out;
}

inline std::string scatter_csv(const ExperimentReport& report) {
  std::string out = "rep,mechanism,sample_id,class,real_age,estimated_age\n";
  for (const auto& s : report.scatter) {
    out += std::to_string(s.rep) + "," + std::string(mechanism_name(s.mechanism)) + "," + std::to_string(s.sample_id) +
           "," + std::string(class_name(s.class_tag)) + "," + format_double(s.real_age) + "," +
           format_double(s.estimated_age) + "\n";
  }
  return out;
}

/// Writes summary.json and/or metrics.csv + scatter.csv; returns the paths.
inline std::vector<std::filesystem::path> emit_report(const ExperimentReport& report, const std::filesystem::path& out_dir,
                                                      const std::set<ReportFormat>& formats = {ReportFormat::Json,
                                                                                               ReportFormat::Csv}) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) fail(Errc::IoError, "cannot create '" + out_dir.string() + "': " + ec.message());
  std::vector<std::filesystem::path> written;
  if (formats.count(ReportFormat::Json)) {
    written.push_back(out_dir / "summary.json");
    detail::write_text(written.back(), summary_json(report).dump(2) + "\n");
  }
  if (formats.count(ReportFormat::Csv)) {
    written.push_back(out_dir / "metrics.csv");
    detail::write_text(written.back(), metrics_csv(report));
    written.push_back(out_dir / "scatter.csv");
    detail::write_text(written.back(), scatter_csv(report));
  }
  return written;
}

}  // namespace iae

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "iae/harness.hpp"
#include "oracles.hpp"

using namespace iae;
namespace fs = std::filesystem;

namespace {

const std::string kSource = IAE_SOURCE_DIR;

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("iae_harness_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

SynthSpec small_synth(std::uint64_t seed = 1) {
  SynthSpec s;
  s.n_nc = 30;
  s.n_dg = 30;
  s.dim = 3;
  s.seed = seed;
  return s;
}

ExperimentConfig fast_config(int reps = 3) {
  ExperimentConfig c;
  c.synth = small_synth();
  c.repetitions = reps;
  c.base_seed = 10;
  c.mechanism.regressor.backend = Backend::KernelRidge;
  c.mechanism.grid = {-2, 2, -2, 2, 1};
  c.mechanism.threads = 1;
  return c;
}

}  // namespace

// --- synthetic generator ------------------------------------------------------------

TEST(Synth, ZeroDeltaIndistinguishableAges) {
  SynthSpec s;
  s.n_nc = 500;
  s.n_dg = 500;
  s.delta = 0.0;
  s.seed = 2024;
  const Dataset d = synth_generate(s);
  oracle::Vec nc, dg;
  for (Index i = 0; i < d.size(); ++i) (d.tag(i) == ClassTag::NC ? nc : dg).push_back(d.age(i));
  const double se = std::sqrt(oracle::variance(nc) / 500.0 + oracle::variance(dg) / 500.0);
  EXPECT_LT(std::fabs(oracle::mean(nc) - oracle::mean(dg)), 2.0 * se);
}

TEST(Synth, Deterministic) {
  const SynthSpec s = small_synth(77);
  EXPECT_EQ(dataset_to_csv(synth_generate(s)), dataset_to_csv(synth_generate(s)));
  EXPECT_NE(dataset_to_csv(synth_generate(s)), dataset_to_csv(synth_generate(small_synth(78))));
}

TEST(Synth, DgAgesSitDeltaBelowFeatureImpliedAge) {
  SynthSpec s = small_synth(3);
  s.noise_sd = 0.0;
  s.delta = 5.0;
  const Dataset d = synth_generate(s);
  // noiseless features are loading * latent age, so f0 / latent is constant
  const double ratio = d.features()(0, 0) / d.age(0);
  for (Index i = 0; i < d.size(); ++i) {
    const double latent = d.age(i) + (d.tag(i) == ClassTag::DG ? 5.0 : 0.0);
    EXPECT_NEAR(d.features()(static_cast<Eigen::Index>(i), 0) / latent, ratio, 1e-12);
  }
  EXPECT_EQ(d.count(ClassTag::NC), 30u);
  EXPECT_EQ(d.count(ClassTag::DG), 30u);
}

TEST(Synth, Validation) {
  SynthSpec s = small_synth();
  s.n_nc = 2;
  EXPECT_THROW(s.validate(), Error);
  s = small_synth();
  s.noise_sd = -1;
  EXPECT_THROW(s.validate(), Error);
  s = small_synth();
  s.delta = 40;
  EXPECT_THROW(s.validate(), Error);
}

TEST(Synth, CsvRoundTrip) {
  const Dataset d = synth_generate(small_synth(4));
  const Dataset back = parse_dataset(dataset_to_csv(d), synth_schema());
  EXPECT_EQ(back.size(), d.size());
  EXPECT_EQ(back.features(), d.features());
  EXPECT_EQ(back.ages(), d.ages());
  EXPECT_EQ(back.tags(), d.tags());
}

// --- config --------------------------------------------------------------------------

TEST(ExperimentConfig, TomlAndJsonAgree) {
  const ExperimentConfig t = load_experiment(kSource + "/configs/hd.toml");
  ASSERT_TRUE(t.data_path);
  EXPECT_EQ(fs::path(*t.data_path), fs::path(kSource + "/data/heart_cleveland.csv").lexically_normal());
  EXPECT_EQ(t.mechanisms.size(), 3u);
  EXPECT_EQ(t.repetitions, 30);
  const ExperimentConfig j = load_experiment(kSource + "/configs/hd.json");
  EXPECT_EQ(j.mechanism.criterion, FitnessCriterion::ClassCorrelation);
  Json tj = to_json(t);
  Json jj = to_json(j);
  tj.erase("criterion");
  jj.erase("criterion");
  EXPECT_EQ(tj, jj);
}

TEST(ExperimentConfig, UnknownKeysRejected) {
  Json j = Json::parse(R"({"synth": {"n_nc": 10, "n_dg": 10}, "repetitons": 3})");
  try {
    experiment_from_json(j);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ConfigError);
    EXPECT_NE(std::string(e.what()).find("repetitons"), std::string::npos);
  }
  EXPECT_THROW(experiment_from_json(Json::parse(R"({"synth": {"n_nc": 10, "bogus": 1}})")), Error);
}

TEST(ExperimentConfig, SourceAndRangesValidated) {
  EXPECT_THROW(experiment_from_json(Json::parse(R"({"repetitions": 3})")), Error);
  EXPECT_THROW(experiment_from_json(Json::parse(R"({"synth": {}, "repetitions": 0})")), Error);
  EXPECT_THROW(experiment_from_json(Json::parse(R"({"synth": {}, "p_range": [1]})")), Error);
  EXPECT_THROW(experiment_from_json(Json::parse(R"({"synth": {}, "mechanisms": ["xae"]})")), Error);
  EXPECT_THROW(experiment_from_json(Json::parse(R"({"synth": {}, "ratios": [0.5, 0.5, 0.5]})")), Error);
  const ExperimentConfig c =
      experiment_from_json(Json::parse(R"({"synth": {}, "mechanism": "pae", "w_step": 0.05, "p_range": [-3, 2]})"));
  EXPECT_EQ(c.mechanisms, std::vector<Mechanism>{Mechanism::PAE});
  EXPECT_EQ(c.mechanism.weights.step, 0.05);
  EXPECT_EQ(c.mechanism.grid.p_min, -3);
  EXPECT_EQ(c.mechanism.grid.p_max, 2);
  EXPECT_EQ(c.mechanism.grid.q_min, -10);
}

// --- describe -----------------------------------------------------------------------

TEST(Describe, ClevelandDgColumn) {
  ExperimentConfig c = load_experiment(kSource + "/configs/hd.toml");
  const DatasetSummary s = describe(load_experiment_data(c));
  EXPECT_EQ(s.nc.count, 160u);
  EXPECT_EQ(s.dg.count, 137u);
  EXPECT_EQ(s.dg.age_min, 35.0);
  EXPECT_EQ(s.dg.age_max, 77.0);
  EXPECT_NEAR(s.dg.age_mean, 56.76, 0.005);
  EXPECT_NEAR(s.dg.age_sd, 7.90, 0.005);
  EXPECT_EQ(s.nc.age_min, 29.0);
}

TEST(Describe, MatchesOracleStatistics) {
  const Dataset d = synth_generate(small_synth(5));
  const DatasetSummary s = describe(d);
  oracle::Vec nc;
  for (Index i = 0; i < d.size(); ++i) {
    if (d.tag(i) == ClassTag::NC) nc.push_back(d.age(i));
  }
  EXPECT_NEAR(s.nc.age_mean, oracle::mean(nc), 1e-12);
  EXPECT_NEAR(s.nc.age_sd, std::sqrt(oracle::variance(nc)), 1e-12);
}

// --- repeated runs ----------------------------------------------------------------------

TEST(RunRepeated, SingleTaeRow) {
  ExperimentConfig c = fast_config(1);
  c.mechanisms = {Mechanism::TAE};
  const ExperimentReport r = run_repeated(c);
  ASSERT_EQ(r.mechanisms.size(), 1u);
  ASSERT_EQ(r.mechanisms[0].runs.size(), 1u);
  EXPECT_TRUE(r.mechanisms[0].runs[0].ok);
  EXPECT_EQ(r.mechanisms[0].failures, 0u);
}

TEST(RunRepeated, PairedSplitsAndSeedLadder) {
  const ExperimentConfig c = fast_config(3);
  const ExperimentReport r = run_repeated(c);
  ASSERT_EQ(r.mechanisms.size(), 3u);
  for (int rep = 0; rep < 3; ++rep) {
    const auto h = r.mechanisms[0].runs[static_cast<std::size_t>(rep)].split_hash;
    for (const auto& m : r.mechanisms) {
      EXPECT_EQ(m.runs[static_cast<std::size_t>(rep)].split_hash, h);
      EXPECT_EQ(m.runs[static_cast<std::size_t>(rep)].seed, 10u + static_cast<unsigned>(rep));
    }
  }
  ExperimentConfig single = c;
  single.repetitions = 1;
  single.base_seed = 12;
  const ExperimentReport s = run_repeated(single);
  for (std::size_t m = 0; m < 3; ++m) {
    EXPECT_EQ(s.mechanisms[m].runs[0].split_hash, r.mechanisms[m].runs[2].split_hash);
    EXPECT_EQ(s.mechanisms[m].runs[0].metrics.mae_nc, r.mechanisms[m].runs[2].metrics.mae_nc);
    EXPECT_EQ(s.mechanisms[m].runs[0].metrics.lambda1, r.mechanisms[m].runs[2].metrics.lambda1);
  }
}

TEST(RunRepeated, AggregatesMatchRecomputation) {
  const ExperimentReport r = run_repeated(fast_config(4));
  for (const auto& m : r.mechanisms) {
    oracle::Vec l1, mae_nc, icc;
    for (const auto& run : m.runs) {
      l1.push_back(run.metrics.lambda1);
      mae_nc.push_back(run.metrics.mae_nc);
      icc.push_back(run.metrics.icc);
    }
    EXPECT_NEAR(m.mean.lambda1, oracle::mean(l1), 1e-12);
    EXPECT_NEAR(m.mean.mae_nc, oracle::mean(mae_nc), 1e-12);
    EXPECT_NEAR(m.mean.icc, oracle::mean(icc), 1e-12);
    EXPECT_NEAR(m.sd.lambda1, std::sqrt(oracle::variance(l1)), 1e-12);
    EXPECT_NEAR(m.sd.mae_nc, std::sqrt(oracle::variance(mae_nc)), 1e-12);
  }
}

TEST(RunRepeated, FailedRepetitionsCountedAndExcluded) {
  // constant features make every PAE candidate's lambda2 undefined
  Dataset flat = synth_generate(small_synth(6));
  flat = flat.with_features(Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(flat.size()), 3, 2.0),
                            flat.feature_names());
  ExperimentConfig c = fast_config(2);
  c.mechanism.criterion = FitnessCriterion::ClassCorrelation;
  c.mechanisms = {Mechanism::TAE, Mechanism::PAE};
  const ExperimentReport r = run_repeated(c, flat);
  const auto& pae = r.mechanisms[1];
  EXPECT_EQ(pae.failures, 2u);
  EXPECT_FALSE(pae.runs[0].ok);
  EXPECT_NE(pae.runs[0].error.find("DegenerateFitness"), std::string::npos);
  EXPECT_TRUE(std::isnan(pae.mean.mae_nc));
  // TAE on constant features predicts a constant, so lambda2 is undefined too
  EXPECT_EQ(r.mechanisms[0].failures, 2u);
}

TEST(RunRepeated, Deterministic) {
  const ExperimentConfig c = fast_config(2);
  EXPECT_EQ(summary_json(run_repeated(c)).dump(), summary_json(run_repeated(c)).dump());
}

// --- report files -----------------------------------------------------------------------

TEST(EmitReport, EmptyMechanismSet) {
  ExperimentConfig c = fast_config(2);
  c.mechanisms.clear();
  const fs::path out = scratch_dir("empty");
  const auto files = emit_report(run_repeated(c), out);
  EXPECT_EQ(files.size(), 3u);
  const Json j = Json::parse(slurp(out / "summary.json"));
  EXPECT_TRUE(j.at("mechanisms").is_array());
  EXPECT_TRUE(j.at("mechanisms").empty());
  const std::string metrics = slurp(out / "metrics.csv");
  EXPECT_EQ(std::count(metrics.begin(), metrics.end(), '\n'), 1);
  const std::string scatter = slurp(out / "scatter.csv");
  EXPECT_EQ(std::count(scatter.begin(), scatter.end(), '\n'), 1);
}

TEST(EmitReport, RowCountsAndFormats) {
  ExperimentConfig c = fast_config(3);
  c.mechanisms = {Mechanism::TAE, Mechanism::IAE};
  const ExperimentReport r = run_repeated(c);
  const fs::path out = scratch_dir("rows");
  emit_report(r, out);
  const std::string metrics = slurp(out / "metrics.csv");
  EXPECT_EQ(std::count(metrics.begin(), metrics.end(), '\n'), 1 + 6);
  EXPECT_EQ(metrics.substr(0, metrics.find('\n')),
            "mechanism,rep,seed,split_hash,ok,lambda1,lambda2,mae_nc,mae_all,icc,p,q,w_t,w_p");
  const std::string scatter = slurp(out / "scatter.csv");
  EXPECT_EQ(scatter.substr(0, scatter.find('\n')), "rep,mechanism,sample_id,class,real_age,estimated_age");

  const fs::path json_only = scratch_dir("json_only");
  const auto files = emit_report(r, json_only, {ReportFormat::Json});
  ASSERT_EQ(files.size(), 1u);
  EXPECT_FALSE(fs::exists(json_only / "metrics.csv"));
}

TEST(EmitReport, ScatterRoundTripMae) {
  ExperimentConfig c = fast_config(3);
  const ExperimentReport r = run_repeated(c);
  const fs::path out = scratch_dir("scatter");
  emit_report(r, out);
  const auto rows = parse_csv(slurp(out / "scatter.csv"));
  // (mechanism, rep) -> sums
  std::map<std::pair<std::string, int>, std::pair<double, int>> nc;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i][3] != "NC") continue;
    auto& acc = nc[{rows[i][1], std::stoi(rows[i][0])}];
    acc.first += std::fabs(std::stod(rows[i][5]) - std::stod(rows[i][4]));
    acc.second += 1;
  }
  const Json summary = Json::parse(slurp(out / "summary.json"));
  for (const auto& m : summary.at("mechanisms")) {
    const std::string name = m.at("mechanism");
    double total = 0.0;
    for (int rep = 0; rep < 3; ++rep) {
      const auto& acc = nc.at({name, rep});
      const double mae_rep = acc.first / acc.second;
      EXPECT_NEAR(mae_rep, m.at("runs")[static_cast<std::size_t>(rep)].at("metrics").at("mae_nc").get<double>(), 1e-9);
      total += mae_rep;
    }
    EXPECT_NEAR(total / 3.0, m.at("mean").at("mae_nc").get<double>(), 1e-9);
  }
}

TEST(EmitReport, UnwritableDirectory) {
  const fs::path blocker = scratch_dir("blocked") / "file";
  std::ofstream(blocker) << "x";
  try {
    emit_report(run_repeated(fast_config(1)), blocker / "sub");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::IoError);
  }
}

TEST(FormatDouble, ShortestRoundTrip) {
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(52.0), "52");
  const double x = 1.0 / 3.0;
  EXPECT_EQ(std::stod(format_double(x)), x);
}

#pragma once

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "iae/config.hpp"
#include "iae/harness.hpp"

namespace iae {

enum ExitCode : int { ExitOk = 0, ExitConfig = 2, ExitData = 3, ExitRuntime = 4 };

inline int exit_code_for(Errc code) {
  switch (code) {
    case Errc::ConfigError: return ExitConfig;
    case Errc::MissingColumn:
    case Errc::ParseError:
    case Errc::EmptyDataset:
    case Errc::IoError: return ExitData;
    default: return ExitRuntime;
  }
}

struct RunOptions {
  std::string config;
  std::string out;
  std::vector<std::string> mechanisms;
  std::optional<std::string> criterion;
  std::optional<int> reps;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
};

struct SynthOptions {
  std::string spec;
  std::string out;
};

struct InspectOptions {
  std::string data;
  std::string schema;
  bool json = false;
};

/// Flag values shadow the file config; absent flags leave it untouched.
inline void apply_overrides(ExperimentConfig& config, const RunOptions& opt) {
  if (!opt.mechanisms.empty()) {
    config.mechanisms.clear();
    for (const auto& m : opt.mechanisms) config.mechanisms.push_back(mechanism_from_string(m));
  }
  if (opt.criterion) config.mechanism.criterion = criterion_from_string(*opt.criterion);
  if (opt.reps) config.repetitions = *opt.reps;
  if (opt.seed) config.base_seed = *opt.seed;
  if (opt.threads) config.mechanism.threads = *opt.threads;
  config.validate();
}

inline int cmd_run(const RunOptions& opt, std::ostream& out, std::ostream& err) {
  ExperimentConfig config;
  try {
    config = load_experiment(opt.config);
    apply_overrides(config, opt);
  } catch (const Error& e) {
    err << "config: " << e.what() << "\n";
    return ExitConfig;
  }
  const Dataset data = load_experiment_data(config);
  const ExperimentReport report = run_repeated(config, data);
  for (const auto& path : emit_report(report, opt.out)) out << path.string() << "\n";

  int failed = 0;
  for (const auto& m : report.mechanisms) {
    for (const auto& r : m.runs) {
      if (r.ok) continue;
      ++failed;
      err << mechanism_name(m.mechanism) << " repetition " << r.rep << " (seed " << r.seed << ") failed: " << r.error
          << "\n";
    }
  }
  return failed > 0 ? ExitRuntime : ExitOk;
}

inline std::filesystem::path schema_sidecar_path(const std::filesystem::path& csv) {
  std::filesystem::path p = csv;
  p.replace_extension(".schema.json");
  return p;
}

inline int cmd_synth(const SynthOptions& opt, std::ostream& out, std::ostream& err) {
  SynthSpec spec;
  try {
    spec = synth_from_json(load_config_tree(opt.spec));
  } catch (const Error& e) {
    err << "spec: " << e.what() << "\n";
    return ExitConfig;
  }
  const Dataset data = synth_generate(spec);
  const std::filesystem::path csv = opt.out;
  if (csv.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(csv.parent_path(), ec);
  }
  detail::write_text(csv, dataset_to_csv(data));
  const std::filesystem::path sidecar = schema_sidecar_path(csv);
  detail::write_text(sidecar, to_json(synth_schema()).dump(2) + "\n");
  out << csv.string() << "\n" << sidecar.string() << "\n";
  return ExitOk;
}

namespace detail {

inline std::string fixed(double v, int digits) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

inline std::string age_range(const ClassSummary& c) {
  if (c.count == 0) return "-";
  return fixed(c.age_min, 0) + "-" + fixed(c.age_max, 0);
}

}  // namespace detail

/// Aligned per-class table: counts, age range, mean, sd.
inline std::string format_summary(const DatasetSummary& s) {
  std::ostringstream o;
  o << "samples " << s.samples << ", features " << s.features << "\n";
  o << std::left << std::setw(6) << "class" << std::right << std::setw(8) << "count" << std::setw(12) << "age range"
    << std::setw(10) << "mean" << std::setw(10) << "sd" << "\n";
  for (const auto& [name, c] : {std::pair{"NC", s.nc}, std::pair{"DG", s.dg}}) {
    o << std::left << std::setw(6) << name << std::right << std::setw(8) << c.count << std::setw(12)
      << detail::age_range(c) << std::setw(10) << (c.count ? detail::fixed(c.age_mean, 2) : "-") << std::setw(10)
      << (c.count > 1 ? detail::fixed(c.age_sd, 2) : "-") << "\n";
  }
  return o.str();
}

inline int cmd_inspect(const InspectOptions& opt, std::ostream& out, std::ostream& err) {
  SchemaConfig schema;
  try {
    schema = schema_from_json(load_config_tree(opt.schema));
  } catch (const Error& e) {
    err << "schema: " << e.what() << "\n";
    return e.code() == Errc::IoError ? ExitData : ExitConfig;
  }
  const Dataset data = load_csv(opt.data, schema);
  const DatasetSummary s = describe(data);
  if (s.nc.count == 0 || s.dg.count == 0) {
    err << "warning: only one class present (" << (s.nc.count ? "NC" : "DG") << ")\n";
  }
  if (opt.json) {
    out << to_json(s).dump(2) << "\n";
  } else {
    out << format_summary(s);
  }
  return ExitOk;
}

/// Entry point; `args` excludes the program name.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Age estimation experiments (TAE / PAE / IAE)", "iae"};
  app.require_subcommand(1);

  RunOptions run;
  auto* run_cmd = app.add_subcommand("run", "run repeated hold-out experiments");
  run_cmd->add_option("--config", run.config, "experiment config (.toml or .json)")->required();
  run_cmd->add_option("--out", run.out, "output directory")->required();
  run_cmd->add_option("--mechanism", run.mechanisms, "tae, pae or iae (repeatable)");
  run_cmd->add_option("--criterion", run.criterion, "sep or corr");
  run_cmd->add_option("--reps", run.reps, "repetitions");
  run_cmd->add_option("--seed", run.seed, "base seed");
  run_cmd->add_option("--threads", run.threads, "worker cap (0 = all cores)");

  SynthOptions synth;
  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic cohort CSV and schema sidecar");
  synth_cmd->add_option("--spec", synth.spec, "synthetic spec (.toml or .json)")->required();
  synth_cmd->add_option("--out", synth.out, "output CSV path")->required();

  InspectOptions inspect;
  auto* inspect_cmd = app.add_subcommand("inspect", "print per-class age statistics");
  inspect_cmd->add_option("--data", inspect.data, "CSV file")->required();
  inspect_cmd->add_option("--schema", inspect.schema, "schema (.toml or .json)")->required();
  inspect_cmd->add_flag("--json", inspect.json, "print JSON instead of text");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return ExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return ExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n";
    return ExitConfig;
  }

  try {
    if (run_cmd->parsed()) return cmd_run(run, out, err);
    if (synth_cmd->parsed()) return cmd_synth(synth, out, err);
    return cmd_inspect(inspect, out, err);
  } catch (const Error& e) {
    err << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << e.what() << "\n";
    return ExitRuntime;
  }
}

}  // namespace iae

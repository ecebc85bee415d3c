#include "rhfusion/cli.hpp"

#include "rhfusion/log.hpp"
#include "rhfusion/report_io.hpp"
#include "rhfusion/scenario_io.hpp"
#include "rhfusion/simulation.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <sstream>

#ifndef RHFUSION_VERSION
#define RHFUSION_VERSION "0.0.0"
#endif

namespace rhf::cli {

namespace {

namespace fs = std::filesystem;

struct Loaded {
  std::optional<Scenario> scenario;
  nlohmann::json document;
  int status = kOk;
};

Loaded load(const fs::path& path, const std::vector<std::string>& overrides, std::ostream& err) {
  Loaded l;
  try {
    l.document = read_scenario_document(path);
    for (const auto& o : overrides) apply_override(l.document, o);
    ScenarioParts parts = parse_scenario(l.document);
    ValidationResult v = validate(std::move(parts.system), std::move(parts.suite), parts.config);
    if (!v.ok()) {
      err << "scenario '" << path.string() << "' is invalid:\n";
      for (const auto& violation : v.violations) err << "  - " << violation.message << '\n';
      l.status = kInvalid;
      return l;
    }
    l.scenario = std::move(v.scenario);
  } catch (const ScenarioFormatError& e) {
    err << "error: " << e.what() << '\n';
    l.status = kUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    l.status = kUsage;
  }
  return l;
}

MonteCarloOptions options_from_env() {
  MonteCarloOptions opt;
  if (const char* env = std::getenv("RH_FUSION_THREADS")) {
    try {
      opt.threads = std::max(0, std::stoi(env));
    } catch (const std::exception&) {
      log_warning("ignoring RH_FUSION_THREADS='" + std::string(env) + "'");
    }
  }
  return opt;
}

bool ensure_dir(const fs::path& dir, std::ostream& err) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    err << "error: cannot create output directory '" << dir.string() << "'\n";
    return false;
  }
  return true;
}

template <class Writer>
std::string render(Writer&& w) {
  std::ostringstream os;
  w(os);
  return os.str();
}

}  // namespace

int cmd_validate(const fs::path& scenario, const std::vector<std::string>& overrides, std::ostream& out,
                 std::ostream& err) {
  Loaded l = load(scenario, overrides, err);
  if (l.status != kOk) return l.status;
  const Scenario& sc = *l.scenario;
  out << "scenario '" << scenario.string() << "' is valid: n=" << sc.n() << ", sensors=" << sc.sensor_count()
      << ", T=" << sc.config().horizon << ", Delta=" << sc.config().lead << ", h=" << sc.config().step << '\n';
  return kOk;
}

int cmd_run(const fs::path& scenario, const fs::path& out_dir, const std::vector<std::string>& overrides, bool quiet,
            std::ostream& out, std::ostream& err) {
  const auto started = std::chrono::steady_clock::now();
  Loaded l = load(scenario, overrides, err);
  if (l.status != kOk) return l.status;
  if (!ensure_dir(out_dir, err)) return kUsage;
  const Scenario& sc = *l.scenario;

  const MseReport report = run_monte_carlo(sc, options_from_env());

  std::vector<std::string> written;
  try {
    write_file_atomic(out_dir / "estimates.csv", render([&](std::ostream& os) { write_estimates_csv(os, sc, report); }));
    written.push_back("estimates.csv");
    write_file_atomic(out_dir / "covariance.csv", render([&](std::ostream& os) { write_covariance_csv(os, sc, report); }));
    written.push_back("covariance.csv");
    if (sc.config().mc_runs > 1) {
      write_file_atomic(out_dir / "mse.csv", render([&](std::ostream& os) { write_mse_csv(os, sc, report); }));
      written.push_back("mse.csv");
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    nlohmann::json manifest{
        {"scenario", scenario.string()},
        {"config", l.document},
        {"seed", sc.config().rng_seed},
        {"version", RHFUSION_VERSION},
        {"wall_seconds", seconds},
        {"outputs", written},
    };
    write_file_atomic(out_dir / "manifest.json", manifest.dump(2) + "\n");
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }

  if (!quiet) {
    std::size_t crhp = 0;
    for (auto a : report.available[kCentral]) crhp += a;
    out << "ran " << report.runs << " Monte-Carlo runs over " << report.times.size() << " output instants ("
        << crhp << " with CRHP available)\n";
    for (const auto& f : written) out << "  wrote " << (out_dir / f).string() << '\n';
  }
  return kOk;
}

int cmd_oracle(const fs::path& scenario, int sensor_i, int sensor_j, std::size_t runs, double t,
               const fs::path& out_dir, const std::vector<std::string>& overrides, bool quiet, std::ostream& out,
               std::ostream& err) {
  if (sensor_i == sensor_j) {
    err << "error: oracle needs two different sensors\n";
    return kUsage;
  }
  Loaded l = load(scenario, overrides, err);
  if (l.status != kOk) return l.status;
  const Scenario& sc = *l.scenario;
  const int N = static_cast<int>(sc.sensor_count());
  if (sensor_i < 1 || sensor_j < 1 || sensor_i > N || sensor_j > N) {
    err << "error: sensor indices must be in 1.." << N << '\n';
    return kUsage;
  }
  if (!ensure_dir(out_dir, err)) return kUsage;

  OracleReport rep;
  try {
    rep = cross_cov_oracle(sc, sensor_i - 1, sensor_j - 1, std::max<std::size_t>(runs, 2), t, options_from_env());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }
  const std::string csv = render([&](std::ostream& os) { write_oracle_csv(os, rep, sc.config().cross_prediction); });
  try {
    write_file_atomic(out_dir / "oracle.csv", csv);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }
  if (!quiet) {
    const Mat zf = (rep.empirical_filter - rep.integrated_filter).cwiseAbs().cwiseQuotient(rep.stderr_filter);
    const Mat zp = (rep.empirical_predictor - rep.predicted_shared_noise).cwiseAbs().cwiseQuotient(rep.stderr_predictor);
    const Mat zh = (rep.empirical_predictor - rep.predicted_homogeneous).cwiseAbs().cwiseQuotient(rep.stderr_predictor);
    out << "cross-covariance oracle, sensors " << sensor_i << " and " << sensor_j << ", " << rep.runs << " runs\n"
        << "  filter at t=" << rep.t << ": max |z| = " << zf.maxCoeff() << (zf.maxCoeff() <= 3.0 ? " (pass)" : " (FAIL)") << '\n'
        << "  predictor at t=" << rep.target << " with process noise: max |z| = " << zp.maxCoeff() << '\n'
        << "  predictor at t=" << rep.target << " homogeneous: max |z| = " << zh.maxCoeff() << '\n'
        << "  wrote " << (out_dir / "oracle.csv").string() << '\n';
  }
  return kOk;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Receding-horizon multisensor filtering, fusion and Monte-Carlo evaluation", "rhfusion"};
  app.require_subcommand(1);
  app.set_version_flag("--version", RHFUSION_VERSION);

  std::string scenario;
  std::vector<std::string> overrides;
  std::string out_dir = ".";
  bool quiet_flag = false;

  auto* validate_cmd = app.add_subcommand("validate", "Check a scenario file");
  validate_cmd->add_option("scenario", scenario, "Scenario JSON file")->required();
  validate_cmd->add_option("--set", overrides, "Override key=value (repeatable)");

  auto* run_cmd = app.add_subcommand("run", "Run estimators and the Monte-Carlo evaluation");
  run_cmd->add_option("scenario", scenario, "Scenario JSON file")->required();
  run_cmd->add_option("--out", out_dir, "Output directory");
  run_cmd->add_option("--set", overrides, "Override key=value (repeatable)");
  run_cmd->add_flag("--quiet", quiet_flag, "Suppress the summary and warnings");

  int si = 0;
  int sj = 0;
  std::size_t runs = 0;
  double t = 0.0;
  auto* oracle_cmd = app.add_subcommand("oracle", "Monte-Carlo check of a local cross-covariance");
  oracle_cmd->add_option("scenario", scenario, "Scenario JSON file")->required();
  oracle_cmd->add_option("i", si, "First sensor (1-based)")->required();
  oracle_cmd->add_option("j", sj, "Second sensor (1-based)")->required();
  oracle_cmd->add_option("runs", runs, "Number of runs")->required();
  oracle_cmd->add_option("t", t, "Filter time")->required();
  oracle_cmd->add_option("--out", out_dir, "Output directory");
  oracle_cmd->add_option("--set", overrides, "Override key=value (repeatable)");
  oracle_cmd->add_flag("--quiet", quiet_flag, "Suppress the summary and warnings");

  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  const bool was_quiet = quiet();
  set_quiet(was_quiet || quiet_flag);
  int status = kOk;
  if (*validate_cmd) {
    status = cmd_validate(scenario, overrides, out, err);
  } else if (*run_cmd) {
    status = cmd_run(scenario, out_dir, overrides, quiet_flag, out, err);
  } else if (*oracle_cmd) {
    status = cmd_oracle(scenario, si, sj, runs, t, out_dir, overrides, quiet_flag, out, err);
  }
  set_quiet(was_quiet);
  return status;
}

}  // namespace rhf::cli

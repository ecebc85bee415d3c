// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include "rhfusion/cli.hpp"
#include "rhfusion/estimators.hpp"
#include "rhfusion/fusion.hpp"
#include "rhfusion/log.hpp"
#include "rhfusion/simulation.hpp"
#include "support/oracles.hpp"
#include "support/scenarios.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <unistd.h>

namespace {

using namespace rhf;
namespace fs = std::filesystem;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(int id, const std::string& title, const std::function<Outcome()>& body) {
  const auto started = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  if (!o.pass) ++failures;
  std::ostringstream line;
  line << (o.pass ? "PASS" : "FAIL") << " [" << id << "] " << title << " -- " << o.detail << " (" << secs << " s)";
  std::cout << line.str() << std::endl;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

std::vector<int> all_sensors(const Scenario& sc) {
  std::vector<int> all(sc.sensor_count());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  return all;
}

MeasurementSet sample_measurements(const Scenario& sc, std::uint64_t seed) {
  Rng rng(seed);
  const TruthTrajectory truth = simulate_truth(sc.system(), sc.truth_grid(), rng);
  return generate_measurements(truth, sc.suite(), rng);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// 1. Scalar Riccati steady state.
Outcome scalar_riccati() {
  fixtures::ScalarOptions o;
  o.f = -1.0;
  o.q = 1.0;
  o.r = {1.0, 1.0};
  o.horizon = 10.0;
  o.t_end = 10.0;
  o.p0 = 0.5;
  const Scenario sc = fixtures::scalar_scenario(o);
  const UnconditionalMoments moments(sc);
  const MeasurementSet meas = sample_measurements(sc, 3);
  const double expected = oracle::scalar_riccati_steady_state(-1.0, 1.0, 1.0, 1.0, 1.0);
  const int one[] = {0};
  const double crhf = run_crhf(sc, moments, 10.0, meas, one).state.cov(0, 0);
  const double lrhf = run_local_rhf(sc, moments, 1, 10.0, meas).state.cov(0, 0);
  const double err = std::max(std::abs(crhf - expected), std::abs(lrhf - expected));
  return {err <= 1e-4, "CRHF " + fmt(crhf) + ", LRHF " + fmt(lrhf) + ", sqrt(2)-1 = " + fmt(expected) +
                           ", max error " + fmt(err)};
}

// 2. Cross-covariance equation against Monte-Carlo.
Outcome cross_covariance_oracle() {
  oracle::ScalarPairSetup s;  // f=-1, q=1, R=0.25 each, T=1, evaluated at t=2
  fixtures::ScalarOptions o;
  o.f = s.f;
  o.q = s.q;
  o.p0 = s.p0;
  o.r = {s.r1, s.r2};
  o.horizon = s.horizon;
  o.t_end = s.t;
  o.step = s.h;
  o.seed = 20260101;
  const Scenario sc = fixtures::scalar_scenario(o);
  const std::size_t runs = 20000;
  const OracleReport rep = cross_cov_oracle(sc, 0, 1, runs, s.t);
  const double integrated = rep.integrated_filter(0, 0);
  const double z_lib = std::abs(rep.empirical_filter(0, 0) - integrated) / rep.stderr_filter(0, 0);
  const oracle::ScalarPairResult ind = oracle::scalar_pair_monte_carlo(s, runs, 777);
  const double z_ind = std::abs(ind.cross - integrated) / ind.cross_stderr;
  const bool band = rep.empirical_filter(0, 0) > 0.0 && rep.empirical_filter(0, 0) < rep.local_cov_i(0, 0);
  return {z_lib <= 3.0 && z_ind <= 3.0 && band,
          "integrated P12 " + fmt(integrated) + "; simulation module " + fmt(rep.empirical_filter(0, 0)) + " (z " +
              fmt(z_lib) + "); independent scalar simulation " + fmt(ind.cross) + " (z " + fmt(z_ind) +
              "); 0 < P12 < P11 " + (band ? "holds" : "violated")};
}

// 3. Fusion-weight identities on the water tank.
Outcome weight_identities(const MonteCarloPlan& plan) {
  double sum_err = 0.0;
  double residual = 0.0;
  double path_gap = 0.0;
  std::size_t instants = 0;
  std::size_t compared = 0;
  for (const auto& o : plan.outputs()) {
    if (o.active.size() < 2) continue;
    ++instants;
    const auto& w = o.fused.weights;
    Mat total = Mat::Zero(w[0].rows(), w[0].cols());
    for (const auto& wi : w) total += wi;
    sum_err = std::max(sum_err, (total - Mat::Identity(total.rows(), total.cols())).norm());
    residual = std::max(residual, oracle::weight_residual(o.cross, w));
    Eigen::FullPivLU<Mat> lu(o.cross.assembled());
    if (!lu.isInvertible()) continue;
    ++compared;
    const auto ref = oracle::block_inverse_weights(o.cross);
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      num = std::max(num, (w[i] - ref[i]).norm());
      den = std::max(den, ref[i].norm());
    }
    path_gap = std::max(path_gap, num / den);
  }
  const bool ok = sum_err <= 1e-10 && residual <= 1e-8 && path_gap <= 1e-6;
  return {ok, std::to_string(instants) + " fusion instants: max ||sum W - I|| " + fmt(sum_err) +
                  ", max relative residual " + fmt(residual) + ", block-inverse gap " + fmt(path_gap) + " over " +
                  std::to_string(compared) + " invertible instants"};
}

// 4. Degenerate configurations.
Outcome degeneracies() {
  std::ostringstream detail;
  bool ok = true;

  // One sensor: DRHP, LRHP and CRHP coincide.
  {
    const Scenario sc = fixtures::watertank_first_sensors(1);
    const UnconditionalMoments moments(sc);
    const MeasurementSet meas = sample_measurements(sc, 11);
    double gap = 0.0;
    for (double t : {0.5, 1.4, 3.0, 5.0}) {
      const EstimatorState local = run_local_rhp(sc, moments, 0, t, meas);
      const int one[] = {0};
      const EstimatorState central = run_crhp(sc, moments, t, meas, one);
      const RiccatiPass pass = solve_riccati(sc, moments, one, grid_index(sc, t));
      const CrossCovState cross = local_cross_covariances(sc, std::span<const RiccatiPass>(&pass, 1));
      const FusionResult fused = fuse(std::span<const EstimatorState>(&local, 1), cross);
      gap = std::max({gap, (fused.mean - local.mean).cwiseAbs().maxCoeff(),
                      (fused.cov - local.cov).cwiseAbs().maxCoeff(), (central.mean - local.mean).cwiseAbs().maxCoeff(),
                      (central.cov - local.cov).cwiseAbs().maxCoeff()});
    }
    ok = ok && gap <= 1e-12;
    detail << "N=1 max gap " << fmt(gap);
  }

  // Zero lead: predictor equals filter exactly.
  {
    const Scenario sc = fixtures::watertank({"Delta=0"});
    const UnconditionalMoments moments(sc);
    const MeasurementSet meas = sample_measurements(sc, 12);
    const auto all = all_sensors(sc);
    bool exact = true;
    for (double t : {0.3, 1.0, 1.5}) {
      const FilterOutput f = run_crhf(sc, moments, t, meas, all);
      const EstimatorState p = run_crhp(sc, moments, t, meas, all);
      exact = exact && p.t == f.state.t && (p.mean.array() == f.state.mean.array()).all() &&
              (p.cov.array() == f.state.cov.array()).all();
      const FilterOutput lf = run_local_rhf(sc, moments, 2, t, meas);
      const EstimatorState lp = run_local_rhp(sc, moments, 2, t, meas);
      exact = exact && (lp.mean.array() == lf.state.mean.array()).all() && (lp.cov.array() == lf.state.cov.array()).all();
    }
    ok = ok && exact;
    detail << "; Delta=0 predictor == filter " << (exact ? "exactly" : "NOT exactly");
  }

  // Identical sensors: equal weights.
  {
    const Scenario sc = fixtures::watertank();
    const MonteCarloPlan plan(sc);
    double worst = 0.0;
    std::size_t checked = 0;
    for (const auto& o : plan.outputs()) {
      const std::size_t N = o.active.size();
      if (N < 2 || o.fused.fallback) continue;
      ++checked;
      for (const auto& w : o.fused.weights) {
        worst = std::max(worst, (w - Mat::Identity(sc.n(), sc.n()) / static_cast<double>(N)).cwiseAbs().maxCoeff());
      }
    }
    ok = ok && worst <= 1e-8;
    detail << "; identical sensors max |W - I/N| " << fmt(worst) << " over " << checked << " instants";
  }
  return {ok, detail.str()};
}

// 5. Water-tank experiment.
Outcome watertank_experiment(const Scenario& sc, const MseReport& rep) {
  std::ostringstream d;
  auto sigma = [](double t) { return t <= 1.5 + 1e-9 ? 1 : t <= 2.5 + 1e-9 ? 2 : t <= 3.5 + 1e-9 ? 3 : 4; };

  bool a = true;
  for (std::size_t o = 0; o < rep.times.size(); ++o) {
    const bool crhp = rep.available[kCentral][o] != 0;
    if (crhp != (sigma(rep.times[o]) == 1)) a = false;
    if (!rep.available[kDistributed][o]) a = false;
  }
  d << "(a) availability " << (a ? "ok" : "WRONG");

  bool b = true;
  double gap14 = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t o = 0; o < rep.times.size(); ++o) {
    if (sigma(rep.times[o]) != 1) continue;
    const double dr = rep.theoretical_trace[kDistributed][o];
    const double cr = rep.theoretical_trace[kCentral][o];
    if (!(dr - cr >= -1e-15)) b = false;
    if (std::abs(rep.times[o] - 1.4) < 1e-9) gap14 = (dr - cr) / cr;
  }
  b = b && gap14 >= 0.0 && gap14 <= 0.10;
  d << "; (b) DRHP >= CRHP on Sigma1, relative gap at t=1.4 " << fmt(gap14);

  bool c = true;
  d << "; (c) trace at transitions";
  for (double edge : {1.5, 2.5, 3.5}) {
    std::size_t before = rep.times.size();
    std::size_t after = rep.times.size();
    for (std::size_t o = 0; o < rep.times.size(); ++o) {
      if (rep.times[o] <= edge + 1e-9) before = o;
      if (after == rep.times.size() && rep.times[o] > edge + 1e-9) after = o;
    }
    const double tb = rep.theoretical_trace[kDistributed][before];
    const double ta = rep.theoretical_trace[kDistributed][after];
    if (!(ta >= tb)) c = false;
    d << " " << fmt(tb) << "->" << fmt(ta);
  }

  bool dd = true;
  double worst = 0.0;
  for (std::size_t o = 0; o < rep.times.size(); ++o) {
    if (rep.times[o] < 3.5 - 1e-9) continue;
    const double ratio = rep.mse[kDistributed][o](2) / rep.theoretical[kDistributed][o](2);
    worst = std::max(worst, std::abs(ratio - 1.0));
  }
  dd = worst <= 0.15;
  d << "; (d) " << rep.runs << " runs, max |MSE33/P33 - 1| on [3.5,5] " << fmt(worst);
  (void)sc;
  return {a && b && c && dd, d.str()};
}

// 6. Limited memory.
Outcome limited_memory() {
  const Scenario sc = fixtures::watertank();
  const UnconditionalMoments moments(sc);
  const MonteCarloPlan plan(sc);
  Rng rng(99);
  const TruthTrajectory truth = simulate_truth(sc.system(), sc.truth_grid(), rng);
  const MeasurementSet meas = generate_measurements(truth, sc.suite(), rng);
  const auto all = all_sensors(sc);
  bool exact = true;
  std::size_t checked = 0;
  for (std::size_t oi = 0; oi < plan.outputs().size(); ++oi) {
    const OutputPlan& o = plan.outputs()[oi];
    const HorizonWindow w = horizon_window(sc, o.index);
    if (w.first == 0) continue;
    MeasurementSet bent = meas;
    for (auto& track : bent.tracks) {
      for (std::size_t k = 0; k < w.first; ++k) track.values.col(static_cast<Eigen::Index>(k)).array() += 1.0e3;
    }
    const RunEstimates a = evaluate_run(plan, truth, meas);
    const RunEstimates b = evaluate_run(plan, truth, bent);
    const auto col = static_cast<Eigen::Index>(oi);
    exact = exact && (a.predicted[kDistributed].col(col).array() == b.predicted[kDistributed].col(col).array()).all();
    if (o.central_available) {
      const FilterOutput fa = run_crhf(sc, moments, o.t, meas, all);
      const FilterOutput fb = run_crhf(sc, moments, o.t, bent, all);
      exact = exact && (fa.state.mean.array() == fb.state.mean.array()).all();
    }
    ++checked;
  }
  return {exact && checked > 0, std::to_string(checked) + " output instants with pre-horizon data shifted by 1e3: " +
                                    (exact ? "outputs bitwise unchanged" : "outputs CHANGED")};
}

// 7. Fusion never hurts.
Outcome fusion_never_hurts(const MonteCarloPlan& plan) {
  double worst = -std::numeric_limits<double>::infinity();
  std::size_t checked = 0;
  for (const auto& o : plan.outputs()) {
    if (o.active.empty()) continue;
    double best_local = std::numeric_limits<double>::infinity();
    for (const auto& l : o.local_predictors) best_local = std::min(best_local, l.cov.trace());
    worst = std::max(worst, o.fused.cov.trace() - best_local);
    ++checked;
  }
  return {worst <= 1e-9, std::to_string(checked) + " instants, max trace(P_DRHP) - min_i trace(P_ii) = " + fmt(worst)};
}

// 8. Determinism across worker counts.
Outcome determinism() {
  const fs::path base = fs::temp_directory_path() / ("rhfusion_acceptance_" + std::to_string(::getpid()));
  const std::vector<std::string> overrides{"mc_runs=64", "rng_seed=7"};
  std::ostringstream sink;
  std::string files[2][3];
  const char* threads[2] = {"1", "3"};
  for (int k = 0; k < 2; ++k) {
    ::setenv("RH_FUSION_THREADS", threads[k], 1);
    const fs::path dir = base / threads[k];
    const int rc = cli::cmd_run(fixtures::watertank_path(), dir, overrides, true, sink, sink);
    if (rc != 0) return {false, "cmd_run failed with exit " + std::to_string(rc)};
    files[k][0] = slurp(dir / "estimates.csv");
    files[k][1] = slurp(dir / "covariance.csv");
    files[k][2] = slurp(dir / "mse.csv");
  }
  ::unsetenv("RH_FUSION_THREADS");
  fs::remove_all(base);
  bool same = true;
  for (int f = 0; f < 3; ++f) same = same && !files[0][f].empty() && files[0][f] == files[1][f];
  return {same, std::string("estimates/covariance/mse CSVs with 1 and 3 workers are ") +
                    (same ? "byte-identical" : "DIFFERENT")};
}

}  // namespace

int main() {
  set_quiet(true);
  criterion(1, "scalar Riccati steady state", scalar_riccati);
  criterion(2, "cross-covariance equation vs 20000-run Monte-Carlo", cross_covariance_oracle);

  const Scenario tank = fixtures::watertank();
  const MonteCarloPlan plan(tank);
  criterion(3, "fusion-weight identities", [&] { return weight_identities(plan); });
  criterion(4, "degeneracy suite", degeneracies);
  criterion(5, "water-tank experiment (1000 runs)", [&] {
    const MseReport rep = run_monte_carlo(tank);
    return watertank_experiment(tank, rep);
  });
  criterion(6, "limited memory", limited_memory);
  criterion(7, "fusion never hurts", [&] { return fusion_never_hurts(plan); });
  criterion(8, "determinism across worker counts", determinism);

  std::cout << (failures == 0 ? "all acceptance criteria passed" : std::to_string(failures) + " criteria failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}

#pragma once

#include "rhfusion/estimators.hpp"
#include "rhfusion/fusion.hpp"
#include "rhfusion/model.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace rhf {

using Rng = std::mt19937_64;

/// Seed of Monte-Carlo run `run`, mixed from the scenario seed (splitmix64).
std::uint64_t run_seed(std::uint64_t seed, std::uint64_t run);

/// Sample path of the true state; column k is x at grid point k.
struct TruthTrajectory {
  TimeGrid grid;
  Mat states;
};

/// Euler-Maruyama sample path of dx = (F + delta) x dt + G dv, with the
/// process-noise increment drawn from N(0, Q h) and x(t0) ~ N(x0_mean, P0).
TruthTrajectory simulate_truth(const LtvSystem& system, const TimeGrid& grid, Rng& rng);

/// Samples y = H x + noise at every grid point inside each sensor's
/// availability. The per-sample noise covariance is R / h so that R keeps its
/// meaning as a white-noise intensity.
MeasurementSet generate_measurements(const TruthTrajectory& truth, const SensorSuite& suite, Rng& rng);

/// Everything about one output instant that does not depend on measurements:
/// active sets, compiled filter maps, transition matrix, theoretical
/// covariances and fusion weights.
struct OutputPlan {
  std::size_t index = 0;  // grid index of t
  double t = 0.0;
  double target = 0.0;    // t + lead
  bool warmup = false;
  std::vector<int> active;  // sensors with full horizon data
  bool central_available = false;

  std::vector<AffineFilterMap> local_maps;
  std::optional<AffineFilterMap> central_map;
  Mat transition;  // maps a filtered mean at t to its prediction at t + lead

  std::vector<EstimatorState> local_filters;     // covariance at t
  std::vector<EstimatorState> local_predictors;  // covariance at t + lead
  std::optional<EstimatorState> central_filter;
  std::optional<EstimatorState> central_predictor;
  CrossCovState cross;                           // at t + lead
  FusionResult fused;                            // weights and covariance; mean unused
};

/// Measurement-independent schedule for a whole scenario, built once and
/// shared read-only by all Monte-Carlo runs.
class MonteCarloPlan {
 public:
  explicit MonteCarloPlan(const Scenario& scenario);

  const Scenario& scenario() const { return *scenario_; }
  const std::vector<OutputPlan>& outputs() const { return outputs_; }
  std::size_t fallback_count() const;

 private:
  const Scenario* scenario_;
  std::vector<OutputPlan> outputs_;
};

/// Row layout of per-estimator results: CRHP, DRHP, then one LRHP per sensor.
enum EstimatorSlot : std::size_t { kCentral = 0, kDistributed = 1, kFirstLocal = 2 };
std::vector<std::string> estimator_names(const Scenario& scenario);

/// Per-run estimates at every output instant, NaN where unavailable.
struct RunEstimates {
  Mat truth;                           // n x outputs, state at t + lead
  std::vector<Mat> predicted;          // per estimator slot, n x outputs
};

RunEstimates evaluate_run(const MonteCarloPlan& plan, const TruthTrajectory& truth, const MeasurementSet& meas);

struct MseReport {
  std::vector<std::string> estimators;
  std::vector<double> times;
  std::vector<double> targets;
  std::vector<std::uint8_t> warmup;
  std::size_t runs = 0;
  // Indexed [estimator][output]; entries of unavailable estimators stay NaN.
  std::vector<std::vector<std::uint8_t>> available;
  std::vector<std::vector<Vec>> mse;           // empirical E[(x - xhat)^2] per component
  std::vector<std::vector<Vec>> mean_error;    // empirical E[x - xhat]
  std::vector<std::vector<Vec>> theoretical;   // diagonal of the predictor covariance
  std::vector<std::vector<double>> theoretical_trace;
  std::vector<std::vector<Mat>> weights;       // [output] DRHP weights (active sensors)
  std::vector<std::vector<int>> active;        // [output]
  RunEstimates first_run;
};

struct MonteCarloOptions {
  int threads = 0;  // 0: OpenMP default
};

/// Parallel Monte-Carlo over precomputed schedules. Runs are grouped into
/// fixed-size blocks that are summed in block order, so results do not depend
/// on the number of threads.
MseReport run_monte_carlo(const Scenario& scenario, const MonteCarloOptions& options = {});

/// Serial reference: every run re-solves each estimator from scratch through
/// run_crhp / run_local_rhp / fuse. Slow; kept to check run_monte_carlo.
MseReport run_monte_carlo_reference(const Scenario& scenario, std::size_t runs);

struct OracleReport {
  int sensor_i = 0;
  int sensor_j = 0;
  std::size_t runs = 0;
  double t = 0.0;
  double target = 0.0;
  Mat empirical_filter;      // E[e_i e_j'] at t
  Mat stderr_filter;
  Mat integrated_filter;     // horizon cross-covariance equation at t
  Mat empirical_predictor;   // at t + lead
  Mat stderr_predictor;
  Mat predicted_homogeneous;   // prediction without process noise
  Mat predicted_shared_noise;  // prediction with process noise
  Mat local_cov_i;             // filter covariance of sensor i at t
};

/// Direct simulation of two local filters driven by the same truth and
/// measurements; returns the empirical error cross-covariance with per-entry
/// standard errors next to the integrated values.
OracleReport cross_cov_oracle(const Scenario& scenario, int i, int j, std::size_t runs, double t,
                              const MonteCarloOptions& options = {});

}  // namespace rhf

#pragma once

#include "rhfusion/model.hpp"
#include "rhfusion/numerics.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace rhf {

/// Samples of one sensor on the scenario grid. Column k of `values` is the
/// sample at grid point k and is meaningful only when present[k] is set.
struct SensorTrack {
  Mat values;
  std::vector<std::uint8_t> present;
};

/// Measurements of every sensor on a shared grid.
struct MeasurementSet {
  TimeGrid grid;
  std::vector<SensorTrack> tracks;

  bool has(std::size_t sensor, std::size_t k) const {
    return k < tracks[sensor].present.size() && tracks[sensor].present[k] != 0;
  }
  auto sample(std::size_t sensor, std::size_t k) const { return tracks[sensor].values.col(static_cast<Eigen::Index>(k)); }
};

/// Raised when an estimator cannot run because some sensor it needs has a
/// gap in its horizon data.
class EstimatorUnavailable : public std::runtime_error {
 public:
  EstimatorUnavailable(int sensor, double t);
  int sensor() const { return sensor_; }
  double time() const { return time_; }

 private:
  int sensor_;
  double time_;
};

/// Grid index range [first, last] of the measurement window ending at grid
/// point `last`. Windows that would start before t0 are truncated to t0 and
/// flagged as warmup.
struct HorizonWindow {
  std::size_t first = 0;
  std::size_t last = 0;
  bool warmup = false;

  std::size_t steps() const { return last - first; }
};

HorizonWindow horizon_window(const Scenario& scenario, std::size_t last);

/// Grid index of t on scenario.grid(); throws std::invalid_argument if t is
/// off the grid or out of range.
std::size_t grid_index(const Scenario& scenario, double t);

/// True when the availability schedule of `sensor` covers every point of `w`.
bool scheduled_over(const Scenario& scenario, int sensor, const HorizonWindow& w);

/// Sensors whose schedule covers the window ending at grid point `last`.
std::vector<int> scheduled_sensors(const Scenario& scenario, std::size_t last);

/// Unconditional mean and covariance of the state over the whole scenario,
/// computed once from (x0_mean, P0).
class UnconditionalMoments {
 public:
  explicit UnconditionalMoments(const Scenario& scenario);

  EstimatorState at(std::size_t k) const { return traj_.state(k); }
  const MomentTrajectory& trajectory() const { return traj_; }

 private:
  MomentTrajectory traj_;
};

/// Mean and covariance at the start of the horizon ending at t.
EstimatorState horizon_initial_conditions(const Scenario& scenario, const UnconditionalMoments& moments, double t);

/// Filter gain L = P H' R^-1 at each point of a horizon grid.
struct GainTrajectory {
  TimeGrid grid;
  std::vector<int> sensors;
  std::vector<Mat> gains;
};

/// The measurement-independent half of one horizon pass: the Riccati
/// solution and the gains the mean equation needs.
///
/// Each RK4 step of the mean equation evaluates the gain at four stages;
/// those are kept in `stage_gains` so the mean can be integrated afterwards
/// exactly as if both had been integrated together.
struct RiccatiPass {
  HorizonWindow window;
  TimeGrid grid;
  std::vector<int> sensors;
  EstimatorState start;
  std::vector<Mat> cov;                          // one per grid point
  std::vector<std::array<Mat, 4>> stage_gains;   // one per step
  GainTrajectory gains;                          // gain at each grid point
};

RiccatiPass solve_riccati(const Scenario& scenario, const UnconditionalMoments& moments,
                          std::span<const int> sensors, std::size_t last);

/// Integrates the filter mean over the pass with stacked, zero-order-held
/// measurements. Throws EstimatorUnavailable if any sample is missing.
Vec integrate_mean(const Scenario& scenario, const RiccatiPass& pass, const MeasurementSet& meas);

/// The horizon mean update as an affine recursion x' = A_k x + B_k y_k.
/// Built once per pass and reused across Monte-Carlo runs.
struct AffineFilterMap {
  std::vector<int> sensors;
  std::size_t first = 0;
  Vec start;
  std::vector<Mat> a;
  std::vector<Mat> b;
  Eigen::Index stacked_dim = 0;

  /// Filtered mean from the stacked samples; caller guarantees presence.
  Vec apply(const MeasurementSet& meas) const;
};

AffineFilterMap compile_affine(const Scenario& scenario, const RiccatiPass& pass);

struct FilterOutput {
  EstimatorState state;
  GainTrajectory gains;
};

/// Centralized filter over all sensors in `active` at time t.
FilterOutput run_crhf(const Scenario& scenario, const UnconditionalMoments& moments, double t,
                      const MeasurementSet& meas, std::span<const int> active);

/// Local filter of a single sensor at time t.
FilterOutput run_local_rhf(const Scenario& scenario, const UnconditionalMoments& moments, int sensor,
                           double t, const MeasurementSet& meas);

/// Centralized predictor for t + lead.
EstimatorState run_crhp(const Scenario& scenario, const UnconditionalMoments& moments, double t,
                        const MeasurementSet& meas, std::span<const int> active);

/// Local predictor of one sensor for t + lead.
EstimatorState run_local_rhp(const Scenario& scenario, const UnconditionalMoments& moments, int sensor,
                             double t, const MeasurementSet& meas);

}  // namespace rhf

#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rhf {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Closed time interval [begin, end].
struct Interval {
  double begin = 0.0;
  double end = 0.0;

  bool contains(double t, double tol = 1e-9) const {
    return t >= begin - tol && t <= end + tol;
  }
};

/// Piecewise-constant matrix-valued function of time.
///
/// Holds a sorted list of (t_start, value) breakpoints. The value at t is the
/// one attached to the last breakpoint with t_start <= t; times before the
/// first breakpoint take the first value.
class MatrixSchedule {
 public:
  struct Breakpoint {
    double t_start;
    Mat value;
  };

  MatrixSchedule() = default;
  explicit MatrixSchedule(Mat constant);
  explicit MatrixSchedule(std::vector<Breakpoint> breakpoints);

  const Mat& at(double t) const;
  const std::vector<Breakpoint>& breakpoints() const { return breakpoints_; }
  bool empty() const { return breakpoints_.empty(); }

 private:
  std::vector<Breakpoint> breakpoints_;
};

/// Additive perturbation of the plant dynamics that only the truth simulator
/// sees. Estimators always use the nominal F.
struct Perturbation {
  Interval when;
  Mat delta;
};

struct LtvSystem {
  MatrixSchedule F;
  MatrixSchedule G;
  MatrixSchedule Q;
  Vec x0_mean;
  Mat P0;
  std::vector<Perturbation> delta_schedule;

  Eigen::Index n() const { return x0_mean.size(); }
  Eigen::Index r() const { return G.empty() ? 0 : G.breakpoints().front().value.cols(); }

  /// G(t) Q(t) G(t)'
  Mat driven_noise(double t) const;
  /// F(t) plus every active perturbation; used by the truth simulator only.
  Mat truth_dynamics(double t) const;
};

struct SensorModel {
  std::string name;
  MatrixSchedule H;
  MatrixSchedule R;
  // Empty means always on.
  std::vector<Interval> availability;

  Eigen::Index m() const { return H.empty() ? 0 : H.breakpoints().front().value.rows(); }
  bool available_at(double t, double tol = 1e-9) const;
};

struct SensorSuite {
  std::vector<SensorModel> sensors;

  std::size_t size() const { return sensors.size(); }
  const SensorModel& operator[](std::size_t i) const { return sensors[i]; }
};

/// How the error cross-covariance of two local predictors evolves over the
/// prediction lead interval [t, t + lead].
enum class CrossPrediction {
  // dP/dt = F P + P F'
  kHomogeneous,
  // dP/dt = F P + P F' + G Q G'  (both errors driven by the same process noise)
  kSharedProcessNoise,
};

struct ScenarioConfig {
  double t0 = 0.0;
  double t_end = 0.0;
  double horizon = 0.0;  // T
  double lead = 0.0;     // Delta
  double step = 0.01;    // h
  int eval_stride = 1;
  int mc_runs = 1;
  std::uint64_t rng_seed = 0;
  CrossPrediction cross_prediction = CrossPrediction::kSharedProcessNoise;
};

/// Grid of t0 + k * step for k = 0..count. Points are never accumulated.
struct TimeGrid {
  double t0 = 0.0;
  double step = 1.0;
  std::size_t count = 0;  // number of steps

  double at(std::size_t k) const { return t0 + static_cast<double>(k) * step; }
  double end() const { return at(count); }
  std::size_t points() const { return count + 1; }
};

/// Number of whole steps of size `step` in `duration`, or nullopt if the
/// duration is not an integer multiple of the step.
std::optional<std::size_t> whole_steps(double duration, double step);

struct ValidationResult;
ValidationResult validate(LtvSystem system, SensorSuite suite, ScenarioConfig cfg);

/// A scenario whose every invariant has been checked. Immutable.
class Scenario {
 public:
  const LtvSystem& system() const { return system_; }
  const SensorSuite& suite() const { return suite_; }
  const ScenarioConfig& config() const { return config_; }

  Eigen::Index n() const { return system_.n(); }
  std::size_t sensor_count() const { return suite_.size(); }

  std::size_t horizon_steps() const { return horizon_steps_; }
  std::size_t lead_steps() const { return lead_steps_; }
  /// Grid over [t0, t_end].
  TimeGrid grid() const { return {config_.t0, config_.step, span_steps_}; }
  /// Grid over [t0, t_end + lead]; the truth must reach every prediction target.
  TimeGrid truth_grid() const { return {config_.t0, config_.step, span_steps_ + lead_steps_}; }
  /// Grid indices (into grid()) at which estimates are produced.
  std::vector<std::size_t> output_indices() const;

 private:
  friend ValidationResult validate(LtvSystem, SensorSuite, ScenarioConfig);

  LtvSystem system_;
  SensorSuite suite_;
  ScenarioConfig config_;
  std::size_t horizon_steps_ = 0;
  std::size_t lead_steps_ = 0;
  std::size_t span_steps_ = 0;
};

enum class ViolationKind {
  kDimensionMismatch,
  kNotPositiveSemidefinite,
  kSingularMeasurementNoise,
  kNotGridMultiple,
  kBadSchedule,
  kBadConfig,
};

struct Violation {
  ViolationKind kind;
  std::string message;
};

struct ValidationResult {
  std::optional<Scenario> scenario;
  std::vector<Violation> violations;

  bool ok() const { return scenario.has_value(); }
};

/// Checks every invariant of the plant, sensor suite and configuration and
/// collects all violations rather than stopping at the first.
ValidationResult validate(LtvSystem system, SensorSuite suite, ScenarioConfig cfg);

struct StackedModel {
  Mat H;  // (sum m_i) x n
  Mat R;  // block diagonal
};

/// Stacks the measurement models of `active` (ascending index order) at t.
/// Throws std::invalid_argument on an empty or out-of-range active set.
StackedModel stack_sensors(const SensorSuite& suite, std::span<const int> active, double t);

}  // namespace rhf

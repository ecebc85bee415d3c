#include "rhfusion/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace rhf {

MatrixSchedule::MatrixSchedule(Mat constant) {
  breakpoints_.push_back({0.0, std::move(constant)});
}

MatrixSchedule::MatrixSchedule(std::vector<Breakpoint> breakpoints)
    : breakpoints_(std::move(breakpoints)) {
  if (breakpoints_.empty()) {
    throw std::invalid_argument("matrix schedule needs at least one breakpoint");
  }
  std::stable_sort(breakpoints_.begin(), breakpoints_.end(),
                   [](const Breakpoint& a, const Breakpoint& b) { return a.t_start < b.t_start; });
}

const Mat& MatrixSchedule::at(double t) const {
  // Breakpoints snap to the grid: a point within 1e-9 of t_start is already past it.
  auto it = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), t + 1e-9,
                             [](double v, const Breakpoint& b) { return v < b.t_start; });
  if (it == breakpoints_.begin()) return breakpoints_.front().value;
  return std::prev(it)->value;
}

Mat LtvSystem::driven_noise(double t) const {
  const Mat& g = G.at(t);
  return g * Q.at(t) * g.transpose();
}

Mat LtvSystem::truth_dynamics(double t) const {
  Mat f = F.at(t);
  for (const auto& p : delta_schedule) {
    if (p.when.contains(t)) f += p.delta;
  }
  return f;
}

bool SensorModel::available_at(double t, double tol) const {
  if (availability.empty()) return true;
  return std::any_of(availability.begin(), availability.end(),
                     [&](const Interval& iv) { return iv.contains(t, tol); });
}

std::optional<std::size_t> whole_steps(double duration, double step) {
  if (!(step > 0.0) || !(duration >= 0.0) || !std::isfinite(duration)) return std::nullopt;
  const double ratio = duration / step;
  const double rounded = std::round(ratio);
  if (std::abs(ratio - rounded) > 1e-6 * std::max(1.0, rounded)) return std::nullopt;
  return static_cast<std::size_t>(rounded);
}

std::vector<std::size_t> Scenario::output_indices() const {
  std::vector<std::size_t> out;
  const auto stride = static_cast<std::size_t>(config_.eval_stride);
  for (std::size_t k = 0; k <= span_steps_; k += stride) out.push_back(k);
  return out;
}

namespace {

std::string fmt_shape(const Mat& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

class Checker {
 public:
  void add(ViolationKind kind, std::string msg) { out_.push_back({kind, std::move(msg)}); }

  void shape(const std::string& what, const Mat& m, Eigen::Index rows, Eigen::Index cols) {
    if (m.rows() != rows || m.cols() != cols) {
      std::ostringstream os;
      os << what << " has shape " << fmt_shape(m) << ", expected " << rows << "x" << cols;
      add(ViolationKind::kDimensionMismatch, os.str());
    }
  }

  void finite(const std::string& what, const Mat& m) {
    if (!m.allFinite()) add(ViolationKind::kBadConfig, what + " contains non-finite entries");
  }

  // Symmetric positive semidefinite up to a relative tolerance.
  void psd(const std::string& what, const Mat& m) {
    if (m.rows() != m.cols() || !m.allFinite()) return;
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
      add(ViolationKind::kNotPositiveSemidefinite, what + " is not symmetric");
      return;
    }
    if (m.size() == 0) return;
    Eigen::SelfAdjointEigenSolver<Mat> es(m, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-12 * scale) {
      add(ViolationKind::kNotPositiveSemidefinite, what + " is not positive semidefinite");
    }
  }

  void spd(const std::string& what, const Mat& m) {
    if (m.rows() != m.cols() || !m.allFinite() || m.size() == 0) return;
    const double scale = m.cwiseAbs().maxCoeff();
    if (scale == 0.0 || (m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
      add(ViolationKind::kSingularMeasurementNoise, what + " is singular or not symmetric");
      return;
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(m, Eigen::EigenvaluesOnly);
    const auto& ev = es.eigenvalues();
    if (ev.minCoeff() <= 1e-14 * ev.cwiseAbs().maxCoeff()) {
      add(ViolationKind::kSingularMeasurementNoise, what + " is singular (not positive definite)");
    }
  }

  std::vector<Violation> take() { return std::move(out_); }

 private:
  std::vector<Violation> out_;
};

std::string at_time(const std::string& name, double t) {
  std::ostringstream os;
  os << name << "(t=" << t << ")";
  return os.str();
}

}  // namespace

ValidationResult validate(LtvSystem system, SensorSuite suite, ScenarioConfig cfg) {
  Checker check;
  const Eigen::Index n = system.n();
  if (n == 0) check.add(ViolationKind::kDimensionMismatch, "state dimension is zero");
  if (system.F.empty() || system.G.empty() || system.Q.empty()) {
    check.add(ViolationKind::kDimensionMismatch, "F, G and Q must all be given");
  }
  const Eigen::Index r = system.r();

  for (const auto& bp : system.F.breakpoints()) {
    check.shape(at_time("F", bp.t_start), bp.value, n, n);
    check.finite(at_time("F", bp.t_start), bp.value);
  }
  for (const auto& bp : system.G.breakpoints()) {
    check.shape(at_time("G", bp.t_start), bp.value, n, r);
    check.finite(at_time("G", bp.t_start), bp.value);
  }
  for (const auto& bp : system.Q.breakpoints()) {
    check.shape(at_time("Q", bp.t_start), bp.value, r, r);
    check.psd(at_time("Q", bp.t_start), bp.value);
  }
  check.shape("P0", system.P0, n, n);
  check.psd("P0", system.P0);
  if (!system.x0_mean.allFinite()) check.add(ViolationKind::kBadConfig, "x0_mean is not finite");
  for (const auto& p : system.delta_schedule) {
    check.shape("perturbation delta", p.delta, n, n);
    if (p.when.end < p.when.begin) {
      check.add(ViolationKind::kBadSchedule, "perturbation interval ends before it begins");
    }
  }

  if (suite.sensors.empty()) check.add(ViolationKind::kDimensionMismatch, "sensor suite is empty");
  for (std::size_t i = 0; i < suite.size(); ++i) {
    const auto& s = suite.sensors[i];
    const std::string label = "sensor " + std::to_string(i + 1) + (s.name.empty() ? "" : " (" + s.name + ")");
    if (s.H.empty() || s.R.empty()) {
      check.add(ViolationKind::kDimensionMismatch, label + ": H and R must be given");
      continue;
    }
    const Eigen::Index m = s.m();
    if (m == 0) check.add(ViolationKind::kDimensionMismatch, label + ": measurement dimension is zero");
    for (const auto& bp : s.H.breakpoints()) {
      check.shape(label + " " + at_time("H", bp.t_start), bp.value, m, n);
      check.finite(label + " " + at_time("H", bp.t_start), bp.value);
    }
    for (const auto& bp : s.R.breakpoints()) {
      check.shape(label + " " + at_time("R", bp.t_start), bp.value, m, m);
      check.spd(label + " " + at_time("R", bp.t_start), bp.value);
    }
    for (std::size_t k = 0; k < s.availability.size(); ++k) {
      const auto& iv = s.availability[k];
      if (iv.end < iv.begin) {
        check.add(ViolationKind::kBadSchedule, label + ": availability interval ends before it begins");
      }
      if (k > 0 && iv.begin <= s.availability[k - 1].end) {
        check.add(ViolationKind::kBadSchedule, label + ": availability intervals overlap or are unsorted");
      }
    }
  }

  Scenario sc;
  if (!(cfg.step > 0.0)) check.add(ViolationKind::kBadConfig, "h must be positive");
  if (!(cfg.horizon > 0.0)) check.add(ViolationKind::kBadConfig, "T must be positive");
  if (!(cfg.lead >= 0.0)) check.add(ViolationKind::kBadConfig, "Delta must be non-negative");
  if (cfg.eval_stride < 1) check.add(ViolationKind::kBadConfig, "eval_stride must be at least 1");
  if (cfg.mc_runs < 1) check.add(ViolationKind::kBadConfig, "mc_runs must be at least 1");
  if (!(cfg.t_end - cfg.t0 >= cfg.horizon)) check.add(ViolationKind::kBadConfig, "t_end - t0 must be at least T");
  if (cfg.step > 0.0) {
    auto hs = whole_steps(cfg.horizon, cfg.step);
    auto ls = whole_steps(cfg.lead, cfg.step);
    auto ss = whole_steps(cfg.t_end - cfg.t0, cfg.step);
    if (cfg.horizon > 0.0 && !hs) check.add(ViolationKind::kNotGridMultiple, "T not a multiple of h");
    if (cfg.lead >= 0.0 && !ls) check.add(ViolationKind::kNotGridMultiple, "Delta not a multiple of h");
    if (cfg.t_end > cfg.t0 && !ss) check.add(ViolationKind::kNotGridMultiple, "t_end - t0 not a multiple of h");
    sc.horizon_steps_ = hs.value_or(0);
    sc.lead_steps_ = ls.value_or(0);
    sc.span_steps_ = ss.value_or(0);
  }

  ValidationResult result;
  result.violations = check.take();
  if (result.violations.empty()) {
    sc.system_ = std::move(system);
    sc.suite_ = std::move(suite);
    sc.config_ = cfg;
    result.scenario = std::move(sc);
  }
  return result;
}

StackedModel stack_sensors(const SensorSuite& suite, std::span<const int> active, double t) {
  if (active.empty()) throw std::invalid_argument("stack_sensors: active sensor set is empty");
  std::vector<int> order(active.begin(), active.end());
  std::sort(order.begin(), order.end());
  order.erase(std::unique(order.begin(), order.end()), order.end());

  Eigen::Index rows = 0;
  Eigen::Index n = 0;
  for (int i : order) {
    if (i < 0 || static_cast<std::size_t>(i) >= suite.size()) {
      throw std::invalid_argument("stack_sensors: sensor index out of range");
    }
    const Mat& h = suite[i].H.at(t);
    rows += h.rows();
    n = h.cols();
  }

  StackedModel out{Mat::Zero(rows, n), Mat::Zero(rows, rows)};
  Eigen::Index row = 0;
  for (int i : order) {
    const Mat& h = suite[i].H.at(t);
    const Mat& r = suite[i].R.at(t);
    out.H.middleRows(row, h.rows()) = h;
    out.R.block(row, row, r.rows(), r.cols()) = r;
    row += h.rows();
  }
  return out;
}

}  // namespace rhf

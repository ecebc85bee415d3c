#include "rhfusion/estimators.hpp"

#include <algorithm>
#include <sstream>

namespace rhf {

namespace {

std::string unavailable_message(int sensor, double t) {
  std::ostringstream os;
  os << "estimator unavailable at t=" << t << ": sensor " << (sensor + 1) << " has no data over the full horizon";
  return os.str();
}

std::vector<int> sorted_unique(std::span<const int> sensors) {
  std::vector<int> out(sensors.begin(), sensors.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void require_samples(const Scenario& scenario, const MeasurementSet& meas, std::span<const int> sensors,
                     const HorizonWindow& w) {
  for (int i : sensors) {
    if (i < 0 || static_cast<std::size_t>(i) >= scenario.sensor_count()) {
      throw std::invalid_argument("sensor index out of range");
    }
    for (std::size_t k = w.first; k <= w.last; ++k) {
      if (!meas.has(static_cast<std::size_t>(i), k)) throw EstimatorUnavailable(i, scenario.grid().at(w.last));
    }
  }
}

Vec stacked_sample(const MeasurementSet& meas, std::span<const int> sensors, std::size_t k, Eigen::Index dim) {
  Vec y(dim);
  Eigen::Index row = 0;
  for (int i : sensors) {
    auto s = meas.sample(static_cast<std::size_t>(i), k);
    y.segment(row, s.size()) = s;
    row += s.size();
  }
  return y;
}

struct StepModel {
  Mat f;
  Mat h;
  Mat gain_map;  // H' R^-1
};

StepModel step_model(const Scenario& scenario, std::span<const int> sensors, double t) {
  StackedModel st = stack_sensors(scenario.suite(), sensors, t);
  Mat gain_map = st.R.llt().solve(st.H).transpose();
  return {scenario.system().F.at(t), std::move(st.H), std::move(gain_map)};
}

}  // namespace

EstimatorUnavailable::EstimatorUnavailable(int sensor, double t)
    : std::runtime_error(unavailable_message(sensor, t)), sensor_(sensor), time_(t) {}

HorizonWindow horizon_window(const Scenario& scenario, std::size_t last) {
  const std::size_t hs = scenario.horizon_steps();
  if (last >= hs) return {last - hs, last, false};
  return {0, last, true};
}

std::size_t grid_index(const Scenario& scenario, double t) {
  const TimeGrid g = scenario.grid();
  const std::size_t k = steps_between(g.t0, t, g.step);
  if (k > g.count) throw std::invalid_argument("time is past the end of the scenario");
  return k;
}

bool scheduled_over(const Scenario& scenario, int sensor, const HorizonWindow& w) {
  const TimeGrid g = scenario.grid();
  const double tol = 1e-6 * g.step;
  const auto& s = scenario.suite()[static_cast<std::size_t>(sensor)];
  for (std::size_t k = w.first; k <= w.last; ++k) {
    if (!s.available_at(g.at(k), tol)) return false;
  }
  return true;
}

std::vector<int> scheduled_sensors(const Scenario& scenario, std::size_t last) {
  const HorizonWindow w = horizon_window(scenario, last);
  std::vector<int> out;
  for (std::size_t i = 0; i < scenario.sensor_count(); ++i) {
    if (scheduled_over(scenario, static_cast<int>(i), w)) out.push_back(static_cast<int>(i));
  }
  return out;
}

UnconditionalMoments::UnconditionalMoments(const Scenario& scenario)
    : traj_(propagate_lyapunov(scenario.system(), scenario.grid().t0, scenario.grid().end(),
                               scenario.config().step, scenario.system().x0_mean, scenario.system().P0)) {}

EstimatorState horizon_initial_conditions(const Scenario& scenario, const UnconditionalMoments& moments, double t) {
  return moments.at(horizon_window(scenario, grid_index(scenario, t)).first);
}

RiccatiPass solve_riccati(const Scenario& scenario, const UnconditionalMoments& moments,
                          std::span<const int> sensors, std::size_t last) {
  RiccatiPass pass;
  pass.window = horizon_window(scenario, last);
  pass.sensors = sorted_unique(sensors);
  if (pass.sensors.empty()) throw std::invalid_argument("solve_riccati: no sensors");
  const TimeGrid g = scenario.grid();
  const double h = g.step;
  pass.grid = {g.at(pass.window.first), h, pass.window.steps()};
  pass.start = moments.at(pass.window.first);
  pass.gains.grid = pass.grid;
  pass.gains.sensors = pass.sensors;

  const std::size_t steps = pass.window.steps();
  pass.cov.reserve(steps + 1);
  pass.stage_gains.reserve(steps);
  pass.gains.gains.reserve(steps + 1);
  pass.cov.push_back(pass.start.cov);

  for (std::size_t k = 0; k <= steps; ++k) {
    const double t = g.at(pass.window.first + k);
    const StepModel sm = step_model(scenario, pass.sensors, t);
    const Mat& p = pass.cov.back();
    pass.gains.gains.push_back(p * sm.gain_map);
    if (k == steps) break;

    const Mat qt = scenario.system().driven_noise(t);
    const Mat info = sm.gain_map * sm.h;  // H' R^-1 H
    std::array<Mat, 4> stages;
    int stage = 0;
    auto riccati = [&](double, const Mat& x) -> Mat {
      stages[stage++] = x * sm.gain_map;
      return sm.f * x + x * sm.f.transpose() + qt - x * info * x;
    };
    Mat next = rk4_step(riccati, t, p, h);
    symmetrize(next);
    pass.stage_gains.push_back(std::move(stages));
    pass.cov.push_back(std::move(next));
  }
  return pass;
}

Vec integrate_mean(const Scenario& scenario, const RiccatiPass& pass, const MeasurementSet& meas) {
  require_samples(scenario, meas, pass.sensors, pass.window);
  const TimeGrid g = scenario.grid();
  Vec x = pass.start.mean;
  Eigen::Index dim = 0;
  for (int i : pass.sensors) dim += scenario.suite()[static_cast<std::size_t>(i)].m();
  for (std::size_t k = 0; k < pass.window.steps(); ++k) {
    const std::size_t j = pass.window.first + k;
    const double t = g.at(j);
    const StepModel sm = step_model(scenario, pass.sensors, t);
    const Vec y = stacked_sample(meas, pass.sensors, j, dim);
    const auto& stages = pass.stage_gains[k];
    int stage = 0;
    auto rhs = [&](double, const Vec& v) -> Vec {
      const Mat& l = stages[stage++];
      return sm.f * v + l * (y - sm.h * v);
    };
    x = rk4_step(rhs, t, x, g.step);
  }
  return x;
}

AffineFilterMap compile_affine(const Scenario& scenario, const RiccatiPass& pass) {
  const TimeGrid g = scenario.grid();
  const Eigen::Index n = scenario.n();
  AffineFilterMap out;
  out.sensors = pass.sensors;
  out.first = pass.window.first;
  out.start = pass.start.mean;
  for (int i : pass.sensors) out.stacked_dim += scenario.suite()[static_cast<std::size_t>(i)].m();
  const Eigen::Index m = out.stacked_dim;
  out.a.reserve(pass.window.steps());
  out.b.reserve(pass.window.steps());

  // Columns of the state carry the images of the unit vectors of (x, y).
  Mat x0 = Mat::Zero(n, n + m);
  x0.leftCols(n).setIdentity();
  Mat y = Mat::Zero(m, n + m);
  y.rightCols(m).setIdentity();
  for (std::size_t k = 0; k < pass.window.steps(); ++k) {
    const double t = g.at(pass.window.first + k);
    const StepModel sm = step_model(scenario, pass.sensors, t);
    const auto& stages = pass.stage_gains[k];
    int stage = 0;
    auto rhs = [&](double, const Mat& v) -> Mat {
      const Mat& l = stages[stage++];
      return sm.f * v + l * (y - sm.h * v);
    };
    const Mat ab = rk4_step(rhs, t, x0, g.step);
    out.a.push_back(ab.leftCols(n));
    out.b.push_back(ab.rightCols(m));
  }
  return out;
}

Vec AffineFilterMap::apply(const MeasurementSet& meas) const {
  Vec x = start;
  Vec next(x.size());
  Vec y(stacked_dim);
  for (std::size_t k = 0; k < a.size(); ++k) {
    const std::size_t j = first + k;
    if (sensors.size() == 1) {
      next.noalias() = a[k] * x;
      next.noalias() += b[k] * meas.sample(static_cast<std::size_t>(sensors.front()), j);
    } else {
      Eigen::Index row = 0;
      for (int i : sensors) {
        auto s = meas.sample(static_cast<std::size_t>(i), j);
        y.segment(row, s.size()) = s;
        row += s.size();
      }
      next.noalias() = a[k] * x;
      next.noalias() += b[k] * y;
    }
    x.swap(next);
  }
  return x;
}

FilterOutput run_crhf(const Scenario& scenario, const UnconditionalMoments& moments, double t,
                      const MeasurementSet& meas, std::span<const int> active) {
  const std::size_t last = grid_index(scenario, t);
  const auto sensors = sorted_unique(active);
  require_samples(scenario, meas, sensors, horizon_window(scenario, last));
  RiccatiPass pass = solve_riccati(scenario, moments, sensors, last);
  Vec mean = integrate_mean(scenario, pass, meas);
  EstimatorState state{scenario.grid().at(last), std::move(mean), pass.cov.back()};
  return {std::move(state), std::move(pass.gains)};
}

FilterOutput run_local_rhf(const Scenario& scenario, const UnconditionalMoments& moments, int sensor,
                           double t, const MeasurementSet& meas) {
  const int one[] = {sensor};
  return run_crhf(scenario, moments, t, meas, one);
}

EstimatorState run_crhp(const Scenario& scenario, const UnconditionalMoments& moments, double t,
                        const MeasurementSet& meas, std::span<const int> active) {
  const std::size_t last = grid_index(scenario, t);
  const FilterOutput f = run_crhf(scenario, moments, t, meas, active);
  const double target = scenario.truth_grid().at(last + scenario.lead_steps());
  return propagate_prediction(scenario.system(), f.state.t, target, scenario.config().step, f.state);
}

EstimatorState run_local_rhp(const Scenario& scenario, const UnconditionalMoments& moments, int sensor,
                             double t, const MeasurementSet& meas) {
  const int one[] = {sensor};
  return run_crhp(scenario, moments, t, meas, one);
}

}  // namespace rhf

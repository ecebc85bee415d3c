#include "rhfusion/numerics.hpp"

#include <sstream>

namespace rhf {

namespace {

std::string propagation_message(double t) {
  std::ostringstream os;
  os.precision(12);
  os << "non-finite derivative during propagation at t=" << t;
  return os.str();
}

// One step of dP/dt = F P + P F' + Qt with F and Qt frozen.
Mat lyapunov_step(const Mat& f, const Mat* qt, double t, const Mat& p, double h) {
  auto rhs = [&](double, const Mat& x) -> Mat {
    Mat d = f * x + x * f.transpose();
    if (qt) d += *qt;
    return d;
  };
  Mat next = rk4_step(rhs, t, p, h);
  symmetrize(next);
  return next;
}

Vec mean_step(const Mat& f, double t, const Vec& m, double h) {
  return rk4_step([&](double, const Vec& x) -> Vec { return f * x; }, t, m, h);
}

}  // namespace

PropagationError::PropagationError(double t) : std::runtime_error(propagation_message(t)), time_(t) {}

std::size_t steps_between(double from, double to, double step) {
  if (to < from - 1e-9 * step) throw std::invalid_argument("propagation interval ends before it starts");
  if (std::abs(to - from) <= 1e-9 * step) return 0;
  auto k = whole_steps(to - from, step);
  if (!k) throw std::invalid_argument("propagation interval is not a whole number of steps");
  return *k;
}

MomentTrajectory propagate_lyapunov(const LtvSystem& system, double from, double to, double step,
                                    const Vec& mean0, const Mat& cov0) {
  const std::size_t count = steps_between(from, to, step);
  MomentTrajectory out{{from, step, count}, {}, {}};
  out.mean.reserve(count + 1);
  out.cov.reserve(count + 1);
  out.mean.push_back(mean0);
  out.cov.push_back(cov0);
  for (std::size_t k = 0; k < count; ++k) {
    const double t = out.grid.at(k);
    const Mat& f = system.F.at(t);
    const Mat qt = system.driven_noise(t);
    out.mean.push_back(mean_step(f, t, out.mean.back(), step));
    out.cov.push_back(lyapunov_step(f, &qt, t, out.cov.back(), step));
  }
  return out;
}

EstimatorState propagate_prediction(const LtvSystem& system, double from, double to, double step,
                                    const EstimatorState& state) {
  const MomentTrajectory traj = propagate_lyapunov(system, from, to, step, state.mean, state.cov);
  if (traj.grid.count == 0) return state;
  return {to, traj.mean.back(), traj.cov.back()};
}

Mat propagate_cross_prediction(const LtvSystem& system, double from, double to, double step,
                               const Mat& cross, CrossPrediction mode) {
  const std::size_t count = steps_between(from, to, step);
  const TimeGrid grid{from, step, count};
  Mat p = cross;
  for (std::size_t k = 0; k < count; ++k) {
    const double t = grid.at(k);
    const Mat& f = system.F.at(t);
    // Cross terms are not symmetric in general; no symmetrization here.
    if (mode == CrossPrediction::kSharedProcessNoise) {
      const Mat qt = system.driven_noise(t);
      p = rk4_step([&](double, const Mat& x) -> Mat { return f * x + x * f.transpose() + qt; }, t, p, step);
    } else {
      p = rk4_step([&](double, const Mat& x) -> Mat { return f * x + x * f.transpose(); }, t, p, step);
    }
  }
  return p;
}

Mat transition_matrix(const LtvSystem& system, double from, double to, double step) {
  const std::size_t count = steps_between(from, to, step);
  const TimeGrid grid{from, step, count};
  Mat phi = Mat::Identity(system.n(), system.n());
  for (std::size_t k = 0; k < count; ++k) {
    const double t = grid.at(k);
    const Mat& f = system.F.at(t);
    phi = rk4_step([&](double, const Mat& x) -> Mat { return f * x; }, t, phi, step);
  }
  return phi;
}

}  // namespace rhf

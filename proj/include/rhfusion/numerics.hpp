#pragma once

#include "rhfusion/model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace rhf {

/// Raised when an ODE right-hand side produces NaN or infinity.
class PropagationError : public std::runtime_error {
 public:
  explicit PropagationError(double t);
  double time() const { return time_; }

 private:
  double time_;
};

namespace detail {
inline bool all_finite(double v) { return std::isfinite(v); }
template <class Derived>
bool all_finite(const Eigen::DenseBase<Derived>& v) {
  return v.allFinite();
}
}  // namespace detail

/// One classical fourth-order Runge-Kutta step of dx/dt = f(t, x).
///
/// `f` is called exactly four times, in stage order, at t, t + h/2, t + h/2
/// and t + h. Callers rely on that order to record per-stage quantities.
template <class State, class Deriv>
State rk4_step(Deriv&& f, double t, const State& x, double h) {
  const double half = 0.5 * h;
  const State k1 = f(t, x);
  if (!detail::all_finite(k1)) throw PropagationError(t);
  const State k2 = f(t + half, State(x + half * k1));
  if (!detail::all_finite(k2)) throw PropagationError(t + half);
  const State k3 = f(t + half, State(x + half * k2));
  if (!detail::all_finite(k3)) throw PropagationError(t + half);
  const State k4 = f(t + h, State(x + h * k3));
  if (!detail::all_finite(k4)) throw PropagationError(t + h);
  return State(x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
}

inline void symmetrize(Mat& p) { p = (0.5 * (p + p.transpose())).eval(); }

/// Number of grid steps between two grid times; throws std::invalid_argument
/// when `to < from` or the span is not a whole number of steps.
std::size_t steps_between(double from, double to, double step);

/// Mean, covariance and time of any filter or predictor.
struct EstimatorState {
  double t = 0.0;
  Vec mean;
  Mat cov;
};

/// Mean and covariance samples at every point of `grid`.
struct MomentTrajectory {
  TimeGrid grid;
  std::vector<Vec> mean;
  std::vector<Mat> cov;

  EstimatorState state(std::size_t k) const { return {grid.at(k), mean[k], cov[k]}; }
};

/// Unconditional moments: dm/dt = F m, dP/dt = F P + P F' + G Q G'.
/// Matrices are held at their value at the start of each step. The covariance
/// is symmetrized after every step.
MomentTrajectory propagate_lyapunov(const LtvSystem& system, double from, double to, double step,
                                    const Vec& mean0, const Mat& cov0);

/// Open-loop prediction of a filter state over [from, to]. Same equations and
/// code path as propagate_lyapunov; a zero-length span returns the input
/// state unchanged.
EstimatorState propagate_prediction(const LtvSystem& system, double from, double to, double step,
                                    const EstimatorState& state);

/// Propagates an error cross-covariance of two local predictors over
/// [from, to]. kHomogeneous integrates dP/dt = F P + P F'; kSharedProcessNoise
/// adds G Q G'.
Mat propagate_cross_prediction(const LtvSystem& system, double from, double to, double step,
                               const Mat& cross, CrossPrediction mode);

/// State transition matrix of the RK4-discretized dx/dt = F x over [from, to].
Mat transition_matrix(const LtvSystem& system, double from, double to, double step);

}  // namespace rhf

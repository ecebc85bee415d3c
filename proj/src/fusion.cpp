#include "rhfusion/fusion.hpp"

#include "rhfusion/log.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace rhf {

namespace {

std::string degenerate_message(double condition) {
  std::ostringstream os;
  os << "fusion weight system is degenerate (condition estimate " << condition << ")";
  return os.str();
}

bool same_grid(const TimeGrid& a, const TimeGrid& b) {
  return a.count == b.count && a.step == b.step && std::abs(a.t0 - b.t0) <= 1e-9 * a.step;
}

double target_time(const Scenario& scenario, double t) {
  return scenario.truth_grid().at(grid_index(scenario, t) + scenario.lead_steps());
}

}  // namespace

CrossCovState::CrossCovState(double time, std::vector<int> active, Eigen::Index n)
    : t(time), sensors(std::move(active)) {
  blocks.assign(sensors.size() * sensors.size(), Mat::Zero(n, n));
}

Mat CrossCovState::assembled() const {
  const std::size_t N = size();
  const Eigen::Index n = dim();
  Mat out(n * static_cast<Eigen::Index>(N), n * static_cast<Eigen::Index>(N));
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t j = 0; j < N; ++j) {
      out.block(static_cast<Eigen::Index>(i) * n, static_cast<Eigen::Index>(j) * n, n, n) = block(i, j);
    }
  }
  return out;
}

CrossCovState CrossCovState::restricted(std::span<const std::size_t> keep) const {
  std::vector<int> active;
  for (std::size_t k : keep) active.push_back(sensors.at(k));
  CrossCovState out(t, std::move(active), dim());
  for (std::size_t a = 0; a < keep.size(); ++a) {
    for (std::size_t b = 0; b < keep.size(); ++b) out.block(a, b) = block(keep[a], keep[b]);
  }
  return out;
}

DegenerateFusion::DegenerateFusion(double condition)
    : std::runtime_error(degenerate_message(condition)), condition_(condition) {}

Mat integrate_cross_covariance(const Scenario& scenario, const Mat& initial, const GainTrajectory& gains_i,
                               const GainTrajectory& gains_j) {
  if (!same_grid(gains_i.grid, gains_j.grid) || gains_i.gains.size() != gains_i.grid.points() ||
      gains_j.gains.size() != gains_j.grid.points()) {
    throw std::invalid_argument("cross-covariance: gain trajectories are not on the same grid");
  }
  const TimeGrid& grid = gains_i.grid;
  const LtvSystem& sys = scenario.system();
  Mat p = initial;
  for (std::size_t k = 0; k < grid.count; ++k) {
    const double t = grid.at(k);
    const Mat& f = sys.F.at(t);
    const Mat fi = f - gains_i.gains[k] * stack_sensors(scenario.suite(), gains_i.sensors, t).H;
    const Mat fj = f - gains_j.gains[k] * stack_sensors(scenario.suite(), gains_j.sensors, t).H;
    const Mat qt = sys.driven_noise(t);
    p = rk4_step([&](double, const Mat& x) -> Mat { return fi * x + x * fj.transpose() + qt; }, t, p, grid.step);
  }
  return p;
}

Mat cross_cov_horizon(const Scenario& scenario, const Mat& initial, const GainTrajectory& gains_i,
                      const GainTrajectory& gains_j) {
  if (gains_i.sensors == gains_j.sensors) {
    throw std::invalid_argument("cross_cov_horizon: needs two distinct estimators");
  }
  return integrate_cross_covariance(scenario, initial, gains_i, gains_j);
}

Mat cross_cov_predict(const Scenario& scenario, double t, const Mat& cross) {
  return propagate_cross_prediction(scenario.system(), t, target_time(scenario, t), scenario.config().step, cross,
                                    scenario.config().cross_prediction);
}

CrossCovState local_cross_covariances(const Scenario& scenario, std::span<const RiccatiPass> passes) {
  if (passes.empty()) throw std::invalid_argument("local_cross_covariances: no estimators");
  const HorizonWindow w = passes.front().window;
  const double t = scenario.grid().at(w.last);
  const double target = target_time(scenario, t);
  const double h = scenario.config().step;
  std::vector<int> active;
  for (const auto& p : passes) {
    if (p.sensors.size() != 1 || p.window.first != w.first || p.window.last != w.last) {
      throw std::invalid_argument("local_cross_covariances: passes must be single-sensor and share a window");
    }
    active.push_back(p.sensors.front());
  }
  const std::size_t N = passes.size();
  CrossCovState out(target, std::move(active), scenario.n());

  for (std::size_t i = 0; i < N; ++i) {
    const EstimatorState filtered{t, Vec::Zero(scenario.n()), passes[i].cov.back()};
    out.block(i, i) = propagate_prediction(scenario.system(), t, target, h, filtered).cov;
  }

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t j = i + 1; j < N; ++j) pairs.emplace_back(i, j);
  }
  // Pairs are independent and each writes its own two blocks.
#pragma omp parallel for schedule(static) if (pairs.size() > 2)
  for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(pairs.size()); ++k) {
    const auto [i, j] = pairs[static_cast<std::size_t>(k)];
    const Mat at_t = cross_cov_horizon(scenario, passes[i].start.cov, passes[i].gains, passes[j].gains);
    out.block(i, j) = cross_cov_predict(scenario, t, at_t);
    out.block(j, i) = out.block(i, j).transpose();
  }
  return out;
}

std::vector<Mat> fusion_weights(const CrossCovState& cross, double* condition_out) {
  const std::size_t N = cross.size();
  const Eigen::Index n = cross.dim();
  if (N == 0) throw std::invalid_argument("fusion_weights: empty active set");
  if (N == 1) return {Mat::Identity(n, n)};

  // Weights are invariant to a common scale of P; normalizing keeps the
  // identity blocks and the covariance differences comparable.
  double scale = 0.0;
  for (const auto& b : cross.blocks) scale = std::max(scale, b.cwiseAbs().maxCoeff());
  if (!(scale > 0.0) || !std::isfinite(scale)) throw DegenerateFusion(std::numeric_limits<double>::infinity());

  const Eigen::Index dim = n * static_cast<Eigen::Index>(N);
  Mat system(dim, dim);
  for (std::size_t i = 0; i < N; ++i) {
    const Eigen::Index row = static_cast<Eigen::Index>(i) * n;
    for (std::size_t j = 0; j + 1 < N; ++j) {
      system.block(row, static_cast<Eigen::Index>(j) * n, n, n) = (cross.block(i, j) - cross.block(i, N - 1)) / scale;
    }
    system.block(row, dim - n, n, n).setIdentity();
  }

  Eigen::JacobiSVD<Mat> svd(system);
  const auto& sv = svd.singularValues();
  const double condition = sv(sv.size() - 1) > 0.0 ? sv(0) / sv(sv.size() - 1) : std::numeric_limits<double>::infinity();
  if (!(condition <= kMaxFusionCondition)) throw DegenerateFusion(condition);
  if (condition_out) *condition_out = condition;

  // [W_1 ... W_N] * system = [0 ... 0 I]
  Mat rhs = Mat::Zero(dim, n);
  rhs.bottomRows(n).setIdentity();
  const Mat a = system.transpose();
  const Eigen::FullPivLU<Mat> lu(a);
  Mat stacked = lu.solve(rhs);
  // Ill-conditioned in practice (sensors observing the same components), so
  // refine with residuals formed in extended precision.
  using MatL = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
  const MatL a_ext = a.cast<long double>();
  const MatL rhs_ext = rhs.cast<long double>();
  for (int it = 0; it < 2; ++it) {
    const MatL residual = rhs_ext - a_ext * stacked.cast<long double>();
    stacked += lu.solve(residual.cast<double>());
  }
  std::vector<Mat> weights;
  weights.reserve(N);
  for (std::size_t i = 0; i < N; ++i) {
    weights.push_back(stacked.middleRows(static_cast<Eigen::Index>(i) * n, n).transpose());
  }
  return weights;
}

FusionResult fuse(std::span<const EstimatorState> locals, const CrossCovState& cross) {
  const std::size_t N = locals.size();
  if (N == 0 || N != cross.size()) throw std::invalid_argument("fuse: local estimates do not match the active set");
  for (const auto& s : locals) {
    if (std::abs(s.t - cross.t) > 1e-9 * std::max(1.0, std::abs(cross.t))) {
      throw std::invalid_argument("fuse: local estimates and cross-covariances have different timestamps");
    }
  }
  const Eigen::Index n = cross.dim();
  FusionResult out;
  out.t = cross.t;
  out.active = cross.sensors;
  if (N == 1) {
    out.mean = locals[0].mean;
    out.cov = locals[0].cov;
    out.weights = {Mat::Identity(n, n)};
    return out;
  }

  try {
    out.weights = fusion_weights(cross, &out.condition);
  } catch (const DegenerateFusion& e) {
    std::ostringstream os;
    os << "t=" << cross.t << ": " << e.what() << "; using equal weights";
    log_warning(os.str());
    out.fallback = true;
    out.condition = e.condition();
    out.weights.assign(N, Mat::Identity(n, n) / static_cast<double>(N));
  }

  out.mean = Vec::Zero(n);
  out.cov = Mat::Zero(n, n);
  for (std::size_t i = 0; i < N; ++i) {
    out.mean.noalias() += out.weights[i] * locals[i].mean;
    for (std::size_t j = 0; j < N; ++j) {
      out.cov.noalias() += out.weights[i] * cross.block(i, j) * out.weights[j].transpose();
    }
  }
  symmetrize(out.cov);
  return out;
}

}  // namespace rhf

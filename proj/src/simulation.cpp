#include "rhfusion/simulation.hpp"

#include "rhfusion/log.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace rhf {

namespace {

constexpr std::size_t kRunsPerBlock = 8;

int worker_count(const MonteCarloOptions& options) {
#ifdef _OPENMP
  return options.threads > 0 ? options.threads : omp_get_max_threads();
#else
  (void)options;
  return 1;
#endif
}

// Square-root factor S with S S' = m for a symmetric PSD matrix.
Mat psd_factor(const Mat& m) {
  if (m.size() == 0) return m;
  Eigen::LLT<Mat> llt(m);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  Eigen::SelfAdjointEigenSolver<Mat> es(m);
  const Vec root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal();
}

Vec standard_normal(Eigen::Index size, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec z(size);
  for (Eigen::Index i = 0; i < size; ++i) z(i) = normal(rng);
  return z;
}

// Factor cache keyed on the address of the schedule entry it was built from.
class FactorCache {
 public:
  explicit FactorCache(double scale) : scale_(scale) {}
  const Mat& get(const Mat& m) {
    if (&m != key_) {
      key_ = &m;
      factor_ = psd_factor(scale_ * m);
    }
    return factor_;
  }

 private:
  double scale_;
  const Mat* key_ = nullptr;
  Mat factor_;
};

const Vec& nan_vec(Eigen::Index n) {
  thread_local Vec v;
  if (v.size() != n) v = Vec::Constant(n, std::numeric_limits<double>::quiet_NaN());
  return v;
}

bool slot_available(const OutputPlan& o, std::size_t slot) {
  if (slot == kCentral) return o.central_available;
  if (slot == kDistributed) return !o.active.empty();
  const int sensor = static_cast<int>(slot - kFirstLocal);
  for (int a : o.active) {
    if (a == sensor) return true;
  }
  return false;
}

// Sums of errors and squared errors, [slot] -> n x outputs.
struct ErrorSums {
  std::vector<Mat> sum;
  std::vector<Mat> sum_sq;

  ErrorSums(std::size_t slots, Eigen::Index n, std::size_t outputs) {
    sum.assign(slots, Mat::Zero(n, static_cast<Eigen::Index>(outputs)));
    sum_sq = sum;
  }

  void add(const MonteCarloPlan& plan, const RunEstimates& est) {
    const auto& outs = plan.outputs();
    for (std::size_t s = 0; s < sum.size(); ++s) {
      for (std::size_t o = 0; o < outs.size(); ++o) {
        if (!slot_available(outs[o], s)) continue;
        const auto col = static_cast<Eigen::Index>(o);
        const Vec e = est.truth.col(col) - est.predicted[s].col(col);
        sum[s].col(col) += e;
        sum_sq[s].col(col) += e.cwiseProduct(e);
      }
    }
  }

  void merge(const ErrorSums& other) {
    for (std::size_t s = 0; s < sum.size(); ++s) {
      sum[s] += other.sum[s];
      sum_sq[s] += other.sum_sq[s];
    }
  }
};

MseReport make_report(const MonteCarloPlan& plan, const ErrorSums& sums, std::size_t runs, RunEstimates first) {
  const Scenario& sc = plan.scenario();
  const auto& outs = plan.outputs();
  const Eigen::Index n = sc.n();
  MseReport rep;
  rep.estimators = estimator_names(sc);
  rep.runs = runs;
  const std::size_t slots = rep.estimators.size();
  rep.available.assign(slots, std::vector<std::uint8_t>(outs.size(), 0));
  rep.mse.assign(slots, std::vector<Vec>(outs.size(), nan_vec(n)));
  rep.mean_error = rep.mse;
  rep.theoretical = rep.mse;
  rep.theoretical_trace.assign(slots, std::vector<double>(outs.size(), std::numeric_limits<double>::quiet_NaN()));
  const double inv = 1.0 / static_cast<double>(runs);
  for (std::size_t o = 0; o < outs.size(); ++o) {
    const OutputPlan& op = outs[o];
    rep.times.push_back(op.t);
    rep.targets.push_back(op.target);
    rep.warmup.push_back(op.warmup ? 1 : 0);
    rep.weights.push_back(op.fused.weights);
    rep.active.push_back(op.active);
    for (std::size_t s = 0; s < slots; ++s) {
      if (!slot_available(op, s)) continue;
      rep.available[s][o] = 1;
      const auto col = static_cast<Eigen::Index>(o);
      rep.mse[s][o] = sums.sum_sq[s].col(col) * inv;
      rep.mean_error[s][o] = sums.sum[s].col(col) * inv;
      const Mat* cov = nullptr;
      if (s == kCentral) {
        cov = &op.central_predictor->cov;
      } else if (s == kDistributed) {
        cov = &op.fused.cov;
      } else {
        for (std::size_t a = 0; a < op.active.size(); ++a) {
          if (static_cast<std::size_t>(op.active[a]) + kFirstLocal == s) cov = &op.local_predictors[a].cov;
        }
      }
      rep.theoretical[s][o] = cov->diagonal();
      rep.theoretical_trace[s][o] = cov->trace();
    }
  }
  rep.first_run = std::move(first);
  return rep;
}

}  // namespace

std::uint64_t run_seed(std::uint64_t seed, std::uint64_t run) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (run + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

TruthTrajectory simulate_truth(const LtvSystem& system, const TimeGrid& grid, Rng& rng) {
  const Eigen::Index n = system.n();
  TruthTrajectory out{grid, Mat(n, static_cast<Eigen::Index>(grid.points()))};
  Vec x = system.x0_mean + psd_factor(system.P0) * standard_normal(n, rng);
  out.states.col(0) = x;
  FactorCache noise(grid.step);
  for (std::size_t k = 0; k < grid.count; ++k) {
    const double t = grid.at(k);
    const Mat f = system.truth_dynamics(t);
    const Mat& g = system.G.at(t);
    const Mat& s = noise.get(system.Q.at(t));
    const Vec dv = s * standard_normal(s.cols(), rng);
    Vec next = x + grid.step * (f * x) + g * dv;
    if (!next.allFinite()) throw PropagationError(t);
    x.swap(next);
    out.states.col(static_cast<Eigen::Index>(k + 1)) = x;
  }
  return out;
}

MeasurementSet generate_measurements(const TruthTrajectory& truth, const SensorSuite& suite, Rng& rng) {
  const TimeGrid& grid = truth.grid;
  MeasurementSet out{grid, {}};
  const double tol = 1e-6 * grid.step;
  for (const auto& sensor : suite.sensors) {
    SensorTrack track;
    track.values = Mat::Zero(sensor.m(), static_cast<Eigen::Index>(grid.points()));
    track.present.assign(grid.points(), 0);
    FactorCache noise(1.0 / grid.step);
    for (std::size_t k = 0; k < grid.points(); ++k) {
      const double t = grid.at(k);
      if (!sensor.available_at(t, tol)) continue;
      const auto col = static_cast<Eigen::Index>(k);
      const Mat& s = noise.get(sensor.R.at(t));
      track.values.col(col) = sensor.H.at(t) * truth.states.col(col) + s * standard_normal(s.cols(), rng);
      track.present[k] = 1;
    }
    out.tracks.push_back(std::move(track));
  }
  return out;
}

MonteCarloPlan::MonteCarloPlan(const Scenario& scenario) : scenario_(&scenario) {
  const UnconditionalMoments moments(scenario);
  const auto indices = scenario.output_indices();
  const std::size_t N = scenario.sensor_count();
  const double h = scenario.config().step;
  outputs_.resize(indices.size());

#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t oi = 0; oi < static_cast<std::ptrdiff_t>(indices.size()); ++oi) {
    OutputPlan& o = outputs_[static_cast<std::size_t>(oi)];
    o.index = indices[static_cast<std::size_t>(oi)];
    o.t = scenario.grid().at(o.index);
    o.target = scenario.truth_grid().at(o.index + scenario.lead_steps());
    o.warmup = horizon_window(scenario, o.index).warmup;
    o.active = scheduled_sensors(scenario, o.index);
    o.central_available = o.active.size() == N;
    o.transition = transition_matrix(scenario.system(), o.t, o.target, h);

    std::vector<RiccatiPass> passes;
    for (int i : o.active) {
      const int one[] = {i};
      passes.push_back(solve_riccati(scenario, moments, one, o.index));
      const RiccatiPass& p = passes.back();
      o.local_maps.push_back(compile_affine(scenario, p));
      o.local_filters.push_back({o.t, Vec::Zero(scenario.n()), p.cov.back()});
    }
    if (!passes.empty()) {
      o.cross = local_cross_covariances(scenario, passes);
      for (std::size_t a = 0; a < passes.size(); ++a) {
        o.local_predictors.push_back({o.target, Vec::Zero(scenario.n()), o.cross.block(a, a)});
      }
      o.fused = fuse(o.local_predictors, o.cross);
    }
    if (o.central_available) {
      const RiccatiPass p = solve_riccati(scenario, moments, o.active, o.index);
      o.central_map = compile_affine(scenario, p);
      o.central_filter = EstimatorState{o.t, Vec::Zero(scenario.n()), p.cov.back()};
      o.central_predictor = propagate_prediction(scenario.system(), o.t, o.target, h, *o.central_filter);
    }
  }
}

std::size_t MonteCarloPlan::fallback_count() const {
  std::size_t c = 0;
  for (const auto& o : outputs_) c += o.fused.fallback ? 1 : 0;
  return c;
}

std::vector<std::string> estimator_names(const Scenario& scenario) {
  std::vector<std::string> names{"CRHP", "DRHP"};
  for (std::size_t i = 0; i < scenario.sensor_count(); ++i) names.push_back("LRHP" + std::to_string(i + 1));
  return names;
}

RunEstimates evaluate_run(const MonteCarloPlan& plan, const TruthTrajectory& truth, const MeasurementSet& meas) {
  const Scenario& sc = plan.scenario();
  const auto& outs = plan.outputs();
  const Eigen::Index n = sc.n();
  const auto cols = static_cast<Eigen::Index>(outs.size());
  const std::size_t slots = kFirstLocal + sc.sensor_count();
  RunEstimates est;
  est.truth = Mat(n, cols);
  est.predicted.assign(slots, Mat::Constant(n, cols, std::numeric_limits<double>::quiet_NaN()));

  for (std::size_t o = 0; o < outs.size(); ++o) {
    const OutputPlan& op = outs[o];
    const auto col = static_cast<Eigen::Index>(o);
    est.truth.col(col) = truth.states.col(static_cast<Eigen::Index>(op.index + sc.lead_steps()));
    if (!op.active.empty()) {
      Vec fused = Vec::Zero(n);
      for (std::size_t a = 0; a < op.active.size(); ++a) {
        const Vec pred = op.transition * op.local_maps[a].apply(meas);
        est.predicted[kFirstLocal + static_cast<std::size_t>(op.active[a])].col(col) = pred;
        fused.noalias() += op.fused.weights[a] * pred;
      }
      est.predicted[kDistributed].col(col) = fused;
    }
    if (op.central_map) est.predicted[kCentral].col(col) = op.transition * op.central_map->apply(meas);
  }
  return est;
}

MseReport run_monte_carlo(const Scenario& scenario, const MonteCarloOptions& options) {
  const MonteCarloPlan plan(scenario);
  if (const std::size_t fb = plan.fallback_count(); fb > 0) {
    log_warning("equal fusion weights used at " + std::to_string(fb) + " output instants");
  }
  const std::size_t runs = static_cast<std::size_t>(scenario.config().mc_runs);
  const std::size_t slots = kFirstLocal + scenario.sensor_count();
  const std::size_t blocks = (runs + kRunsPerBlock - 1) / kRunsPerBlock;
  const ErrorSums zero(slots, scenario.n(), plan.outputs().size());
  std::vector<ErrorSums> partial(blocks, zero);
  RunEstimates first;
  const TimeGrid truth_grid = scenario.truth_grid();
  const std::uint64_t seed = scenario.config().rng_seed;

#pragma omp parallel for schedule(dynamic) num_threads(worker_count(options))
  for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(blocks); ++b) {
    ErrorSums& acc = partial[static_cast<std::size_t>(b)];
    const std::size_t begin = static_cast<std::size_t>(b) * kRunsPerBlock;
    const std::size_t end = std::min(runs, begin + kRunsPerBlock);
    for (std::size_t r = begin; r < end; ++r) {
      Rng rng(run_seed(seed, r));
      const TruthTrajectory truth = simulate_truth(scenario.system(), truth_grid, rng);
      const MeasurementSet meas = generate_measurements(truth, scenario.suite(), rng);
      RunEstimates est = evaluate_run(plan, truth, meas);
      acc.add(plan, est);
      if (r == 0) first = std::move(est);
    }
  }

  ErrorSums total = zero;
  for (const auto& p : partial) total.merge(p);
  return make_report(plan, total, runs, std::move(first));
}

MseReport run_monte_carlo_reference(const Scenario& scenario, std::size_t runs) {
  const MonteCarloPlan plan(scenario);  // theoretical values and availability only
  const UnconditionalMoments moments(scenario);
  const std::size_t slots = kFirstLocal + scenario.sensor_count();
  const Eigen::Index n = scenario.n();
  ErrorSums total(slots, n, plan.outputs().size());
  RunEstimates first;
  std::vector<int> all(scenario.sensor_count());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);

  for (std::size_t r = 0; r < runs; ++r) {
    Rng rng(run_seed(scenario.config().rng_seed, r));
    const TruthTrajectory truth = simulate_truth(scenario.system(), scenario.truth_grid(), rng);
    const MeasurementSet meas = generate_measurements(truth, scenario.suite(), rng);
    RunEstimates est;
    const auto cols = static_cast<Eigen::Index>(plan.outputs().size());
    est.truth = Mat(n, cols);
    est.predicted.assign(slots, Mat::Constant(n, cols, std::numeric_limits<double>::quiet_NaN()));
    for (std::size_t o = 0; o < plan.outputs().size(); ++o) {
      const auto col = static_cast<Eigen::Index>(o);
      const std::size_t k = plan.outputs()[o].index;
      const double t = scenario.grid().at(k);
      est.truth.col(col) = truth.states.col(static_cast<Eigen::Index>(k + scenario.lead_steps()));

      std::vector<EstimatorState> locals;
      std::vector<RiccatiPass> passes;
      for (int i : all) {
        try {
          locals.push_back(run_local_rhp(scenario, moments, i, t, meas));
        } catch (const EstimatorUnavailable&) {
          continue;
        }
        const int one[] = {i};
        passes.push_back(solve_riccati(scenario, moments, one, k));
        est.predicted[kFirstLocal + static_cast<std::size_t>(i)].col(col) = locals.back().mean;
      }
      if (!locals.empty()) {
        const CrossCovState cross = local_cross_covariances(scenario, passes);
        est.predicted[kDistributed].col(col) = fuse(locals, cross).mean;
      }
      try {
        est.predicted[kCentral].col(col) = run_crhp(scenario, moments, t, meas, all).mean;
      } catch (const EstimatorUnavailable&) {
      }
    }
    total.add(plan, est);
    if (r == 0) first = std::move(est);
  }
  return make_report(plan, total, runs, std::move(first));
}

OracleReport cross_cov_oracle(const Scenario& scenario, int i, int j, std::size_t runs, double t,
                              const MonteCarloOptions& options) {
  const int N = static_cast<int>(scenario.sensor_count());
  if (i == j) throw std::invalid_argument("cross_cov_oracle: sensors must differ");
  if (i < 0 || j < 0 || i >= N || j >= N) throw std::invalid_argument("cross_cov_oracle: sensor index out of range");
  if (runs < 2) throw std::invalid_argument("cross_cov_oracle: need at least two runs");
  if (runs < 1000) {
    log_warning("oracle with " + std::to_string(runs) + " runs has low statistical power");
  }
  const std::size_t k = grid_index(scenario, t);
  const HorizonWindow w = horizon_window(scenario, k);
  for (int s : {i, j}) {
    if (!scheduled_over(scenario, s, w)) throw EstimatorUnavailable(s, t);
  }
  const double h = scenario.config().step;
  const UnconditionalMoments moments(scenario);
  const int one_i[] = {i};
  const int one_j[] = {j};
  const RiccatiPass pi = solve_riccati(scenario, moments, one_i, k);
  const RiccatiPass pj = solve_riccati(scenario, moments, one_j, k);
  const AffineFilterMap mi = compile_affine(scenario, pi);
  const AffineFilterMap mj = compile_affine(scenario, pj);

  OracleReport rep;
  rep.sensor_i = i;
  rep.sensor_j = j;
  rep.runs = runs;
  rep.t = scenario.grid().at(k);
  rep.target = scenario.truth_grid().at(k + scenario.lead_steps());
  const Mat phi = transition_matrix(scenario.system(), rep.t, rep.target, h);
  rep.integrated_filter = cross_cov_horizon(scenario, pi.start.cov, pi.gains, pj.gains);
  rep.predicted_homogeneous = propagate_cross_prediction(scenario.system(), rep.t, rep.target, h,
                                                         rep.integrated_filter, CrossPrediction::kHomogeneous);
  rep.predicted_shared_noise = propagate_cross_prediction(scenario.system(), rep.t, rep.target, h,
                                                          rep.integrated_filter, CrossPrediction::kSharedProcessNoise);
  rep.local_cov_i = pi.cov.back();

  const Eigen::Index n = scenario.n();
  const TimeGrid grid{scenario.grid().t0, h, k + scenario.lead_steps()};
  struct Sums {
    Mat f, f2, p, p2;
  };
  const Sums zero{Mat::Zero(n, n), Mat::Zero(n, n), Mat::Zero(n, n), Mat::Zero(n, n)};
  const std::size_t blocks = (runs + kRunsPerBlock - 1) / kRunsPerBlock;
  std::vector<Sums> partial(blocks, zero);

#pragma omp parallel for schedule(dynamic) num_threads(worker_count(options))
  for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(blocks); ++b) {
    Sums& acc = partial[static_cast<std::size_t>(b)];
    const std::size_t begin = static_cast<std::size_t>(b) * kRunsPerBlock;
    const std::size_t end = std::min(runs, begin + kRunsPerBlock);
    for (std::size_t r = begin; r < end; ++r) {
      Rng rng(run_seed(scenario.config().rng_seed, r));
      const TruthTrajectory truth = simulate_truth(scenario.system(), grid, rng);
      const MeasurementSet meas = generate_measurements(truth, scenario.suite(), rng);
      const Vec xi = mi.apply(meas);
      const Vec xj = mj.apply(meas);
      const Vec x = truth.states.col(static_cast<Eigen::Index>(k));
      const Vec xp = truth.states.col(static_cast<Eigen::Index>(k + scenario.lead_steps()));
      const Mat ef = (x - xi) * (x - xj).transpose();
      const Mat ep = (xp - phi * xi) * (xp - phi * xj).transpose();
      acc.f += ef;
      acc.f2 += ef.cwiseProduct(ef);
      acc.p += ep;
      acc.p2 += ep.cwiseProduct(ep);
    }
  }
  Sums total = zero;
  for (const auto& s : partial) {
    total.f += s.f;
    total.f2 += s.f2;
    total.p += s.p;
    total.p2 += s.p2;
  }
  const double rn = static_cast<double>(runs);
  auto finish = [&](const Mat& sum, const Mat& sum_sq, Mat& mean, Mat& se) {
    mean = sum / rn;
    const Mat var = ((sum_sq / rn) - mean.cwiseProduct(mean)).cwiseMax(0.0) * (rn / (rn - 1.0));
    se = (var / rn).cwiseSqrt();
  };
  finish(total.f, total.f2, rep.empirical_filter, rep.stderr_filter);
  finish(total.p, total.p2, rep.empirical_predictor, rep.stderr_predictor);
  return rep;
}

}  // namespace rhf

#pragma once

#include "rhfusion/estimators.hpp"
#include "rhfusion/model.hpp"
#include "rhfusion/numerics.hpp"

#include <span>
#include <stdexcept>
#include <vector>

namespace rhf {

/// Error covariances of N local estimators at one instant. block(i, i) is the
/// local covariance, block(i, j) the cross-covariance E[e_i e_j'].
struct CrossCovState {
  double t = 0.0;
  std::vector<int> sensors;
  std::vector<Mat> blocks;  // row-major N x N

  CrossCovState() = default;
  CrossCovState(double time, std::vector<int> active, Eigen::Index n);

  std::size_t size() const { return sensors.size(); }
  Eigen::Index dim() const { return blocks.empty() ? 0 : blocks.front().rows(); }
  Mat& block(std::size_t i, std::size_t j) { return blocks[i * size() + j]; }
  const Mat& block(std::size_t i, std::size_t j) const { return blocks[i * size() + j]; }
  /// The full nN x nN block matrix.
  Mat assembled() const;
  /// Keeps only the listed positions (indices into `sensors`).
  CrossCovState restricted(std::span<const std::size_t> keep) const;
};

struct FusionResult {
  double t = 0.0;
  Vec mean;
  Mat cov;
  std::vector<Mat> weights;
  std::vector<int> active;
  bool fallback = false;     // equal weights were used
  double condition = 1.0;    // condition estimate of the weight system
};

/// The weight system was singular or too ill-conditioned to trust.
class DegenerateFusion : public std::runtime_error {
 public:
  explicit DegenerateFusion(double condition);
  double condition() const { return condition_; }

 private:
  double condition_;
};

inline constexpr double kMaxFusionCondition = 1e12;

/// Integrates dP/dt = (F - L_i H_i) P + P (F - L_j H_j)' + G Q G' over the
/// horizon shared by the two gain trajectories, with gains held over each
/// step. For i != j this is the error cross-covariance of the two local
/// filters. It is NOT the local covariance when both arguments are the same
/// trajectory: the Riccati equation has one P H' R^-1 H P term, this form two.
Mat integrate_cross_covariance(const Scenario& scenario, const Mat& initial, const GainTrajectory& gains_i,
                               const GainTrajectory& gains_j);

/// Cross-covariance of two distinct local filters at the end of their shared
/// horizon, starting from the unconditional covariance at the horizon start.
Mat cross_cov_horizon(const Scenario& scenario, const Mat& initial, const GainTrajectory& gains_i,
                      const GainTrajectory& gains_j);

/// Carries a filter cross-covariance at t to t + lead, using the scenario's
/// configured CrossPrediction rule.
Mat cross_cov_predict(const Scenario& scenario, double t, const Mat& cross);

/// Local predictor error covariances and cross-covariances at t + lead for the
/// sensors of `passes` (one single-sensor pass each, same window).
CrossCovState local_cross_covariances(const Scenario& scenario, std::span<const RiccatiPass> passes);

/// Minimum mean-square fusion weights: solves
///   sum_i W_i (P_ij - P_iN) = 0, j < N,   sum_i W_i = I
/// as one (nN x nN) linear system. Throws DegenerateFusion when the system's
/// condition number exceeds kMaxFusionCondition.
std::vector<Mat> fusion_weights(const CrossCovState& cross, double* condition = nullptr);

/// Fused estimate sum_i W_i x_i with covariance sum_ij W_i P_ij W_j'.
/// Degenerate weight systems fall back to equal weights with a warning.
FusionResult fuse(std::span<const EstimatorState> locals, const CrossCovState& cross);

}  // namespace rhf

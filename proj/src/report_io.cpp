#include "rhfusion/report_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <system_error>

namespace rhf {

namespace {

class Row {
 public:
  explicit Row(std::ostream& out) : out_(out) {}
  ~Row() { out_ << '\n'; }

  Row& operator<<(const std::string& s) {
    sep();
    out_ << s;
    return *this;
  }
  Row& operator<<(double v) {
    sep();
    out_ << format_double(v);
    return *this;
  }
  Row& operator<<(int v) {
    sep();
    out_ << v;
    return *this;
  }
  Row& operator<<(std::size_t v) {
    sep();
    out_ << v;
    return *this;
  }

 private:
  void sep() {
    if (!first_) out_ << ',';
    first_ = false;
  }
  std::ostream& out_;
  bool first_ = true;
};

std::string component(const std::string& prefix, Eigen::Index i) { return prefix + std::to_string(i + 1); }

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  if (res.ec != std::errc()) throw std::runtime_error("format_double: conversion failed");
  return std::string(buf, res.ptr);
}

void write_estimates_csv(std::ostream& out, const Scenario& scenario, const MseReport& report) {
  const Eigen::Index n = scenario.n();
  {
    Row h(out);
    h << std::string("t") << std::string("t_target") << std::string("warmup");
    for (Eigen::Index c = 0; c < n; ++c) h << component("truth_x", c);
    for (const auto& name : report.estimators) {
      h << name + "_available";
      for (Eigen::Index c = 0; c < n; ++c) h << component(name + "_x", c);
    }
  }
  const RunEstimates& run = report.first_run;
  for (std::size_t o = 0; o < report.times.size(); ++o) {
    const auto col = static_cast<Eigen::Index>(o);
    Row r(out);
    r << report.times[o] << report.targets[o] << static_cast<int>(report.warmup[o]);
    for (Eigen::Index c = 0; c < n; ++c) r << run.truth(c, col);
    for (std::size_t s = 0; s < report.estimators.size(); ++s) {
      r << static_cast<int>(report.available[s][o]);
      for (Eigen::Index c = 0; c < n; ++c) r << run.predicted[s](c, col);
    }
  }
}

void write_covariance_csv(std::ostream& out, const Scenario& scenario, const MseReport& report) {
  const Eigen::Index n = scenario.n();
  const std::size_t N = scenario.sensor_count();
  {
    Row h(out);
    h << std::string("t") << std::string("t_target") << std::string("warmup") << std::string("active_count");
    for (const auto& name : report.estimators) {
      for (Eigen::Index c = 0; c < n; ++c) h << name + "_P" + std::to_string(c + 1) + std::to_string(c + 1);
      h << name + "_trace";
    }
    for (std::size_t i = 0; i < N; ++i) {
      for (Eigen::Index a = 0; a < n; ++a) {
        for (Eigen::Index b = 0; b < n; ++b) {
          h << "W" + std::to_string(i + 1) + "_" + std::to_string(a + 1) + std::to_string(b + 1);
        }
      }
    }
  }
  for (std::size_t o = 0; o < report.times.size(); ++o) {
    Row r(out);
    r << report.times[o] << report.targets[o] << static_cast<int>(report.warmup[o]) << report.active[o].size();
    for (std::size_t s = 0; s < report.estimators.size(); ++s) {
      for (Eigen::Index c = 0; c < n; ++c) r << report.theoretical[s][o](c);
      r << report.theoretical_trace[s][o];
    }
    for (std::size_t i = 0; i < N; ++i) {
      const Mat* w = nullptr;
      for (std::size_t a = 0; a < report.active[o].size(); ++a) {
        if (static_cast<std::size_t>(report.active[o][a]) == i) w = &report.weights[o][a];
      }
      for (Eigen::Index a = 0; a < n; ++a) {
        for (Eigen::Index b = 0; b < n; ++b) r << (w ? (*w)(a, b) : std::nan(""));
      }
    }
  }
}

void write_mse_csv(std::ostream& out, const Scenario& scenario, const MseReport& report) {
  const Eigen::Index n = scenario.n();
  {
    Row h(out);
    h << std::string("t") << std::string("t_target") << std::string("warmup") << std::string("runs");
    for (const auto& name : report.estimators) {
      h << name + "_available";
      for (Eigen::Index c = 0; c < n; ++c) h << component(name + "_mse_x", c);
      for (Eigen::Index c = 0; c < n; ++c) h << component(name + "_theory_x", c);
      for (Eigen::Index c = 0; c < n; ++c) h << component(name + "_bias_x", c);
    }
  }
  for (std::size_t o = 0; o < report.times.size(); ++o) {
    Row r(out);
    r << report.times[o] << report.targets[o] << static_cast<int>(report.warmup[o]) << report.runs;
    for (std::size_t s = 0; s < report.estimators.size(); ++s) {
      r << static_cast<int>(report.available[s][o]);
      for (Eigen::Index c = 0; c < n; ++c) r << report.mse[s][o](c);
      for (Eigen::Index c = 0; c < n; ++c) r << report.theoretical[s][o](c);
      for (Eigen::Index c = 0; c < n; ++c) r << report.mean_error[s][o](c);
    }
  }
}

void write_oracle_csv(std::ostream& out, const OracleReport& report, CrossPrediction configured) {
  {
    Row h(out);
    h << std::string("quantity") << std::string("time") << std::string("sensor_i") << std::string("sensor_j")
      << std::string("row") << std::string("col") << std::string("empirical") << std::string("stderr")
      << std::string("integrated") << std::string("z") << std::string("pass");
  }
  auto emit = [&](const std::string& quantity, double time, const Mat& emp, const Mat& se, const Mat& integ) {
    for (Eigen::Index a = 0; a < emp.rows(); ++a) {
      for (Eigen::Index b = 0; b < emp.cols(); ++b) {
        const double diff = std::abs(emp(a, b) - integ(a, b));
        const double z = se(a, b) > 0.0 ? diff / se(a, b) : (diff == 0.0 ? 0.0 : INFINITY);
        Row r(out);
        r << quantity << time << (report.sensor_i + 1) << (report.sensor_j + 1) << static_cast<int>(a + 1)
          << static_cast<int>(b + 1) << emp(a, b) << se(a, b) << integ(a, b) << z << (z <= 3.0 ? 1 : 0);
      }
    }
  };
  emit("filter", report.t, report.empirical_filter, report.stderr_filter, report.integrated_filter);
  const std::string tag_shared = configured == CrossPrediction::kSharedProcessNoise ? "predictor" : "predictor_shared_noise";
  const std::string tag_homog = configured == CrossPrediction::kHomogeneous ? "predictor" : "predictor_homogeneous";
  emit(tag_shared, report.target, report.empirical_predictor, report.stderr_predictor, report.predicted_shared_noise);
  emit(tag_homog, report.target, report.empirical_predictor, report.stderr_predictor, report.predicted_homogeneous);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    f << content;
    if (!f) throw std::runtime_error("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace rhf

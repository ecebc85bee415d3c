#pragma once

#include "rhfusion/simulation.hpp"

#include <filesystem>
#include <ostream>
#include <string>

namespace rhf {

/// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

// Column layouts are documented in the README; every file starts with a header row.
void write_estimates_csv(std::ostream& out, const Scenario& scenario, const MseReport& report);
void write_covariance_csv(std::ostream& out, const Scenario& scenario, const MseReport& report);
void write_mse_csv(std::ostream& out, const Scenario& scenario, const MseReport& report);
void write_oracle_csv(std::ostream& out, const OracleReport& report, CrossPrediction configured);

/// Writes `content` to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace rhf

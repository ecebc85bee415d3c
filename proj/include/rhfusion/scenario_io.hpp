#pragma once

#include "rhfusion/model.hpp"

#include <json.hpp>

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rhf {

/// Unreadable file or malformed document.
class ScenarioFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A scenario document before validation.
struct ScenarioParts {
  LtvSystem system;
  SensorSuite suite;
  ScenarioConfig config;
};

nlohmann::json read_scenario_document(const std::filesystem::path& path);

/// Applies one `key=value` override. The key is a dotted path into the
/// document (numeric segments index arrays); a bare key that is not a
/// top-level member refers to `config.<key>`. The value is parsed as JSON,
/// falling back to a plain string.
void apply_override(nlohmann::json& doc, std::string_view assignment);

ScenarioParts parse_scenario(const nlohmann::json& doc);

/// Reads, overrides and parses; validation is left to the caller.
ScenarioParts load_scenario(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

std::string to_string(CrossPrediction mode);

}  // namespace rhf

#include "rhfusion/scenario_io.hpp"

#include <algorithm>
#include <array>
#include <fstream>

namespace rhf {

using nlohmann::json;

namespace {

constexpr std::array kConfigKeys{"t0",      "t_end",    "T",          "Delta", "h", "eval_stride",
                                 "mc_runs", "rng_seed", "cross_prediction"};

Mat parse_matrix(const json& j, const std::string& what) {
  if (j.is_number()) return Mat::Constant(1, 1, j.get<double>());
  if (!j.is_array() || j.empty()) throw ScenarioFormatError(what + ": expected a matrix (array of rows)");
  // A flat array of numbers is a single row.
  if (j.front().is_number()) {
    Mat m(1, static_cast<Eigen::Index>(j.size()));
    for (std::size_t c = 0; c < j.size(); ++c) m(0, static_cast<Eigen::Index>(c)) = j[c].get<double>();
    return m;
  }
  const std::size_t rows = j.size();
  const std::size_t cols = j.front().size();
  Mat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols) throw ScenarioFormatError(what + ": ragged matrix rows");
    for (std::size_t c = 0; c < cols; ++c) {
      if (!j[r][c].is_number()) throw ScenarioFormatError(what + ": non-numeric entry");
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
    }
  }
  return m;
}

Vec parse_vector(const json& j, const std::string& what) {
  if (j.is_number()) return Vec::Constant(1, j.get<double>());
  if (!j.is_array()) throw ScenarioFormatError(what + ": expected an array of numbers");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ScenarioFormatError(what + ": non-numeric entry");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

MatrixSchedule parse_schedule(const json& j, const std::string& what) {
  if (j.is_object()) {
    if (!j.contains("breakpoints") || !j["breakpoints"].is_array() || j["breakpoints"].empty()) {
      throw ScenarioFormatError(what + ": time-varying entry needs a non-empty 'breakpoints' array");
    }
    std::vector<MatrixSchedule::Breakpoint> bps;
    for (const auto& bp : j["breakpoints"]) {
      if (!bp.contains("t") || !bp.contains("value")) throw ScenarioFormatError(what + ": breakpoint needs 't' and 'value'");
      bps.push_back({bp["t"].get<double>(), parse_matrix(bp["value"], what)});
    }
    return MatrixSchedule(std::move(bps));
  }
  return MatrixSchedule(parse_matrix(j, what));
}

Interval parse_interval(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw ScenarioFormatError(what + ": interval must be [begin, end]");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

const json& need(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) throw ScenarioFormatError(where + ": missing '" + key + "'");
  return obj[key];
}

template <class T>
T number(const json& obj, const char* key, const std::string& where) {
  const json& v = need(obj, key, where);
  if (!v.is_number()) throw ScenarioFormatError(where + "." + key + ": expected a number");
  return v.get<T>();
}

}  // namespace

std::string to_string(CrossPrediction mode) {
  return mode == CrossPrediction::kHomogeneous ? "homogeneous" : "shared_process_noise";
}

json read_scenario_document(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioFormatError("cannot open scenario file '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ScenarioFormatError("cannot parse scenario file '" + path.string() + "': " + e.what());
  }
}

void apply_override(json& doc, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw std::invalid_argument("override '" + std::string(assignment) + "' is not of the form key=value");
  }
  std::string key(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));
  if (key.find('.') == std::string::npos && !doc.contains(key)) key = "config." + key;

  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    parts.push_back(key.substr(start, dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }

  json* node = &doc;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const std::string& seg = parts[p];
    const bool last = p + 1 == parts.size();
    if (node->is_array()) {
      std::size_t idx = 0;
      try {
        idx = std::stoul(seg);
      } catch (const std::exception&) {
        throw std::invalid_argument("invalid override key '" + key + "'");
      }
      if (idx >= node->size()) throw std::invalid_argument("invalid override key '" + key + "'");
      node = &(*node)[idx];
    } else if (node->is_object()) {
      if (!node->contains(seg)) {
        const bool known_config = last && p == 1 && parts[0] == "config" &&
                                  std::find(kConfigKeys.begin(), kConfigKeys.end(), seg) != kConfigKeys.end();
        if (!known_config) throw std::invalid_argument("invalid override key '" + key + "'");
      }
      node = &(*node)[seg];
    } else {
      throw std::invalid_argument("invalid override key '" + key + "'");
    }
  }
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  *node = std::move(value);
}

ScenarioParts parse_scenario(const json& doc) {
  ScenarioParts out;
  try {
    const json& sys = need(doc, "system", "scenario");
    out.system.F = parse_schedule(need(sys, "F", "system"), "system.F");
    out.system.G = parse_schedule(need(sys, "G", "system"), "system.G");
    out.system.Q = parse_schedule(need(sys, "Q", "system"), "system.Q");
    out.system.x0_mean = parse_vector(need(sys, "x0_mean", "system"), "system.x0_mean");
    out.system.P0 = parse_matrix(need(sys, "P0", "system"), "system.P0");
    if (sys.contains("perturbations")) {
      for (const auto& p : sys["perturbations"]) {
        out.system.delta_schedule.push_back(
            {parse_interval(need(p, "interval", "perturbation"), "perturbation.interval"),
             parse_matrix(need(p, "delta", "perturbation"), "perturbation.delta")});
      }
    }

    const json& sensors = need(doc, "sensors", "scenario");
    if (!sensors.is_array()) throw ScenarioFormatError("sensors: expected an array");
    for (std::size_t i = 0; i < sensors.size(); ++i) {
      const json& s = sensors[i];
      const std::string where = "sensors[" + std::to_string(i) + "]";
      SensorModel m;
      m.name = s.value("name", "");
      m.H = parse_schedule(need(s, "H", where), where + ".H");
      m.R = parse_schedule(need(s, "R", where), where + ".R");
      if (s.contains("availability")) {
        for (const auto& iv : s["availability"]) m.availability.push_back(parse_interval(iv, where + ".availability"));
      }
      out.suite.sensors.push_back(std::move(m));
    }

    const json& cfg = need(doc, "config", "scenario");
    out.config.t0 = number<double>(cfg, "t0", "config");
    out.config.t_end = number<double>(cfg, "t_end", "config");
    out.config.horizon = number<double>(cfg, "T", "config");
    out.config.lead = number<double>(cfg, "Delta", "config");
    out.config.step = number<double>(cfg, "h", "config");
    out.config.eval_stride = cfg.value("eval_stride", 1);
    out.config.mc_runs = cfg.value("mc_runs", 1);
    out.config.rng_seed = cfg.value("rng_seed", std::uint64_t{0});
    const std::string mode = cfg.value("cross_prediction", std::string("shared_process_noise"));
    if (mode == "shared_process_noise") {
      out.config.cross_prediction = CrossPrediction::kSharedProcessNoise;
    } else if (mode == "homogeneous") {
      out.config.cross_prediction = CrossPrediction::kHomogeneous;
    } else {
      throw ScenarioFormatError("config.cross_prediction: expected 'shared_process_noise' or 'homogeneous'");
    }
  } catch (const json::exception& e) {
    throw ScenarioFormatError(std::string("malformed scenario: ") + e.what());
  }
  return out;
}

ScenarioParts load_scenario(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  json doc = read_scenario_document(path);
  for (const auto& o : overrides) apply_override(doc, o);
  return parse_scenario(doc);
}

}  // namespace rhf

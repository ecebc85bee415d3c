#include "rhfusion/report_io.hpp"
#include "rhfusion/scenario_io.hpp"
#include "support/scenarios.hpp"

#include <doctest.h>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

using namespace rhf;
using nlohmann::json;

namespace {

std::filesystem::path temp_file(const std::string& name, const std::string& content) {
  const auto path = std::filesystem::temp_directory_path() / ("rhfusion_test_" + name);
  std::ofstream(path) << content;
  return path;
}

}  // namespace

TEST_CASE("the water-tank document parses") {
  const ScenarioParts p = load_scenario(fixtures::watertank_path());
  CHECK(p.system.n() == 3);
  CHECK(p.suite.size() == 4);
  CHECK(p.suite[0].name == "main");
  CHECK(p.suite[3].availability.size() == 1);
  CHECK(p.suite[3].availability[0].end == 1.5);
  CHECK(p.config.horizon == 0.8);
  CHECK(p.config.lead == 0.5);
  CHECK(p.config.eval_stride == 5);
  CHECK(p.config.rng_seed == 20090601u);
  CHECK(p.config.cross_prediction == CrossPrediction::kSharedProcessNoise);
  CHECK(p.system.delta_schedule.size() == 1);
}

TEST_CASE("overrides address dotted paths and bare config keys") {
  json doc = read_scenario_document(fixtures::watertank_path());
  apply_override(doc, "mc_runs=12");
  apply_override(doc, "config.T=0.5");
  apply_override(doc, "sensors.1.R=[[0.5]]");
  apply_override(doc, "cross_prediction=homogeneous");
  apply_override(doc, "description=changed");
  CHECK(doc["config"]["mc_runs"] == 12);
  CHECK(doc["config"]["T"] == 0.5);
  CHECK(doc["sensors"][1]["R"][0][0] == 0.5);
  CHECK(doc["config"]["cross_prediction"] == "homogeneous");
  CHECK(doc["description"] == "changed");
  const ScenarioParts p = parse_scenario(doc);
  CHECK(p.config.cross_prediction == CrossPrediction::kHomogeneous);
  CHECK(p.suite[1].R.at(0.0)(0, 0) == 0.5);
}

TEST_CASE("overrides of unknown keys are rejected") {
  json doc = read_scenario_document(fixtures::watertank_path());
  CHECK_THROWS_AS(apply_override(doc, "no_such_key=1"), std::invalid_argument);
  CHECK_THROWS_AS(apply_override(doc, "system.Z=1"), std::invalid_argument);
  CHECK_THROWS_AS(apply_override(doc, "sensors.9.R=1"), std::invalid_argument);
  CHECK_THROWS_AS(apply_override(doc, "sensors.x.R=1"), std::invalid_argument);
  CHECK_THROWS_AS(apply_override(doc, "mc_runs"), std::invalid_argument);
  CHECK_THROWS_AS(apply_override(doc, "=3"), std::invalid_argument);
}

TEST_CASE("a known config key missing from the document can be added") {
  json doc = read_scenario_document(fixtures::watertank_path());
  doc["config"].erase("eval_stride");
  apply_override(doc, "eval_stride=2");
  CHECK(parse_scenario(doc).config.eval_stride == 2);
}

TEST_CASE("time-varying matrices are read as breakpoint schedules") {
  json doc = read_scenario_document(fixtures::watertank_path());
  doc["sensors"][0]["R"] = json::parse(R"({"breakpoints": [{"t": 0.0, "value": [[1e-4]]}, {"t": 2.0, "value": [[4e-4]]}]})");
  const ScenarioParts p = parse_scenario(doc);
  CHECK(p.suite[0].R.at(1.99)(0, 0) == 1e-4);
  CHECK(p.suite[0].R.at(2.0)(0, 0) == 4e-4);
  CHECK(validate(p.system, p.suite, p.config).ok());

  doc["sensors"][0]["R"] = json::parse(R"({"breakpoints": []})");
  CHECK_THROWS_AS(parse_scenario(doc), ScenarioFormatError);
}

TEST_CASE("malformed documents raise ScenarioFormatError") {
  CHECK_THROWS_AS(read_scenario_document("/nonexistent/scenario.json"), ScenarioFormatError);
  CHECK_THROWS_AS(read_scenario_document(temp_file("bad.json", "{ \"system\": ")), ScenarioFormatError);

  const json good = read_scenario_document(fixtures::watertank_path());
  json doc = good;
  doc.erase("config");
  CHECK_THROWS_AS(parse_scenario(doc), ScenarioFormatError);
  doc = good;
  doc["system"]["F"] = json::parse("[[1, 2], [3]]");
  CHECK_THROWS_AS(parse_scenario(doc), ScenarioFormatError);
  doc = good;
  doc["system"]["P0"][0][0] = "x";
  CHECK_THROWS_AS(parse_scenario(doc), ScenarioFormatError);
  doc = good;
  doc["config"]["h"] = "0.01";
  CHECK_THROWS_AS(parse_scenario(doc), ScenarioFormatError);
  doc = good;
  doc["config"]["cross_prediction"] = "neither";
  CHECK_THROWS_AS(parse_scenario(doc), ScenarioFormatError);
  doc = good;
  doc["sensors"][0]["availability"] = json::parse("[[0.0]]");
  CHECK_THROWS_AS(parse_scenario(doc), ScenarioFormatError);
}

TEST_CASE("cross prediction names round-trip") {
  CHECK(to_string(CrossPrediction::kHomogeneous) == "homogeneous");
  CHECK(to_string(CrossPrediction::kSharedProcessNoise) == "shared_process_noise");
}

TEST_CASE("format_double writes the shortest text that reads back exactly") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  for (int k = 0; k < 1000; ++k) {
    const double v = u(rng) * std::pow(10.0, k % 20 - 10);
    const std::string s = format_double(v);
    double back = 0.0;
    std::from_chars(s.data(), s.data() + s.size(), back);
    CHECK(back == v);
  }
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(1.0) == "1");
  CHECK(format_double(std::numeric_limits<double>::quiet_NaN()) == "nan");
  CHECK(format_double(-std::numeric_limits<double>::infinity()) == "-inf");
}

TEST_CASE("write_file_atomic replaces the target") {
  const auto path = std::filesystem::temp_directory_path() / "rhfusion_test_atomic.txt";
  write_file_atomic(path, "first");
  write_file_atomic(path, "second");
  std::ifstream in(path);
  std::string s;
  in >> s;
  CHECK(s == "second");
  auto tmp = path;
  tmp += ".tmp";
  CHECK_FALSE(std::filesystem::exists(tmp));
  std::filesystem::remove(path);
}

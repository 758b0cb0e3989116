#include <catch2/catch_amalgamated.hpp>

#include <string>

#include "rsd/config.hpp"

using rsd::json;

namespace {

json sample_scenario() {
  return json::parse(R"({
    "schema_version": 1,
    "model": {"family": "hetero_normal_gamma", "alpha": 0.25, "beta": 0.25},
    "design": {"builtin": "balanced2"},
    "strategy": "fixed",
    "theta_true": [1.0, 0.0],
    "n": 36,
    "iterations": 50,
    "seed": 11,
    "contrast": [0.0, 1.0]
  })");
}

}  // namespace

TEST_CASE("scenario parsing") {
  const auto config = rsd::scenario_from_json(sample_scenario());
  CHECK(config.n() == 36);
  CHECK(config.design.d() == 2);
  CHECK(config.strategy == rsd::Strategy::Fixed);
  CHECK(config.contrast.has_value());
}

TEST_CASE("schema violations name the offending field") {
  auto j = sample_scenario();
  j["model"]["family"] = "generalized_normal";
  j["model"]["zeta"] = 1.0;
  j["model"]["tau"] = 1.0;
  try {
    rsd::scenario_from_json(j);
    FAIL("expected schema_error");
  } catch (const rsd::schema_error& e) {
    CHECK(e.path() == "model.zeta");
  }

  auto j2 = sample_scenario();
  j2.erase("seed");
  try {
    rsd::scenario_from_json(j2);
    FAIL("expected schema_error");
  } catch (const rsd::schema_error& e) {
    CHECK(e.path() == ".seed");
  }

  auto j3 = sample_scenario();
  j3["contrast"] = {1.0, 0.0, 0.0};
  CHECK_THROWS_AS(rsd::scenario_from_json(j3), rsd::schema_error);

  auto j4 = sample_scenario();
  j4["strategy"] = "rrsd";  // needs n1
  CHECK_THROWS_AS(rsd::scenario_from_json(j4), rsd::schema_error);
}

TEST_CASE("custom deterministic and random design blocks") {
  auto j = sample_scenario();
  j["design"] = json::parse(R"({
    "basis": "quadratic",
    "support": [[-1.0], [0.0], [1.0]],
    "weights": [0.5, 0.25, 0.25]
  })");
  j["theta_true"] = {1.0, 1.0, 1.0};
  j["contrast"] = {0.0, 0.0, 1.0};
  const auto config = rsd::scenario_from_json(j);
  CHECK(config.design.weights[0] == 0.5);
  CHECK_FALSE(config.random_design.has_value());

  j["design"] = json::parse(R"({
    "basis": "quadratic",
    "support": [[-1.0], [0.0], [1.0]],
    "atoms": [
      {"weights": [0.5, 0.25, 0.25], "probability": 0.5},
      {"weights": [0.25, 0.5, 0.25], "probability": 0.5}
    ]
  })");
  const auto config2 = rsd::scenario_from_json(j);
  REQUIRE(config2.random_design.has_value());
  CHECK(config2.random_design->atoms.size() == 2);

  j["design"] = json::parse(R"({"builtin": "g_optimal_quadratic", "variant": "randomized"})");
  j["n"] = 10;
  const auto config3 = rsd::scenario_from_json(j);
  REQUIRE(config3.random_design.has_value());
  CHECK(config3.random_design->atoms.size() == 3);

  j["n"] = 11;  // remainder two is rejected by the builtin
  CHECK_THROWS_AS(rsd::scenario_from_json(j), rsd::schema_error);
}

TEST_CASE("model blocks round-trip") {
  for (const char* text :
       {R"({"family":"cauchy","tau":2.0})",
        R"({"family":"generalized_normal","zeta":10.0,"tau":1.0})",
        R"({"family":"hetero_normal_gamma","alpha":0.25,"beta":0.125})"}) {
    const json j = json::parse(text);
    const auto model = rsd::model_from_json(j, "model");
    CHECK(rsd::model_to_json(model) == j);
  }
}

TEST_CASE("experiment state round-trips and detects tampering") {
  const auto built = rsd::builtin_design(rsd::BuiltinDesignName::Balanced2, 24);
  const auto nig = rsd::ErrorModel::hetero_normal_gamma(0.25, 0.25);
  rsd::Stream stream(321, 0);
  auto state = rsd::initialize(built.deterministic, built.basis, nig, 4, rsd::Mode::RRSD, stream);
  rsd::record_run(state, *state.pending, std::vector<double>{1.0, 1.2, 0.9, 1.1}, stream,
                  std::vector<double>{0.8, 1.1, 1.8, 2.2});
  rsd::next_plan(state, stream);
  const rsd::AdviseState adv(state, stream);

  const json serialized = rsd::advise_state_to_json(adv);
  auto restored = rsd::advise_state_from_json(serialized);
  CHECK(restored.state.u_current.isApprox(state.u_current, 1e-14));
  REQUIRE(restored.state.pending.has_value());
  CHECK(restored.state.pending->size == state.pending->size);
  CHECK(restored.state.pending->allocations == state.pending->allocations);
  CHECK(restored.stream.drawn() == stream.drawn());
  // serialization is stable under a round trip
  CHECK(rsd::advise_state_to_json(restored) == serialized);

  json tampered = serialized;
  tampered["remaining"] = 3;
  CHECK_THROWS_AS(rsd::advise_state_from_json(tampered), rsd::schema_error);
}

TEST_CASE("emitted reports parse under the documented schema") {
  auto config = rsd::scenario_from_json(sample_scenario());
  config.iterations = 30;
  const auto report = rsd::run_scenario(config);
  rsd::ReportExtras extras;
  const json out = rsd::report_to_json(report, sample_scenario(), extras);
  const json round = json::parse(out.dump());
  CHECK(round.at("schema_version") == 1);
  CHECK(round.at("kind") == "simulation_report");
  for (const char* key : {"crlb", "mean_hinv", "se_mean_hinv", "var_mle", "se_var_mle"}) {
    const auto& m = round.at(key);
    REQUIRE(m.is_array());
    REQUIRE(m.size() == 2);
    CHECK(m[0].size() == 2);
  }
  CHECK(round.at("iterations_effective").get<int>() == 30);
  CHECK(round.at("lb_eff").is_number());
  CHECK(round.at("contrast").size() == 2);
}

TEST_CASE("csv tables are deterministic with LF endings") {
  std::vector<rsd::CsvRow> rows{{36, "fixed", "lb_eff", 0.5555555, 0.01},
                                {36, "rrsd", "lb_eff", 0.71, 0.011}};
  const std::string a = rsd::csv_table(rows);
  const std::string b = rsd::csv_table(rows);
  CHECK(a == b);
  CHECK(a.rfind("n,strategy,metric,value,mc_se\n", 0) == 0);
  CHECK(a.find('\r') == std::string::npos);
  CHECK(a.back() == '\n');
}

#include <doctest.h>

#include <algorithm>
#include <string>

#include "stfuse/config.hpp"

using namespace stfuse;

namespace {

bool mentions(const std::vector<std::string>& errs, const std::string& field) {
  return std::any_of(errs.begin(), errs.end(),
                     [&](const std::string& e) { return e.rfind(field + ":", 0) == 0; });
}

std::vector<std::string> load_errors(const std::string& yaml) {
  try {
    load_config_string(yaml);
  } catch (const ConfigError& e) {
    return e.errors();
  }
  return {};
}

}  // namespace

TEST_CASE("default config is valid") {
  CHECK(validate(RunConfig{}).empty());
  CHECK(validate(load_config_string("{}")).empty());
}

TEST_CASE("unknown keys are rejected with their path") {
  CHECK(mentions(load_errors("bogus: 1\n"), "bogus"));
  CHECK(mentions(load_errors("sync:\n  kapa: 3\n"), "sync.kapa"));
}

TEST_CASE("wrong types are reported") {
  CHECK(mentions(load_errors("seed: many\n"), "seed"));
  CHECK(mentions(load_errors("mode: sideways\n"), "mode"));
}

TEST_CASE("range errors name every offending field") {
  RunConfig c;
  c.channel.bandwidth_hz = -1;
  c.sync.kappa = 0;
  const auto errs = validate(c);
  CHECK(errs.size() == 2);
  CHECK(mentions(errs, "channel.bandwidth_hz"));
  CHECK(mentions(errs, "sync.kappa"));

  const auto loaded = validate(load_config_string("channel:\n  bandwidth_hz: -5\nsync:\n  kappa: -1\n"));
  CHECK(mentions(loaded, "channel.bandwidth_hz"));
  CHECK(mentions(loaded, "sync.kappa"));
}

TEST_CASE("grid presets and overrides") {
  auto c = load_config_string("grid:\n  preset: paper\n");
  CHECK(c.grid.rows == 256);
  CHECK(c.grid.channels == 13);
  CHECK(c.grid.cell_m == doctest::Approx(0.4));
  c = load_config_string("grid:\n  preset: paper\n  cell_m: 0.8\n");
  CHECK(c.grid.rows == 256);
  CHECK(c.grid.cell_m == doctest::Approx(0.8));
}

TEST_CASE("modes accept a list or a single value") {
  auto c = load_config_string("modes: [full, no_clock, no_delay]\n");
  CHECK(c.modes.size() == 3);
  c = load_config_string("mode: no_clock\n");
  REQUIRE(c.modes.size() == 1);
  CHECK(c.modes[0] == Mode::NoClock);
  CHECK(parse_mode(to_string(Mode::NoDelay)) == Mode::NoDelay);
  CHECK_THROWS_AS(parse_mode("fast"), std::invalid_argument);
}

TEST_CASE("effective config round-trips through yaml") {
  RunConfig c;
  c.seed = 1234;
  c.episodes = 7;
  c.modes = {Mode::NoDelay, Mode::Full};
  c.sync.kappa = 1.75;
  c.sync.prior_var_varpi = 3.3e-11;
  c.grid = GridConfig::paper();
  c.pipeline.offset_frames = 5;
  c.clock.overrides.push_back({3, 1.5, -2.0, std::nullopt, 0.1});
  const auto back = load_config_string(to_yaml(c));
  CHECK(to_yaml(back) == to_yaml(c));
  CHECK(back.seed == 1234);
  CHECK(back.sync.prior_var_varpi == c.sync.prior_var_varpi);
  REQUIRE(back.clock.overrides.size() == 1);
  CHECK(*back.clock.overrides[0].skew_ppm == -2.0);
  CHECK_FALSE(back.clock.overrides[0].jitter_phi.has_value());
}

TEST_CASE("derived settings") {
  RunConfig c;
  CHECK(c.tau_c() == doctest::Approx(2 * std::sqrt(2.0) * c.grid.cell_m));
  c.pipeline.tau_c_m = 3.0;
  CHECK(c.tau_c() == 3.0);
  const auto tc = c.tracker(2e-4);
  CHECK(tc.jitter_sigma == 2e-4);
  CHECK(tc.delay_asymmetry_var == doctest::Approx(std::pow(0.05e-3, 2) / 6));
  CHECK(tc.rule == UpdateRule::Robust);
}

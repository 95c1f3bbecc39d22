#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stfuse/config.hpp"
#include "stfuse/report.hpp"
#include "stfuse/scenario.hpp"

using namespace stfuse;

namespace {

int report_errors(const std::vector<std::string>& errors) {
  std::cerr << "invalid configuration:\n";
  for (const auto& e : errors) std::cerr << "  " << e << "\n";
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stfuse: clock sync, AoI and spatiotemporal fusion simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> episodes;
  std::vector<std::string> modes;
  std::optional<int> offset_frames;
  std::optional<std::string> grid;
  std::optional<std::string> out_dir;
  bool validate_only = false;

  auto* run = app.add_subcommand("run", "run episodes and write reports");
  run->add_option("--config", config_path, "YAML config file");
  run->add_option("--seed", seed, "base seed");
  run->add_option("--episodes", episodes, "episodes per mode");
  run->add_option("--mode", modes, "full | no_clock | no_delay (repeatable)")
      ->check(CLI::IsMember({"full", "no_clock", "no_delay"}));
  run->add_option("--offset-frames", offset_frames, "stamp offset injected into neighbor frames");
  run->add_option("--grid", grid, "grid preset")->check(CLI::IsMember({"desk", "paper"}));
  run->add_option("--out", out_dir, "output directory");
  run->add_flag("--validate", validate_only, "validate the effective config and exit");

  auto* ex1 = app.add_subcommand("example1", "print the worked AoI example");

  std::string validate_path;
  auto* val = app.add_subcommand("validate", "validate a config file without running");
  val->add_option("--config", validate_path, "YAML config file")->required();

  CLI11_PARSE(app, argc, argv);

  if (*ex1) {
    print_example1(std::cout, example1());
    return 0;
  }

  if (*val) {
    try {
      const auto cfg = load_config_file(validate_path);
      const auto errs = validate(cfg);
      if (!errs.empty()) return report_errors(errs);
      std::cout << "ok\n";
      return 0;
    } catch (const ConfigError& e) {
      return report_errors(e.errors());
    } catch (const std::exception& e) {
      std::cerr << e.what() << "\n";
      return 2;
    }
  }

  RunConfig cfg;
  try {
    if (!config_path.empty()) cfg = load_config_file(config_path);
  } catch (const ConfigError& e) {
    return report_errors(e.errors());
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }
  if (seed) cfg.seed = *seed;
  if (episodes) cfg.episodes = *episodes;
  if (!modes.empty()) {
    cfg.modes.clear();
    for (const auto& m : modes) cfg.modes.push_back(parse_mode(m));
  }
  if (offset_frames) cfg.pipeline.offset_frames = *offset_frames;
  if (grid) cfg.grid = *grid == "paper" ? GridConfig::paper() : GridConfig::desk();
  if (out_dir) cfg.out_dir = *out_dir;

  if (const auto errs = validate(cfg); !errs.empty()) return report_errors(errs);
  if (validate_only) {
    std::cout << "ok\n";
    return 0;
  }

  try {
    const auto suite = run_suite({{"default", cfg}});
    write_reports(cfg.out_dir, cfg, suite);
    for (const auto& r : suite.summary) {
      std::printf("%-9s episodes=%d failed=%d center_error=%.4f+-%.4f m fusion_l2=%.4f source_age=%.4f s\n",
                  to_string(r.mode).c_str(), r.episodes_ok, r.episodes_failed,
                  r.center_error_mean, r.center_error_std, r.fusion_l2_mean, r.source_age_mean);
    }
    for (const auto& e : suite.episodes)
      if (!e.metrics)
        std::fprintf(stderr, "episode seed=%llu mode=%s failed: %s\n",
                     static_cast<unsigned long long>(e.seed), to_string(e.mode).c_str(),
                     e.error.c_str());
  } catch (const std::exception& e) {
    std::cerr << "run failed: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "stfuse/clock_tracker.hpp"
#include "stfuse/geometry.hpp"

namespace stfuse {

enum class Mode { Full, NoClock, NoDelay };

std::string to_string(Mode m);
Mode parse_mode(const std::string& s);

/// Per-vehicle clock override; unset fields fall back to the drawn defaults.
struct VehicleClockOverride {
  int id{0};
  std::optional<double> offset_ms;
  std::optional<double> skew_ppm;
  std::optional<double> jitter_phi;
  std::optional<double> jitter_sigma_ms;
};

struct ClockConfig {
  double offset_half_range_ms{10.0};  // offset ~ U(-r, r)
  double skew_std_ppm{5.0};           // skew ~ N(0, s)
  double jitter_phi{0.7};
  double jitter_sigma_ms{0.2};
  std::vector<VehicleClockOverride> overrides;
};

struct SyncConfig {
  double cadence_s{0.1};
  double base_delay_ms{2.0};
  double delay_jitter_ms{0.05};   // per-leg uniform half-width
  double asymmetry_std_ms{0.1};   // per-link static (fwd - rev) / 2
  double reply_gap_ms{0.5};
  double follow_up_gap_ms{1.0};
  double prior_var_theta{1e-4};
  double prior_var_varpi{1e-10};
  double prior_var_b{1e-8};      // matched to asymmetry_std_ms^2
  double q_theta{1e-12};
  double q_varpi{1e-14};
  double q_b{1e-12};
  double kappa{2.576};
  double chi2_threshold{6.635};
  double R_min{1e-12};
  bool robust{true};
};

struct ChannelConfig {
  double bandwidth_hz{1.8e6};
  int subchannels_per_link{1};
  double snr_mean_db{10.0};
  double snr_std_db{2.0};
  double per_zeta{1.0};
  double per_gamma0_db{6.0};
  int quant_bits{16};
  double extra_delay_s{0.0};
};

struct GridConfig {
  std::string preset{"desk"};
  int rows{64};
  int cols{64};
  int channels{4};
  double cell_m{1.0};

  static GridConfig desk() { return {"desk", 64, 64, 4, 1.0}; }
  static GridConfig paper() { return {"paper", 256, 256, 13, 0.4}; }
};

struct SceneConfig {
  int vehicles{5};  // including the ego
  bool rsu{true};
  int objects{10};
  double object_speed_max{15.0};
  double turn_fraction{0.5};
  double turn_rate_max{0.3};  // rad/s
  double frame_period_s{0.1};
  int horizon_frames{40};
  int warmup_frames{10};
  double neighbor_radius_m{60.0};
  double rsu_coverage_radius_m{100.0};
  double rsu_antenna_offset_m{10.0};
  double pose_noise_m{0.0};
};

struct PipelineConfig {
  int history_frames{3};
  double fusion_lambda_s{1.0};
  double recency_lambda_s{0.5};
  double tau_c_m{0.0};  // 0 selects twice the cell diagonal
  int offset_frames{0};
  std::string interpolation{"bilinear"};
  bool random_projection{false};
};

struct RunConfig {
  int schema_version{1};
  SceneConfig scene;
  ClockConfig clock;
  SyncConfig sync;
  ChannelConfig channel;
  GridConfig grid{GridConfig::desk()};
  PipelineConfig pipeline;
  std::vector<Mode> modes{Mode::Full};
  std::uint64_t seed{42};
  int episodes{1};
  std::string out_dir{"out"};

  double tau_c() const;
  Interpolation interpolation() const;
  TrackerConfig tracker(double jitter_sigma_s) const;
};

/// Raised with every violated field when a config fails validation.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> errors);
  const std::vector<std::string>& errors() const { return errors_; }

 private:
  std::vector<std::string> errors_;
};

/// Range checks; returns "field: message" strings, empty when valid.
std::vector<std::string> validate(const RunConfig& cfg);

RunConfig load_config_file(const std::string& path);
RunConfig load_config_string(const std::string& yaml_text);
std::string to_yaml(const RunConfig& cfg);

}  // namespace stfuse

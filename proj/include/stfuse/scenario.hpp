#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stfuse/clock_tracker.hpp"
#include "stfuse/config.hpp"
#include "stfuse/geometry.hpp"
#include "stfuse/simclock.hpp"

namespace stfuse {

/// Constant-turn-rate-and-velocity motion anchored at `anchor_time`; a zero
/// turn rate gives constant velocity. Valid for times on either side of the anchor.
struct Trajectory {
  Pose2D<double> anchor{};  // position and heading at anchor_time
  double anchor_time{0};
  double speed{0};
  double yaw_rate{0};

  Pose2D<double> at(double t) const;
};

struct Agent {
  int id{0};
  bool is_rsu{false};
  Trajectory motion;
  ClockModel<double> clock;
};

struct SceneObject {
  int id{0};
  Trajectory motion;
  Eigen::Vector2d extent_wl{4.5, 2.0};  // length along heading, width
};

struct Scene {
  std::vector<Agent> agents;  // agents[0] is the ego
  std::vector<SceneObject> objects;
  double rsu_coverage_radius{100.0};  // psi_r
  double rsu_antenna_offset{10.0};    // psi_v
  double neighbor_radius_iota{60.0};
  double frame_period{0.1};
  int horizon{40};

  const Agent& ego() const { return agents.front(); }
  const Agent& agent(int id) const;
};

/// Stream ids for per-entity random generators.
namespace streams {
constexpr std::uint64_t scene = 1;
constexpr std::uint64_t clock_jitter = 100;
constexpr std::uint64_t sync_delay = 200;
constexpr std::uint64_t channel = 300;
constexpr std::uint64_t pose = 400;
constexpr std::uint64_t schedule = 500;
constexpr std::uint64_t projection = 600;
}  // namespace streams

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream);

Scene generate_scene(const RunConfig& cfg, std::uint64_t seed);

/// Remaining distance inside the RSU's coverage along the road for a vehicle
/// at road coordinate psi_m driving in direction sign(v_m).
double remaining_distance(double psi_r, double psi_v, double psi_m, double v_m);
/// Same for a scene vehicle; the road runs along world x through the RSU.
double remaining_distance(const Scene& scene, int vehicle_id, double t_true);

/// Agents that can exchange with the ego at t: vehicles within iota, and the
/// RSU while the ego is still inside its coverage.
std::vector<int> neighbor_set(const Scene& scene, double t_true);

/// Renders the objects at time t_objects into the body frame of `observer`.
/// Channel 0: blob; 1, 2: observer-frame velocity times blob / 15; others: blob.
FeatureGrid render_objects(const Scene& scene, const Pose2D<double>& observer, double t_objects,
                           const GridConfig& grid, FrameTag tag = {});
FeatureGrid render_ground_truth_grid(const Scene& scene, int vehicle_id, double t_true,
                                     const GridConfig& grid);

struct LinkFrameMetrics {
  int link{0};
  double source_age{0};
  bool age_consistent{true};
  std::optional<double> arrival_age;
  double delivery_aoi{0};
  double delay{0};
  double theta_error{0};  // estimated minus true relative offset, s
  double varpi_error{0};
  double sigma_t2{0};
};

struct FrameMetrics {
  int frame{0};
  double t_true{0};
  double t_out{0};
  int n_neighbors{0};
  int n_rois{0};
  double mean_center_error{0};
  double max_center_error{0};
  double fusion_l2{0};     // squared L2 of fused grid vs supervision grid
  double alignment_l2{0};  // mask-restricted L2 of compensated neighbor grids vs truth
  bool causal{true};
  std::vector<LinkFrameMetrics> links;
  std::vector<std::vector<double>> weights;  // per RoI
  std::vector<double> center_errors;         // per RoI
};

struct ExchangeRecord {
  int link{0};
  TimestampExchange<double> ex;
  double z{0};
  Eigen::RowVector3d H = Eigen::RowVector3d::Zero();
  double R{0};
};

struct AoiTraceRow {
  int link{0};
  double t{0};
  double value{0};
};

struct LinkTraceRow {
  int link{0};
  FilterTraceRow row;
  double theta_true{0};
  double varpi_true{0};
};

struct EpisodeMetrics {
  std::string label;
  Mode mode{Mode::Full};
  std::uint64_t seed{0};
  int offset_frames{0};
  std::vector<FrameMetrics> frames;
  std::vector<LinkTraceRow> filter_trace;
  std::vector<ExchangeRecord> exchanges;
  std::vector<AoiTraceRow> aoi_trace;

  double mean_center_error{0};
  double median_center_error{0};
  double mean_fusion_l2{0};
  double mean_alignment_l2{0};
  double mean_source_age{0};
  int n_rois{0};
};

EpisodeMetrics run_episode(const Scene& scene, const RunConfig& cfg, Mode mode,
                           std::uint64_t seed);

struct EpisodeOutcome {
  std::string label;
  Mode mode{Mode::Full};
  std::uint64_t seed{0};
  std::optional<EpisodeMetrics> metrics;
  std::string error;
};

struct SummaryRow {
  std::string label;
  Mode mode{Mode::Full};
  int episodes_ok{0};
  int episodes_failed{0};
  double center_error_mean{0}, center_error_std{0};
  double center_error_median{0};
  double fusion_l2_mean{0}, fusion_l2_std{0};
  double alignment_l2_mean{0}, alignment_l2_std{0};
  double source_age_mean{0}, source_age_std{0};
};

struct SuiteResult {
  std::vector<EpisodeOutcome> episodes;
  std::vector<SummaryRow> summary;
};

struct LabeledConfig {
  std::string label;
  RunConfig cfg;
};

/// Runs every (config, mode, episode) combination concurrently. Episode e of a
/// config uses seed cfg.seed + e for both scene and noise. A failing episode is
/// recorded with its error and does not stop the others.
SuiteResult run_suite(const std::vector<LabeledConfig>& configs, unsigned max_threads = 0);

std::vector<SummaryRow> summarize(const std::vector<EpisodeOutcome>& episodes);

}  // namespace stfuse

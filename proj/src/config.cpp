#include "stfuse/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

namespace stfuse {

std::string to_string(Mode m) {
  switch (m) {
    case Mode::Full: return "full";
    case Mode::NoClock: return "no_clock";
    case Mode::NoDelay: return "no_delay";
  }
  return "full";
}

Mode parse_mode(const std::string& s) {
  if (s == "full") return Mode::Full;
  if (s == "no_clock") return Mode::NoClock;
  if (s == "no_delay") return Mode::NoDelay;
  throw std::invalid_argument("unknown mode '" + s + "' (expected full|no_clock|no_delay)");
}

double RunConfig::tau_c() const {
  if (pipeline.tau_c_m > 0) return pipeline.tau_c_m;
  return 2.0 * std::sqrt(2.0) * grid.cell_m;
}

Interpolation RunConfig::interpolation() const {
  return pipeline.interpolation == "nearest" ? Interpolation::Nearest : Interpolation::Bilinear;
}

TrackerConfig RunConfig::tracker(double jitter_sigma_s) const {
  TrackerConfig t;
  t.prior = {sync.prior_var_theta, sync.prior_var_varpi, sync.prior_var_b};
  t.process = {sync.q_theta, sync.q_varpi, sync.q_b};
  t.kappa = sync.kappa;
  t.chi2_threshold = sync.chi2_threshold;
  t.R_min = sync.R_min;
  t.jitter_sigma = jitter_sigma_s;
  // Per-leg uniform jitter of half-width a has variance a^2/3; (fwd - rev)/2
  // then has variance a^2/6.
  const double a = sync.delay_jitter_ms * 1e-3;
  t.delay_asymmetry_var = a * a / 6.0;
  t.rule = sync.robust ? UpdateRule::Robust : UpdateRule::Standard;
  return t;
}

ConfigError::ConfigError(std::vector<std::string> errors)
    : std::runtime_error([&] {
        std::string msg = "invalid configuration:";
        for (const auto& e : errors) msg += "\n  " + e;
        return msg;
      }()),
      errors_(std::move(errors)) {}

std::vector<std::string> validate(const RunConfig& c) {
  std::vector<std::string> e;
  auto need = [&](bool ok, const std::string& field, const std::string& msg) {
    if (!ok) e.push_back(field + ": " + msg);
  };
  need(c.schema_version == 1, "schema_version", "unsupported version (expected 1)");

  const auto& s = c.scene;
  need(s.vehicles >= 1, "scene.vehicles", "must be >= 1");
  need(s.objects >= 0, "scene.objects", "must be >= 0");
  need(s.object_speed_max >= 0, "scene.object_speed_max", "must be >= 0");
  need(s.turn_fraction >= 0 && s.turn_fraction <= 1, "scene.turn_fraction", "must be in [0, 1]");
  need(s.turn_rate_max >= 0, "scene.turn_rate_max", "must be >= 0");
  need(s.frame_period_s > 0, "scene.frame_period_s", "must be > 0");
  need(s.horizon_frames >= 1, "scene.horizon_frames", "must be >= 1");
  need(s.warmup_frames >= 0 && s.warmup_frames < s.horizon_frames, "scene.warmup_frames",
       "must be in [0, horizon_frames)");
  need(s.neighbor_radius_m > 0, "scene.neighbor_radius_m", "must be > 0");
  need(s.rsu_coverage_radius_m >= s.rsu_antenna_offset_m && s.rsu_antenna_offset_m >= 0,
       "scene.rsu_coverage_radius_m", "must be >= rsu_antenna_offset_m >= 0");
  need(s.pose_noise_m >= 0, "scene.pose_noise_m", "must be >= 0");

  const auto& k = c.clock;
  need(k.offset_half_range_ms >= 0, "clock.offset_half_range_ms", "must be >= 0");
  need(k.skew_std_ppm >= 0, "clock.skew_std_ppm", "must be >= 0");
  need(k.jitter_phi >= 0 && k.jitter_phi < 1, "clock.jitter_phi", "must be in [0, 1)");
  need(k.jitter_sigma_ms >= 0, "clock.jitter_sigma_ms", "must be >= 0");
  for (std::size_t i = 0; i < k.overrides.size(); ++i) {
    const auto& o = k.overrides[i];
    const std::string p = "clock.vehicles[" + std::to_string(i) + "]";
    need(o.id >= 0, p + ".id", "must be >= 0");
    if (o.jitter_phi) need(*o.jitter_phi >= 0 && *o.jitter_phi < 1, p + ".jitter_phi", "must be in [0, 1)");
    if (o.jitter_sigma_ms) need(*o.jitter_sigma_ms >= 0, p + ".jitter_sigma_ms", "must be >= 0");
  }

  const auto& y = c.sync;
  need(y.cadence_s > 0, "sync.cadence_s", "must be > 0");
  need(y.base_delay_ms > 0, "sync.base_delay_ms", "must be > 0");
  need(y.delay_jitter_ms >= 0 && y.delay_jitter_ms < y.base_delay_ms, "sync.delay_jitter_ms",
       "must be in [0, base_delay_ms)");
  need(y.asymmetry_std_ms >= 0, "sync.asymmetry_std_ms", "must be >= 0");
  need(y.reply_gap_ms >= 0, "sync.reply_gap_ms", "must be >= 0");
  need(y.follow_up_gap_ms >= 0, "sync.follow_up_gap_ms", "must be >= 0");
  need(y.prior_var_theta > 0, "sync.prior_var_theta", "must be > 0");
  need(y.prior_var_varpi > 0, "sync.prior_var_varpi", "must be > 0");
  need(y.prior_var_b > 0, "sync.prior_var_b", "must be > 0");
  need(y.q_theta >= 0, "sync.q_theta", "must be >= 0");
  need(y.q_varpi >= 0, "sync.q_varpi", "must be >= 0");
  need(y.q_b >= 0, "sync.q_b", "must be >= 0");
  need(y.kappa > 0, "sync.kappa", "must be > 0");
  need(y.chi2_threshold > 0, "sync.chi2_threshold", "must be > 0");
  need(y.R_min > 0, "sync.R_min", "must be > 0");

  const auto& h = c.channel;
  need(h.bandwidth_hz > 0, "channel.bandwidth_hz", "must be > 0");
  need(h.subchannels_per_link >= 1, "channel.subchannels_per_link", "must be >= 1");
  need(h.snr_std_db >= 0, "channel.snr_std_db", "must be >= 0");
  need(h.quant_bits >= 1, "channel.quant_bits", "must be >= 1");
  need(h.extra_delay_s >= 0, "channel.extra_delay_s", "must be >= 0");

  const auto& g = c.grid;
  need(g.preset == "desk" || g.preset == "paper", "grid.preset", "must be desk or paper");
  need(g.rows >= 2, "grid.rows", "must be >= 2");
  need(g.cols >= 2, "grid.cols", "must be >= 2");
  need(g.channels >= 3, "grid.channels", "must be >= 3 (blob + two velocity channels)");
  need(g.cell_m > 0, "grid.cell_m", "must be > 0");

  const auto& p = c.pipeline;
  need(p.history_frames >= 1, "pipeline.history_frames", "must be >= 1");
  need(p.fusion_lambda_s > 0, "pipeline.fusion_lambda_s", "must be > 0");
  need(p.recency_lambda_s > 0, "pipeline.recency_lambda_s", "must be > 0");
  need(p.tau_c_m >= 0, "pipeline.tau_c_m", "must be >= 0 (0 = auto)");
  need(p.offset_frames >= 0, "pipeline.offset_frames", "must be >= 0");
  need(p.interpolation == "bilinear" || p.interpolation == "nearest", "pipeline.interpolation",
       "must be bilinear or nearest");

  need(!c.modes.empty(), "modes", "at least one mode is required");
  need(c.episodes >= 1, "episodes", "must be >= 1");
  need(!c.out_dir.empty(), "out_dir", "must not be empty");
  return e;
}

namespace {

class Reader {
 public:
  std::vector<std::string> errors;

  void keys(const YAML::Node& n, const std::string& path, std::set<std::string> known) {
    if (!n.IsMap()) {
      errors.push_back(path + ": expected a mapping");
      return;
    }
    for (const auto& kv : n) {
      const auto key = kv.first.as<std::string>();
      if (!known.count(key)) errors.push_back(join(path, key) + ": unknown key");
    }
  }

  template <typename T>
  void get(const YAML::Node& n, const std::string& path, const char* key, T& out) {
    const YAML::Node v = n[key];
    if (!v) return;
    try {
      out = v.as<T>();
    } catch (const YAML::Exception&) {
      errors.push_back(join(path, key) + ": wrong type");
    }
  }

  template <typename T>
  void get(const YAML::Node& n, const std::string& path, const char* key, std::optional<T>& out) {
    T tmp{};
    const YAML::Node v = n[key];
    if (!v) return;
    try {
      tmp = v.as<T>();
      out = tmp;
    } catch (const YAML::Exception&) {
      errors.push_back(join(path, key) + ": wrong type");
    }
  }

  static std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
  }
};

RunConfig parse(const YAML::Node& root) {
  RunConfig c;
  Reader rd;
  if (!root || root.IsNull()) return c;
  rd.keys(root, "", {"schema_version", "scene", "clock", "sync", "channel", "grid", "pipeline",
                     "modes", "mode", "seed", "episodes", "out_dir"});
  if (!root.IsMap()) throw ConfigError(rd.errors);
  rd.get(root, "", "schema_version", c.schema_version);
  rd.get(root, "", "seed", c.seed);
  rd.get(root, "", "episodes", c.episodes);
  rd.get(root, "", "out_dir", c.out_dir);

  auto read_modes = [&](const YAML::Node& n, const char* field) {
    std::vector<Mode> modes;
    try {
      if (n.IsSequence()) {
        for (const auto& m : n) modes.push_back(parse_mode(m.as<std::string>()));
      } else {
        modes.push_back(parse_mode(n.as<std::string>()));
      }
      c.modes = modes;
    } catch (const std::exception& ex) {
      rd.errors.push_back(std::string(field) + ": " + ex.what());
    }
  };
  if (root["modes"]) read_modes(root["modes"], "modes");
  if (root["mode"]) read_modes(root["mode"], "mode");

  if (const auto n = root["scene"]) {
    auto& s = c.scene;
    rd.keys(n, "scene", {"vehicles", "rsu", "objects", "object_speed_max", "turn_fraction",
                         "turn_rate_max", "frame_period_s", "horizon_frames", "warmup_frames",
                         "neighbor_radius_m", "rsu_coverage_radius_m", "rsu_antenna_offset_m",
                         "pose_noise_m"});
    rd.get(n, "scene", "vehicles", s.vehicles);
    rd.get(n, "scene", "rsu", s.rsu);
    rd.get(n, "scene", "objects", s.objects);
    rd.get(n, "scene", "object_speed_max", s.object_speed_max);
    rd.get(n, "scene", "turn_fraction", s.turn_fraction);
    rd.get(n, "scene", "turn_rate_max", s.turn_rate_max);
    rd.get(n, "scene", "frame_period_s", s.frame_period_s);
    rd.get(n, "scene", "horizon_frames", s.horizon_frames);
    rd.get(n, "scene", "warmup_frames", s.warmup_frames);
    rd.get(n, "scene", "neighbor_radius_m", s.neighbor_radius_m);
    rd.get(n, "scene", "rsu_coverage_radius_m", s.rsu_coverage_radius_m);
    rd.get(n, "scene", "rsu_antenna_offset_m", s.rsu_antenna_offset_m);
    rd.get(n, "scene", "pose_noise_m", s.pose_noise_m);
  }

  if (const auto n = root["clock"]) {
    auto& k = c.clock;
    rd.keys(n, "clock", {"offset_half_range_ms", "skew_std_ppm", "jitter_phi", "jitter_sigma_ms",
                         "vehicles"});
    rd.get(n, "clock", "offset_half_range_ms", k.offset_half_range_ms);
    rd.get(n, "clock", "skew_std_ppm", k.skew_std_ppm);
    rd.get(n, "clock", "jitter_phi", k.jitter_phi);
    rd.get(n, "clock", "jitter_sigma_ms", k.jitter_sigma_ms);
    if (const auto vs = n["vehicles"]) {
      if (!vs.IsSequence()) {
        rd.errors.push_back("clock.vehicles: expected a sequence");
      } else {
        for (std::size_t i = 0; i < vs.size(); ++i) {
          const std::string p = "clock.vehicles[" + std::to_string(i) + "]";
          VehicleClockOverride o;
          rd.keys(vs[i], p, {"id", "offset_ms", "skew_ppm", "jitter_phi", "jitter_sigma_ms"});
          rd.get(vs[i], p, "id", o.id);
          rd.get(vs[i], p, "offset_ms", o.offset_ms);
          rd.get(vs[i], p, "skew_ppm", o.skew_ppm);
          rd.get(vs[i], p, "jitter_phi", o.jitter_phi);
          rd.get(vs[i], p, "jitter_sigma_ms", o.jitter_sigma_ms);
          k.overrides.push_back(o);
        }
      }
    }
  }

  if (const auto n = root["sync"]) {
    auto& y = c.sync;
    rd.keys(n, "sync", {"cadence_s", "base_delay_ms", "delay_jitter_ms", "asymmetry_std_ms",
                        "reply_gap_ms", "follow_up_gap_ms", "prior_var_theta", "prior_var_varpi",
                        "prior_var_b", "q_theta", "q_varpi", "q_b", "kappa", "chi2_threshold",
                        "R_min", "robust"});
    rd.get(n, "sync", "cadence_s", y.cadence_s);
    rd.get(n, "sync", "base_delay_ms", y.base_delay_ms);
    rd.get(n, "sync", "delay_jitter_ms", y.delay_jitter_ms);
    rd.get(n, "sync", "asymmetry_std_ms", y.asymmetry_std_ms);
    rd.get(n, "sync", "reply_gap_ms", y.reply_gap_ms);
    rd.get(n, "sync", "follow_up_gap_ms", y.follow_up_gap_ms);
    rd.get(n, "sync", "prior_var_theta", y.prior_var_theta);
    rd.get(n, "sync", "prior_var_varpi", y.prior_var_varpi);
    rd.get(n, "sync", "prior_var_b", y.prior_var_b);
    rd.get(n, "sync", "q_theta", y.q_theta);
    rd.get(n, "sync", "q_varpi", y.q_varpi);
    rd.get(n, "sync", "q_b", y.q_b);
    rd.get(n, "sync", "kappa", y.kappa);
    rd.get(n, "sync", "chi2_threshold", y.chi2_threshold);
    rd.get(n, "sync", "R_min", y.R_min);
    rd.get(n, "sync", "robust", y.robust);
  }

  if (const auto n = root["channel"]) {
    auto& h = c.channel;
    rd.keys(n, "channel", {"bandwidth_hz", "subchannels_per_link", "snr_mean_db", "snr_std_db",
                           "per_zeta", "per_gamma0_db", "quant_bits", "extra_delay_s"});
    rd.get(n, "channel", "bandwidth_hz", h.bandwidth_hz);
    rd.get(n, "channel", "subchannels_per_link", h.subchannels_per_link);
    rd.get(n, "channel", "snr_mean_db", h.snr_mean_db);
    rd.get(n, "channel", "snr_std_db", h.snr_std_db);
    rd.get(n, "channel", "per_zeta", h.per_zeta);
    rd.get(n, "channel", "per_gamma0_db", h.per_gamma0_db);
    rd.get(n, "channel", "quant_bits", h.quant_bits);
    rd.get(n, "channel", "extra_delay_s", h.extra_delay_s);
  }

  if (const auto n = root["grid"]) {
    auto& g = c.grid;
    rd.keys(n, "grid", {"preset", "rows", "cols", "channels", "cell_m"});
    std::string preset = g.preset;
    rd.get(n, "grid", "preset", preset);
    if (preset == "paper") g = GridConfig::paper();
    else if (preset == "desk") g = GridConfig::desk();
    else g.preset = preset;
    rd.get(n, "grid", "rows", g.rows);
    rd.get(n, "grid", "cols", g.cols);
    rd.get(n, "grid", "channels", g.channels);
    rd.get(n, "grid", "cell_m", g.cell_m);
  }

  if (const auto n = root["pipeline"]) {
    auto& p = c.pipeline;
    rd.keys(n, "pipeline", {"history_frames", "fusion_lambda_s", "recency_lambda_s", "tau_c_m",
                            "offset_frames", "interpolation", "random_projection"});
    rd.get(n, "pipeline", "history_frames", p.history_frames);
    rd.get(n, "pipeline", "fusion_lambda_s", p.fusion_lambda_s);
    rd.get(n, "pipeline", "recency_lambda_s", p.recency_lambda_s);
    rd.get(n, "pipeline", "tau_c_m", p.tau_c_m);
    rd.get(n, "pipeline", "offset_frames", p.offset_frames);
    rd.get(n, "pipeline", "interpolation", p.interpolation);
    rd.get(n, "pipeline", "random_projection", p.random_projection);
  }

  if (!rd.errors.empty()) throw ConfigError(rd.errors);
  return c;
}

}  // namespace

RunConfig load_config_string(const std::string& yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& ex) {
    throw ConfigError({std::string("syntax: ") + ex.what()});
  }
  return parse(root);
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return load_config_string(ss.str());
}

std::string to_yaml(const RunConfig& c) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << YAML::BeginMap;
  out << YAML::Key << "schema_version" << YAML::Value << c.schema_version;
  out << YAML::Key << "seed" << YAML::Value << c.seed;
  out << YAML::Key << "episodes" << YAML::Value << c.episodes;
  out << YAML::Key << "out_dir" << YAML::Value << c.out_dir;
  out << YAML::Key << "modes" << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (auto m : c.modes) out << to_string(m);
  out << YAML::EndSeq;

  const auto& s = c.scene;
  out << YAML::Key << "scene" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "vehicles" << YAML::Value << s.vehicles;
  out << YAML::Key << "rsu" << YAML::Value << s.rsu;
  out << YAML::Key << "objects" << YAML::Value << s.objects;
  out << YAML::Key << "object_speed_max" << YAML::Value << s.object_speed_max;
  out << YAML::Key << "turn_fraction" << YAML::Value << s.turn_fraction;
  out << YAML::Key << "turn_rate_max" << YAML::Value << s.turn_rate_max;
  out << YAML::Key << "frame_period_s" << YAML::Value << s.frame_period_s;
  out << YAML::Key << "horizon_frames" << YAML::Value << s.horizon_frames;
  out << YAML::Key << "warmup_frames" << YAML::Value << s.warmup_frames;
  out << YAML::Key << "neighbor_radius_m" << YAML::Value << s.neighbor_radius_m;
  out << YAML::Key << "rsu_coverage_radius_m" << YAML::Value << s.rsu_coverage_radius_m;
  out << YAML::Key << "rsu_antenna_offset_m" << YAML::Value << s.rsu_antenna_offset_m;
  out << YAML::Key << "pose_noise_m" << YAML::Value << s.pose_noise_m;
  out << YAML::EndMap;

  const auto& k = c.clock;
  out << YAML::Key << "clock" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "offset_half_range_ms" << YAML::Value << k.offset_half_range_ms;
  out << YAML::Key << "skew_std_ppm" << YAML::Value << k.skew_std_ppm;
  out << YAML::Key << "jitter_phi" << YAML::Value << k.jitter_phi;
  out << YAML::Key << "jitter_sigma_ms" << YAML::Value << k.jitter_sigma_ms;
  if (!k.overrides.empty()) {
    out << YAML::Key << "vehicles" << YAML::Value << YAML::BeginSeq;
    for (const auto& o : k.overrides) {
      out << YAML::BeginMap << YAML::Key << "id" << YAML::Value << o.id;
      if (o.offset_ms) out << YAML::Key << "offset_ms" << YAML::Value << *o.offset_ms;
      if (o.skew_ppm) out << YAML::Key << "skew_ppm" << YAML::Value << *o.skew_ppm;
      if (o.jitter_phi) out << YAML::Key << "jitter_phi" << YAML::Value << *o.jitter_phi;
      if (o.jitter_sigma_ms)
        out << YAML::Key << "jitter_sigma_ms" << YAML::Value << *o.jitter_sigma_ms;
      out << YAML::EndMap;
    }
    out << YAML::EndSeq;
  }
  out << YAML::EndMap;

  const auto& y = c.sync;
  out << YAML::Key << "sync" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "cadence_s" << YAML::Value << y.cadence_s;
  out << YAML::Key << "base_delay_ms" << YAML::Value << y.base_delay_ms;
  out << YAML::Key << "delay_jitter_ms" << YAML::Value << y.delay_jitter_ms;
  out << YAML::Key << "asymmetry_std_ms" << YAML::Value << y.asymmetry_std_ms;
  out << YAML::Key << "reply_gap_ms" << YAML::Value << y.reply_gap_ms;
  out << YAML::Key << "follow_up_gap_ms" << YAML::Value << y.follow_up_gap_ms;
  out << YAML::Key << "prior_var_theta" << YAML::Value << y.prior_var_theta;
  out << YAML::Key << "prior_var_varpi" << YAML::Value << y.prior_var_varpi;
  out << YAML::Key << "prior_var_b" << YAML::Value << y.prior_var_b;
  out << YAML::Key << "q_theta" << YAML::Value << y.q_theta;
  out << YAML::Key << "q_varpi" << YAML::Value << y.q_varpi;
  out << YAML::Key << "q_b" << YAML::Value << y.q_b;
  out << YAML::Key << "kappa" << YAML::Value << y.kappa;
  out << YAML::Key << "chi2_threshold" << YAML::Value << y.chi2_threshold;
  out << YAML::Key << "R_min" << YAML::Value << y.R_min;
  out << YAML::Key << "robust" << YAML::Value << y.robust;
  out << YAML::EndMap;

  const auto& h = c.channel;
  out << YAML::Key << "channel" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "bandwidth_hz" << YAML::Value << h.bandwidth_hz;
  out << YAML::Key << "subchannels_per_link" << YAML::Value << h.subchannels_per_link;
  out << YAML::Key << "snr_mean_db" << YAML::Value << h.snr_mean_db;
  out << YAML::Key << "snr_std_db" << YAML::Value << h.snr_std_db;
  out << YAML::Key << "per_zeta" << YAML::Value << h.per_zeta;
  out << YAML::Key << "per_gamma0_db" << YAML::Value << h.per_gamma0_db;
  out << YAML::Key << "quant_bits" << YAML::Value << h.quant_bits;
  out << YAML::Key << "extra_delay_s" << YAML::Value << h.extra_delay_s;
  out << YAML::EndMap;

  const auto& g = c.grid;
  out << YAML::Key << "grid" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "preset" << YAML::Value << g.preset;
  out << YAML::Key << "rows" << YAML::Value << g.rows;
  out << YAML::Key << "cols" << YAML::Value << g.cols;
  out << YAML::Key << "channels" << YAML::Value << g.channels;
  out << YAML::Key << "cell_m" << YAML::Value << g.cell_m;
  out << YAML::EndMap;

  const auto& p = c.pipeline;
  out << YAML::Key << "pipeline" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "history_frames" << YAML::Value << p.history_frames;
  out << YAML::Key << "fusion_lambda_s" << YAML::Value << p.fusion_lambda_s;
  out << YAML::Key << "recency_lambda_s" << YAML::Value << p.recency_lambda_s;
  out << YAML::Key << "tau_c_m" << YAML::Value << p.tau_c_m;
  out << YAML::Key << "offset_frames" << YAML::Value << p.offset_frames;
  out << YAML::Key << "interpolation" << YAML::Value << p.interpolation;
  out << YAML::Key << "random_projection" << YAML::Value << p.random_projection;
  out << YAML::EndMap;

  out << YAML::EndMap;
  return std::string("# effective configuration\n") + out.c_str() + "\n";
}

}  // namespace stfuse

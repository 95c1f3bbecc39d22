#include "stfuse/scenario.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <thread>

#include "stfuse/align.hpp"
#include "stfuse/channel.hpp"
#include "stfuse/freshness.hpp"
#include "stfuse/fusion.hpp"
#include "stfuse/syncproto.hpp"

namespace stfuse {

Pose2D<double> Trajectory::at(double t) const {
  const double dt = t - anchor_time;
  const double h0 = anchor.heading;
  Pose2D<double> p;
  if (std::abs(yaw_rate) < 1e-9) {
    p.x = anchor.x + speed * dt * std::cos(h0);
    p.y = anchor.y + speed * dt * std::sin(h0);
    p.heading = h0;
  } else {
    const double h = h0 + yaw_rate * dt;
    p.x = anchor.x + speed / yaw_rate * (std::sin(h) - std::sin(h0));
    p.y = anchor.y + speed / yaw_rate * (std::cos(h0) - std::cos(h));
    p.heading = normalize_angle(h);
  }
  p.vx = speed * std::cos(p.heading);
  p.vy = speed * std::sin(p.heading);
  return p;
}

const Agent& Scene::agent(int id) const {
  for (const auto& a : agents)
    if (a.id == id) return a;
  throw std::out_of_range("Scene: no agent with id " + std::to_string(id));
}

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

Scene generate_scene(const RunConfig& cfg, std::uint64_t seed) {
  if (auto errs = validate(cfg); !errs.empty()) throw ConfigError(errs);
  const auto& sc = cfg.scene;
  auto rng = make_rng(seed, streams::scene);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::normal_distribution<double> N(0.0, 1.0);
  auto uni = [&](double a, double b) { return a + (b - a) * U(rng); };

  Scene s;
  s.rsu_coverage_radius = sc.rsu_coverage_radius_m;
  s.rsu_antenna_offset = sc.rsu_antenna_offset_m;
  s.neighbor_radius_iota = sc.neighbor_radius_m;
  s.frame_period = sc.frame_period_s;
  s.horizon = sc.horizon_frames;

  auto make_clock = [&](int id) {
    ClockModel<double> c;
    c.offset_theta = uni(-1.0, 1.0) * cfg.clock.offset_half_range_ms * 1e-3;
    c.skew_varpi = N(rng) * cfg.clock.skew_std_ppm * 1e-6;
    c.jitter_phi = cfg.clock.jitter_phi;
    c.jitter_sigma = cfg.clock.jitter_sigma_ms * 1e-3;
    const double z0 = N(rng);
    for (const auto& o : cfg.clock.overrides) {
      if (o.id != id) continue;
      if (o.offset_ms) c.offset_theta = *o.offset_ms * 1e-3;
      if (o.skew_ppm) c.skew_varpi = *o.skew_ppm * 1e-6;
      if (o.jitter_phi) c.jitter_phi = *o.jitter_phi;
      if (o.jitter_sigma_ms) c.jitter_sigma = *o.jitter_sigma_ms * 1e-3;
    }
    c.jitter_state = c.jitter_sigma * z0;
    validate(c);
    return c;
  };

  // Vehicles drive along +x in parallel lanes around the ego.
  const double ego_speed = uni(8.0, 12.0);
  Agent ego;
  ego.id = 1;
  ego.motion.speed = ego_speed;
  ego.clock = make_clock(ego.id);
  s.agents.push_back(ego);
  const double lanes[] = {-3.5, 3.5, -7.0, 7.0};
  for (int i = 2; i <= sc.vehicles; ++i) {
    Agent a;
    a.id = i;
    a.motion.anchor.x = uni(-35.0, 35.0);
    a.motion.anchor.y = lanes[(i - 2) % 4];
    a.motion.speed = ego_speed + uni(-1.5, 1.5);
    a.clock = make_clock(a.id);
    s.agents.push_back(a);
  }
  if (sc.rsu) {
    Agent r;
    r.id = sc.vehicles + 1;
    r.is_rsu = true;
    r.motion.anchor.x = uni(-20.0, 60.0);
    r.motion.anchor.y = -sc.rsu_antenna_offset_m;
    r.clock = make_clock(r.id);
    s.agents.push_back(r);
  }

  // Objects are placed around the ego at mid-episode so most stay in view.
  const double t_mid = 0.5 * (sc.warmup_frames + sc.horizon_frames) * sc.frame_period_s;
  const Pose2D<double> ego_mid = s.agents.front().motion.at(t_mid);
  for (int k = 0; k < sc.objects; ++k) {
    SceneObject o;
    o.id = 1000 + k;
    o.motion.anchor_time = t_mid;
    o.motion.anchor.x = ego_mid.x + uni(-25.0, 25.0);
    o.motion.anchor.y = ego_mid.y + uni(-20.0, 20.0);
    o.motion.anchor.heading = uni(-std::numbers::pi, std::numbers::pi);
    o.motion.speed = uni(0.0, sc.object_speed_max);
    const bool turning = U(rng) < sc.turn_fraction;
    const double w = uni(-sc.turn_rate_max, sc.turn_rate_max);
    o.motion.yaw_rate = turning ? w : 0.0;
    o.extent_wl = {uni(3.8, 5.0), uni(1.7, 2.1)};
    s.objects.push_back(o);
  }
  return s;
}

double remaining_distance(double psi_r, double psi_v, double psi_m, double v_m) {
  if (psi_r < psi_v) throw std::invalid_argument("remaining_distance: psi_r must be >= psi_v");
  const double dir = v_m < 0 ? -1.0 : 1.0;
  return std::sqrt(psi_r * psi_r - psi_v * psi_v) - dir * psi_m;
}

double remaining_distance(const Scene& scene, int vehicle_id, double t_true) {
  const Agent* rsu = nullptr;
  for (const auto& a : scene.agents)
    if (a.is_rsu) rsu = &a;
  if (!rsu) throw std::invalid_argument("remaining_distance: scene has no RSU");
  const auto p = scene.agent(vehicle_id).motion.at(t_true);
  const auto r = rsu->motion.at(t_true);
  return remaining_distance(scene.rsu_coverage_radius, scene.rsu_antenna_offset, p.x - r.x, p.vx);
}

std::vector<int> neighbor_set(const Scene& scene, double t_true) {
  std::vector<int> out;
  const auto e = scene.ego().motion.at(t_true);
  const double half = std::sqrt(scene.rsu_coverage_radius * scene.rsu_coverage_radius -
                                scene.rsu_antenna_offset * scene.rsu_antenna_offset);
  for (std::size_t i = 1; i < scene.agents.size(); ++i) {
    const auto& a = scene.agents[i];
    const auto p = a.motion.at(t_true);
    if (a.is_rsu) {
      const double psi_m = e.x - p.x;
      const double d = remaining_distance(scene, scene.ego().id, t_true);
      if (std::abs(psi_m) <= half && d > 0) out.push_back(a.id);
    } else if ((p.position() - e.position()).norm() <= scene.neighbor_radius_iota) {
      out.push_back(a.id);
    }
  }
  return out;
}

FeatureGrid render_objects(const Scene& scene, const Pose2D<double>& observer, double t_objects,
                           const GridConfig& gc, FrameTag tag) {
  FeatureGrid g(gc.rows, gc.cols, gc.channels, gc.cell_m, gc.cell_m, tag);
  const Eigen::Matrix2d Rt = body_to_world(observer).rotation_R.transpose();
  for (const auto& o : scene.objects) {
    const auto p = o.motion.at(t_objects);
    const Eigen::Vector2d rel = Rt * (p.position() - observer.position());
    const Eigen::Vector2d v = Rt * p.velocity();
    const double h = p.heading - observer.heading;
    const double ch = std::cos(h), sh = std::sin(h);
    const double sl = o.extent_wl.x() / 4.0, sw = o.extent_wl.y() / 4.0;
    const double reach = 4.0 * std::max(sl, sw);
    const Eigen::Vector2d lo = g.to_index(rel - Eigen::Vector2d(reach, reach));
    const Eigen::Vector2d hi = g.to_index(rel + Eigen::Vector2d(reach, reach));
    const int c0 = std::max(0, static_cast<int>(std::floor(lo.x())));
    const int c1 = std::min(g.cols() - 1, static_cast<int>(std::ceil(hi.x())));
    const int r0 = std::max(0, static_cast<int>(std::floor(lo.y())));
    const int r1 = std::min(g.rows() - 1, static_cast<int>(std::ceil(hi.y())));
    for (int r = r0; r <= r1; ++r) {
      for (int c = c0; c <= c1; ++c) {
        const Eigen::Vector2d d = g.cell_center(r, c) - rel;
        const double a = ch * d.x() + sh * d.y();
        const double b = -sh * d.x() + ch * d.y();
        const double val = std::exp(-0.5 * (a * a / (sl * sl) + b * b / (sw * sw)));
        if (val < 1e-6) continue;
        g(r, c, 0) = std::max(g(r, c, 0), val);
        g(r, c, 1) += v.x() * val / 15.0;
        g(r, c, 2) += v.y() * val / 15.0;
      }
    }
  }
  for (int k = 3; k < g.channels(); ++k) g.channel(k) = g.channel(0) / (1.0 + 0.25 * (k - 3));
  return g;
}

FeatureGrid render_ground_truth_grid(const Scene& scene, int vehicle_id, double t_true,
                                     const GridConfig& grid) {
  return render_objects(scene, scene.agent(vehicle_id).motion.at(t_true), t_true, grid,
                        FrameTag{vehicle_id, t_true});
}

namespace {

struct Observation {
  int object{0};
  Eigen::Vector2d center_body = Eigen::Vector2d::Zero();
  Eigen::Vector2d velocity_world = Eigen::Vector2d::Zero();
  Eigen::Vector2d extent = Eigen::Vector2d::Zero();
};

struct SentFrame {
  int index{0};
  double gen_true{0};
  double stamp{0};
  Pose2D<double> pose_true;
  Pose2D<double> pose_shared;
  std::vector<Observation> obs;
  bool sent{false};
  bool delivered{false};
  double arrival_true{0};
  std::optional<FeatureGrid> grid;
};

struct Link {
  int agent_id{0};
  std::size_t agent_index{0};
  LinkClockTracker tracker;
  std::mt19937_64 delay_rng;
  std::mt19937_64 channel_rng;
  std::mt19937_64 pose_rng;
  double asymmetry{0};
  double sync_phase{0};
  double gen_phase{0};
  double last_round_true{0};
  std::vector<SentFrame> frames;
  std::vector<UpdateEvent<double>> log;
};

enum class EventKind { Sync = 0, Generate = 1, Tick = 2 };

struct Event {
  double t{0};
  EventKind kind{EventKind::Tick};
  int link{0};
  int index{0};
};

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  double m = *mid;
  if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), mid));
  return m;
}

void paint_disk(Eigen::MatrixXd& m, const FeatureGrid& g, const Eigen::Vector2d& center,
                double radius, double value) {
  const Eigen::Vector2d lo = g.to_index(center - Eigen::Vector2d(radius, radius));
  const Eigen::Vector2d hi = g.to_index(center + Eigen::Vector2d(radius, radius));
  const int c0 = std::max(0, static_cast<int>(std::floor(lo.x())));
  const int c1 = std::min(g.cols() - 1, static_cast<int>(std::ceil(hi.x())));
  const int r0 = std::max(0, static_cast<int>(std::floor(lo.y())));
  const int r1 = std::min(g.rows() - 1, static_cast<int>(std::ceil(hi.y())));
  for (int r = r0; r <= r1; ++r)
    for (int c = c0; c <= c1; ++c)
      if ((g.cell_center(r, c) - center).norm() <= radius) m(r, c) = value;
}

Eigen::MatrixXd random_projection(int C, std::uint64_t seed) {
  auto rng = make_rng(seed, streams::projection);
  std::normal_distribution<double> N(0.0, 1.0);
  Eigen::MatrixXd A(C, C);
  for (int i = 0; i < C; ++i)
    for (int j = 0; j < C; ++j) A(i, j) = N(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(A);
  return qr.householderQ() * Eigen::MatrixXd::Identity(C, C);
}

}  // namespace

EpisodeMetrics run_episode(const Scene& scene, const RunConfig& cfg, Mode mode,
                           std::uint64_t seed) {
  if (auto errs = validate(cfg); !errs.empty()) throw ConfigError(errs);
  const auto& sc = cfg.scene;
  const auto& sy = cfg.sync;
  const double T = scene.frame_period;
  const double t_end = scene.horizon * T;
  const int K = cfg.pipeline.history_frames;
  const Interpolation interp = cfg.interpolation();
  const double tau_c = cfg.tau_c();
  const double stamp_shift = cfg.pipeline.offset_frames * T;
  const bool use_clock = mode != Mode::NoClock;
  const bool use_delay = mode != Mode::NoDelay;

  // Mutable clocks and their jitter streams.
  std::vector<ClockModel<double>> clocks;
  std::vector<std::mt19937_64> jitter_rngs;
  for (const auto& a : scene.agents) {
    clocks.push_back(a.clock);
    jitter_rngs.push_back(make_rng(seed, streams::clock_jitter + static_cast<std::uint64_t>(a.id)));
  }
  auto reader = [&](std::size_t idx) {
    return [&, idx](double t) {
      std::normal_distribution<double> N(0.0, 1.0);
      return read_clock(clocks[idx], t, [&] { return N(jitter_rngs[idx]); });
    };
  };

  std::vector<Link> links;
  for (std::size_t i = 1; i < scene.agents.size(); ++i) {
    const auto& a = scene.agents[i];
    const auto id = static_cast<std::uint64_t>(a.id);
    Link l;
    l.agent_id = a.id;
    l.agent_index = i;
    l.tracker = LinkClockTracker(cfg.tracker(cfg.clock.jitter_sigma_ms * 1e-3));
    l.delay_rng = make_rng(seed, streams::sync_delay + id);
    l.channel_rng = make_rng(seed, streams::channel + id);
    l.pose_rng = make_rng(seed, streams::pose + id);
    auto sched = make_rng(seed, streams::schedule + id);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    std::normal_distribution<double> N(0.0, 1.0);
    l.sync_phase = 0.5 * sy.cadence_s * U(sched);
    l.gen_phase = T * U(sched);
    l.asymmetry = sy.asymmetry_std_ms * 1e-3 * N(l.delay_rng);
    links.push_back(std::move(l));
  }

  std::vector<Event> events;
  for (std::size_t li = 0; li < links.size(); ++li) {
    for (int k = 0;; ++k) {
      const double t = links[li].sync_phase + k * sy.cadence_s;
      if (t >= t_end) break;
      events.push_back({t, EventKind::Sync, static_cast<int>(li), k});
    }
    for (int j = 0; j < scene.horizon; ++j)
      events.push_back({j * T + links[li].gen_phase, EventKind::Generate, static_cast<int>(li), j});
  }
  for (int j = 1; j < scene.horizon; ++j) events.push_back({j * T, EventKind::Tick, -1, j});
  std::sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
    if (a.t != b.t) return a.t < b.t;
    if (a.kind != b.kind) return a.kind < b.kind;
    if (a.link != b.link) return a.link < b.link;
    return a.index < b.index;
  });

  const ExchangeGaps<double> gaps{sy.reply_gap_ms * 1e-3, sy.follow_up_gap_ms * 1e-3, 0.0};
  const double base = sy.base_delay_ms * 1e-3;
  const double half_jit = sy.delay_jitter_ms * 1e-3;
  FusionConfig fcfg;
  fcfg.decay_lambda = cfg.pipeline.fusion_lambda_s;
  if (cfg.pipeline.random_projection)
    fcfg.channel_projection_W = random_projection(cfg.grid.channels, seed);

  EpisodeMetrics em;
  em.mode = mode;
  em.seed = seed;
  em.offset_frames = cfg.pipeline.offset_frames;
  const auto& ego_clock0 = scene.ego().clock;

  for (const auto& ev : events) {
    if (ev.kind == EventKind::Sync) {
      Link& l = links[static_cast<std::size_t>(ev.link)];
      std::uniform_real_distribution<double> J(-half_jit, half_jit);
      const double fwd = base + l.asymmetry + J(l.delay_rng);
      const double rev = base - l.asymmetry + J(l.delay_rng);
      auto ex = detail::exchange_events<double>(fwd, rev, ev.t, gaps, reader(0),
                                                reader(l.agent_index));
      ex.round_index_k = ev.index;
      const auto tc = cfg.tracker(cfg.clock.jitter_sigma_ms * 1e-3);
      const double R = measurement_noise_variance(tc.jitter_sigma, tc.delay_asymmetry_var);
      const auto& row = l.tracker.ingest(ex);
      l.last_round_true = ev.t;
      const auto& nbr0 = scene.agents[l.agent_index].clock;
      LinkTraceRow tr{l.agent_id, row, 0, 0};
      tr.varpi_true = ego_clock0.skew_varpi - nbr0.skew_varpi;
      tr.theta_true = ego_clock0.offset_theta - nbr0.offset_theta + tr.varpi_true * ev.t;
      em.filter_trace.push_back(tr);
      const auto m = measurement_from_exchange(ex, ex.t1, std::max(R, sy.R_min));
      em.exchanges.push_back({l.agent_id, ex, m.z_k, m.H_k, m.R_k});
      continue;
    }

    if (ev.kind == EventKind::Generate) {
      Link& l = links[static_cast<std::size_t>(ev.link)];
      const auto& agent = scene.agents[l.agent_index];
      SentFrame f;
      f.index = ev.index;
      f.gen_true = ev.t;
      f.stamp = reader(l.agent_index)(ev.t) + stamp_shift;
      f.pose_true = agent.motion.at(ev.t);
      f.pose_shared = f.pose_true;
      std::normal_distribution<double> N(0.0, 1.0);
      const double nx = N(l.pose_rng), ny = N(l.pose_rng);
      f.pose_shared.x += sc.pose_noise_m * nx;
      f.pose_shared.y += sc.pose_noise_m * ny;
      const Eigen::Matrix2d Rt = body_to_world(f.pose_true).rotation_R.transpose();
      FeatureGrid probe(cfg.grid.rows, cfg.grid.cols, 1, cfg.grid.cell_m, cfg.grid.cell_m);
      for (const auto& o : scene.objects) {
        const auto p = o.motion.at(ev.t);
        const Eigen::Vector2d rel = Rt * (p.position() - f.pose_true.position());
        if (!probe.contains(rel)) continue;
        f.obs.push_back({o.id, rel, p.velocity(), o.extent_wl});
      }
      l.frames.push_back(std::move(f));
      continue;
    }

    // Ego fusion tick.
    const double t_j = ev.t;
    const double tau_f = reader(0)(t_j);
    const double t_f = fusion_time(ClockEstimate<double>::ideal(), tau_f);
    const auto nbr_ids = neighbor_set(scene, t_j);
    const auto ego_pose = scene.ego().motion.at(t_j);
    const Eigen::Matrix2d ego_Rt = body_to_world(ego_pose).rotation_R.transpose();

    struct Active {
      std::size_t link;
      std::vector<SentFrame*> stack;  // newest first
      double delay{0};
      ClockEstimate<double> est;
      double t0{0};
      std::vector<double> ages;
      double sigma_t2{0};
    };
    std::vector<Active> active;

    for (std::size_t li = 0; li < links.size(); ++li) {
      Link& l = links[li];
      // One SNR draw per link and tick keeps every mode on the same stream.
      std::normal_distribution<double> snr(cfg.channel.snr_mean_db, cfg.channel.snr_std_db);
      std::vector<double> snrs;
      for (int s = 0; s < cfg.channel.subchannels_per_link; ++s) snrs.push_back(snr(l.channel_rng));
      if (std::find(nbr_ids.begin(), nbr_ids.end(), l.agent_id) == nbr_ids.end()) continue;

      SentFrame* latest = nullptr;
      for (auto& f : l.frames)
        if (f.gen_true <= t_j) latest = &f;
      if (!latest) continue;

      double delay = 0;
      if (!latest->sent) {
        latest->sent = true;
        LinkState link;
        link.bandwidth_beta = cfg.channel.bandwidth_hz;
        link.subchannels.clear();
        for (double s : snrs)
          link.subchannels.push_back({s, cfg.channel.per_zeta, cfg.channel.per_gamma0_db});
        double bits = 0;
        for (const auto& o : latest->obs)
          bits += static_cast<double>(roi_bits(static_cast<std::uint32_t>(cfg.channel.quant_bits),
                                               static_cast<std::uint32_t>(cfg.grid.channels),
                                               o.extent.y(), o.extent.x(), cfg.grid.cell_m,
                                               cfg.grid.cell_m));
        const auto d = comm_delay(bits, data_rate(link));
        if (d) {
          delay = *d + cfg.channel.extra_delay_s;
          latest->delivered = true;
          latest->arrival_true = t_j + delay;
          l.log.push_back({l.agent_id, latest->stamp, raw_reading(clocks[0], latest->arrival_true),
                           latest->index});
        }
      }

      Active a{li, {}, delay, ClockEstimate<double>::ideal(), 0.0, {}, 0.0};
      for (auto it = l.frames.rbegin(); it != l.frames.rend() && static_cast<int>(a.stack.size()) < K;
           ++it)
        if (it->gen_true <= t_j && it->delivered) a.stack.push_back(&*it);
      if (a.stack.empty()) continue;
      if (use_clock && l.tracker.initialized()) {
        a.est = l.tracker.neighbor_estimate();
        a.t0 = a.est.last_update_time;
        a.sigma_t2 = l.tracker.offset_variance_at(tau_f);
      } else {
        a.sigma_t2 = sy.prior_var_theta;
      }
      active.push_back(std::move(a));
    }

    double max_delay = 0;
    for (const auto& a : active) max_delay = std::max(max_delay, a.delay);
    const double t_out = t_j + max_delay;
    const double lead = use_delay ? max_delay : 0.0;

    FrameMetrics fm;
    fm.frame = ev.index;
    fm.t_true = t_j;
    fm.t_out = t_out;
    fm.n_neighbors = static_cast<int>(active.size());

    // Per-object compensated observations from every active link.
    struct LinkObs {
      std::size_t active_index;
      std::vector<Eigen::Vector2d> points;
      std::vector<double> ages;
      Eigen::Vector2d velocity = Eigen::Vector2d::Zero();
      Eigen::Vector2d extent = Eigen::Vector2d::Zero();
      double freshest_age{0};
    };
    std::map<int, std::vector<LinkObs>> by_object;
    std::vector<std::vector<std::vector<std::pair<Eigen::Vector2d, Eigen::Vector2d>>>> targets(
        active.size());

    for (std::size_t ai = 0; ai < active.size(); ++ai) {
      auto& a = active[ai];
      Link& l = links[a.link];
      targets[ai].resize(a.stack.size());
      for (std::size_t kk = 0; kk < a.stack.size(); ++kk) {
        const SentFrame& f = *a.stack[kk];
        if (f.arrival_true > t_out) fm.causal = false;
        const auto age = source_age(a.est, f.stamp, t_f, a.t0);
        a.ages.push_back(age.value);
        const auto Trel = relative_transform(f.pose_shared, ego_pose);
        for (const auto& o : f.obs) {
          const Eigen::Vector2d p = Trel * o.center_body;
          const Eigen::Vector2d v = ego_Rt * o.velocity_world;
          const Eigen::Vector2d q = compensate_point(p, v, age.value + lead);
          targets[ai][kk].push_back({q, v});
          auto& vec = by_object[o.object];
          if (vec.empty() || vec.back().active_index != ai) {
            LinkObs lo;
            lo.active_index = ai;
            lo.velocity = v;
            lo.extent = o.extent;
            lo.freshest_age = age.value;
            vec.push_back(lo);
          }
          vec.back().points.push_back(q);
          vec.back().ages.push_back(age.value);
        }
      }

      LinkFrameMetrics lm;
      lm.link = l.agent_id;
      const auto age0 = source_age(a.est, a.stack.front()->stamp, t_f, a.t0);
      lm.source_age = age0.value;
      lm.age_consistent = age0.consistent;
      lm.arrival_age = arrival_age<double>(l.log, a.est, t_f, a.t0);
      lm.delay = a.delay;
      lm.delivery_aoi = delivery_aoi(age0.value, use_delay ? a.delay : 0.0);
      lm.sigma_t2 = a.sigma_t2;
      if (l.tracker.initialized()) {
        const auto& nbr0 = scene.agents[l.agent_index].clock;
        const double varpi_true = ego_clock0.skew_varpi - nbr0.skew_varpi;
        const double theta_true =
            ego_clock0.offset_theta - nbr0.offset_theta + varpi_true * l.last_round_true;
        lm.theta_error = l.tracker.state().theta() - theta_true;
        lm.varpi_error = l.tracker.state().varpi() - varpi_true;
      }
      fm.links.push_back(lm);
    }

    FeatureGrid probe(cfg.grid.rows, cfg.grid.cols, 1, cfg.grid.cell_m, cfg.grid.cell_m);
    std::vector<Eigen::MatrixXd> masks;
    FusionWeights fw;
    fw.decay_lambda = cfg.pipeline.fusion_lambda_s;
    std::vector<Eigen::MatrixXd> link_union(active.size(),
                                            Eigen::MatrixXd::Zero(cfg.grid.rows, cfg.grid.cols));
    double err_sum = 0;
    for (const auto& [object_id, per_link] : by_object) {
      const SceneObject* obj = nullptr;
      for (const auto& o : scene.objects)
        if (o.id == object_id) obj = &o;
      const auto po = obj->motion.at(t_out);
      const Eigen::Vector2d truth = ego_Rt * (po.position() - ego_pose.position());
      if (!probe.contains(truth)) continue;

      std::vector<WeightEntry> entries;
      std::vector<Eigen::Vector2d> estimates;
      RoiFusionWeights rw;
      for (const auto& lo : per_link) {
        const auto& a = active[lo.active_index];
        const auto w = recency_weights(lo.ages, cfg.pipeline.recency_lambda_s);
        const double wsum = std::accumulate(w.begin(), w.end(), 0.0);
        Eigen::Vector2d p = Eigen::Vector2d::Zero();
        for (std::size_t i = 0; i < w.size(); ++i) p += w[i] / wsum * lo.points[i];
        UncertaintyBudget ub;
        if (lo.points.size() >= 2) ub.sigma2_space = residual_covariance(lo.points).sigma2_space;
        ub.sigma_t2 = a.sigma_t2;
        ub.sigma2_time_to_space = time_to_space_variance(lo.velocity, a.sigma_t2);
        ub.tau_c = tau_c;
        const double c = reliability(total_uncertainty(ub), tau_c);
        entries.push_back({c, delivery_aoi(lo.freshest_age, use_delay ? a.delay : 0.0)});
        estimates.push_back(p);
        rw.neighbors.push_back(lo.active_index);
      }
      const auto res = roi_weights(entries, cfg.pipeline.fusion_lambda_s);
      rw.alpha = res.alpha;
      Eigen::Vector2d fused = Eigen::Vector2d::Zero();
      for (std::size_t i = 0; i < estimates.size(); ++i) fused += res.alpha[i] * estimates[i];
      const double err = (fused - truth).norm();
      fm.center_errors.push_back(err);
      fm.weights.push_back(res.alpha);
      err_sum += err;
      fm.max_center_error = std::max(fm.max_center_error, err);

      Eigen::MatrixXd mask = Eigen::MatrixXd::Zero(cfg.grid.rows, cfg.grid.cols);
      const double radius = 0.5 * per_link.front().extent.maxCoeff() + cfg.grid.cell_m;
      paint_disk(mask, probe, fused, radius, 1.0);
      for (auto idx : rw.neighbors) link_union[idx] = link_union[idx].cwiseMax(mask);
      masks.push_back(std::move(mask));
      fw.per_roi.push_back(std::move(rw));
    }
    fm.n_rois = static_cast<int>(fm.center_errors.size());
    fm.mean_center_error = fm.n_rois ? err_sum / fm.n_rois : 0.0;

    // Grid path: warp, compensate and fuse the neighbor feature stacks.
    const FeatureGrid ego_grid = render_objects(scene, ego_pose, t_j, cfg.grid, {scene.ego().id, tau_f});
    const FeatureGrid truth_grid = render_objects(scene, ego_pose, t_out, cfg.grid, {scene.ego().id, tau_f});
    std::vector<FeatureGrid> compensated;
    for (std::size_t ai = 0; ai < active.size(); ++ai) {
      auto& a = active[ai];
      AlignedStack stack;
      stack.source = links[a.link].agent_id;
      std::vector<VelocityField> fields;
      for (std::size_t kk = 0; kk < a.stack.size(); ++kk) {
        SentFrame& f = *a.stack[kk];
        if (!f.grid) f.grid = render_objects(scene, f.pose_true, f.gen_true, cfg.grid,
                                             {links[a.link].agent_id, f.stamp});
        stack.grids.push_back(warp_grid(*f.grid, relative_transform(f.pose_shared, ego_pose), interp));
        stack.ages.push_back(a.ages[kk]);
        auto vf = VelocityField::zeros(cfg.grid.rows, cfg.grid.cols);
        for (std::size_t oi = 0; oi < f.obs.size(); ++oi) {
          const auto& [q, v] = targets[ai][kk][oi];
          const double radius = 0.5 * f.obs[oi].extent.maxCoeff() + cfg.grid.cell_m;
          paint_disk(vf.vx, probe, q, radius, v.x());
          paint_disk(vf.vy, probe, q, radius, v.y());
        }
        fields.push_back(std::move(vf));
      }
      compensated.push_back(compensate_temporal(
          stack, fields, {cfg.pipeline.recency_lambda_s, lead, interp}));
    }
    const FeatureGrid fused_grid = fuse(ego_grid, compensated, masks, fw, fcfg);
    // Squared L2 distance to the supervision grid rendered at the output instant.
    double l2 = 0;
    for (int ch = 0; ch < fused_grid.channels(); ++ch)
      l2 += (fused_grid.channel(ch) - truth_grid.channel(ch)).squaredNorm();
    fm.fusion_l2 = l2;
    double al = 0;
    for (std::size_t ai = 0; ai < compensated.size(); ++ai) {
      double s = 0;
      for (int ch = 0; ch < truth_grid.channels(); ++ch)
        s += (link_union[ai].array() * (compensated[ai].channel(ch) - truth_grid.channel(ch)).array())
                 .square()
                 .sum();
      al += std::sqrt(s);
    }
    fm.alignment_l2 = compensated.empty() ? 0.0 : al / static_cast<double>(compensated.size());

    if (ev.index >= sc.warmup_frames) em.frames.push_back(std::move(fm));
  }

  // Sawtooth traces of the arrival AoI per link on the ego's local timeline.
  for (const auto& l : links) {
    const ClockEstimate<double> est =
        (use_clock && l.tracker.initialized()) ? l.tracker.neighbor_estimate()
                                               : ClockEstimate<double>::ideal();
    std::vector<double> grid;
    for (double t = 0; t < t_end; t += 0.01) grid.push_back(raw_reading(scene.ego().clock, t));
    const auto traj = aoi_trajectory<double>(l.log, est, grid, est.last_update_time);
    for (const auto& s : traj.samples) em.aoi_trace.push_back({l.agent_id, s.t, s.value});
  }

  std::vector<double> all_errors;
  double fl2 = 0, al2 = 0, ages = 0;
  int n_ages = 0;
  for (const auto& f : em.frames) {
    all_errors.insert(all_errors.end(), f.center_errors.begin(), f.center_errors.end());
    fl2 += f.fusion_l2;
    al2 += f.alignment_l2;
    for (const auto& lm : f.links) {
      ages += lm.source_age;
      ++n_ages;
    }
  }
  em.n_rois = static_cast<int>(all_errors.size());
  if (!all_errors.empty())
    em.mean_center_error =
        std::accumulate(all_errors.begin(), all_errors.end(), 0.0) / static_cast<double>(all_errors.size());
  em.median_center_error = median_of(all_errors);
  if (!em.frames.empty()) {
    em.mean_fusion_l2 = fl2 / static_cast<double>(em.frames.size());
    em.mean_alignment_l2 = al2 / static_cast<double>(em.frames.size());
  }
  em.mean_source_age = n_ages ? ages / n_ages : 0.0;
  return em;
}

std::vector<SummaryRow> summarize(const std::vector<EpisodeOutcome>& episodes) {
  std::vector<SummaryRow> rows;
  std::vector<std::vector<const EpisodeMetrics*>> groups;
  for (const auto& e : episodes) {
    auto it = std::find_if(rows.begin(), rows.end(),
                           [&](const SummaryRow& r) { return r.label == e.label && r.mode == e.mode; });
    if (it == rows.end()) {
      SummaryRow r;
      r.label = e.label;
      r.mode = e.mode;
      rows.push_back(r);
      groups.emplace_back();
      it = rows.end() - 1;
    }
    auto& g = groups[static_cast<std::size_t>(it - rows.begin())];
    if (e.metrics) {
      ++it->episodes_ok;
      g.push_back(&*e.metrics);
    } else {
      ++it->episodes_failed;
    }
  }
  auto stats = [](const std::vector<double>& v, double& mean, double& sd) {
    mean = sd = 0;
    if (v.empty()) return;
    mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    if (v.size() < 2) return;
    double s = 0;
    for (double x : v) s += (x - mean) * (x - mean);
    sd = std::sqrt(s / static_cast<double>(v.size() - 1));
  };
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::vector<double> ce, fl, al, sa;
    for (const auto* m : groups[i]) {
      ce.push_back(m->mean_center_error);
      fl.push_back(m->mean_fusion_l2);
      al.push_back(m->mean_alignment_l2);
      sa.push_back(m->mean_source_age);
    }
    stats(ce, rows[i].center_error_mean, rows[i].center_error_std);
    rows[i].center_error_median = median_of(ce);
    stats(fl, rows[i].fusion_l2_mean, rows[i].fusion_l2_std);
    stats(al, rows[i].alignment_l2_mean, rows[i].alignment_l2_std);
    stats(sa, rows[i].source_age_mean, rows[i].source_age_std);
  }
  return rows;
}

SuiteResult run_suite(const std::vector<LabeledConfig>& configs, unsigned max_threads) {
  if (configs.empty()) throw std::invalid_argument("run_suite: no configurations");
  struct Task {
    const LabeledConfig* cfg;
    Mode mode;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (const auto& c : configs)
    for (int e = 0; e < c.cfg.episodes; ++e)
      for (Mode m : c.cfg.modes) tasks.push_back({&c, m, c.cfg.seed + static_cast<std::uint64_t>(e)});

  SuiteResult out;
  out.episodes.resize(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      const auto& t = tasks[i];
      auto& o = out.episodes[i];
      o.label = t.cfg->label;
      o.mode = t.mode;
      o.seed = t.seed;
      try {
        const Scene scene = generate_scene(t.cfg->cfg, t.seed);
        o.metrics = run_episode(scene, t.cfg->cfg, t.mode, t.seed);
        o.metrics->label = t.cfg->label;
      } catch (const std::exception& ex) {
        o.error = ex.what();
      }
    }
  };
  unsigned n = max_threads ? max_threads : std::max(1u, std::thread::hardware_concurrency());
  n = std::min<unsigned>(n, static_cast<unsigned>(tasks.size()));
  std::vector<std::thread> pool;
  for (unsigned i = 0; i < n; ++i) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  out.summary = summarize(out.episodes);
  return out;
}

}  // namespace stfuse

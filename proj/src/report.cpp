#include "stfuse/report.hpp"

#include <fstream>
#include <iomanip>
#include <ostream>
#include <span>
#include <stdexcept>

#include <json.hpp>

#include "stfuse/freshness.hpp"

namespace stfuse {

using nlohmann::json;

Example1Result example1() {
  ClockEstimate<double> ego;
  ego.theta_hat = 0.12;
  ego.varpi_hat = 0.002;
  ClockEstimate<double> nbr;
  nbr.theta_hat = -0.06;
  nbr.varpi_hat = -0.001;

  Example1Result r;
  r.fusion_time_tf = fusion_time(ego, 10.25);
  r.source_age_S = source_age(nbr, 9.18, r.fusion_time_tf).value;
  const UpdateEvent<double> log[] = {{2, 9.18, 9.70, 0}, {2, 9.55, 10.05, 1}};
  r.arrival_age_A = *arrival_age<double>(log, nbr, r.fusion_time_tf);
  r.delivery_aoi_A_tilde = delivery_aoi(r.source_age_S, 0.40);
  return r;
}

void print_example1(std::ostream& os, const Example1Result& r) {
  os << std::fixed << std::setprecision(5);
  os << "quantity                value (s)\n";
  os << "fusion time t_f         " << r.fusion_time_tf << "\n";
  os << "source age S            " << r.source_age_S << "\n";
  os << "arrival AoI A           " << r.arrival_age_A << "\n";
  os << "delivery-time AoI A~    " << r.delivery_aoi_A_tilde << "\n";
  os << std::defaultfloat;
}

namespace {

json frame_json(const EpisodeMetrics& m, const FrameMetrics& f) {
  json links = json::array();
  for (const auto& l : f.links) {
    links.push_back({{"link", l.link},
                     {"source_age", l.source_age},
                     {"age_consistent", l.age_consistent},
                     {"arrival_age", l.arrival_age ? json(*l.arrival_age) : json(nullptr)},
                     {"delivery_aoi", l.delivery_aoi},
                     {"delay", l.delay},
                     {"theta_error", l.theta_error},
                     {"varpi_error", l.varpi_error},
                     {"sigma_t2", l.sigma_t2}});
  }
  return {{"label", m.label},
          {"mode", to_string(m.mode)},
          {"seed", m.seed},
          {"offset_frames", m.offset_frames},
          {"frame", f.frame},
          {"t_true", f.t_true},
          {"t_out", f.t_out},
          {"n_neighbors", f.n_neighbors},
          {"n_rois", f.n_rois},
          {"mean_center_error", f.mean_center_error},
          {"max_center_error", f.max_center_error},
          {"fusion_l2", f.fusion_l2},
          {"alignment_l2", f.alignment_l2},
          {"causal", f.causal},
          {"links", links},
          {"weights", f.weights}};
}

template <typename Fn>
void for_each_ok(const SuiteResult& suite, Fn&& fn) {
  for (const auto& e : suite.episodes)
    if (e.metrics) fn(*e.metrics);
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  os << std::setprecision(17);
  return os;
}

}  // namespace

void write_metrics_jsonl(std::ostream& os, const SuiteResult& suite) {
  for (const auto& e : suite.episodes) {
    if (!e.metrics) {
      os << json{{"label", e.label}, {"mode", to_string(e.mode)}, {"seed", e.seed},
                 {"error", e.error}}.dump()
         << "\n";
      continue;
    }
    for (const auto& f : e.metrics->frames) os << frame_json(*e.metrics, f).dump() << "\n";
  }
}

void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& rows) {
  os << std::setprecision(10);
  os << "config,mode,episodes_ok,episodes_failed,center_error_mean,center_error_std,"
        "center_error_median,fusion_l2_mean,fusion_l2_std,alignment_l2_mean,alignment_l2_std,"
        "source_age_mean,source_age_std\n";
  for (const auto& r : rows) {
    os << r.label << ',' << to_string(r.mode) << ',' << r.episodes_ok << ',' << r.episodes_failed
       << ',' << r.center_error_mean << ',' << r.center_error_std << ',' << r.center_error_median
       << ',' << r.fusion_l2_mean << ',' << r.fusion_l2_std << ',' << r.alignment_l2_mean << ','
       << r.alignment_l2_std << ',' << r.source_age_mean << ',' << r.source_age_std << "\n";
  }
}

void write_filter_trace_csv(std::ostream& os, const SuiteResult& suite) {
  os << "config,mode,seed,link,k,t_local,theta_hat,varpi_hat,b_hat,P_theta,P_varpi,P_b,d2,alpha,"
        "gated,theta_true,varpi_true\n";
  for_each_ok(suite, [&](const EpisodeMetrics& m) {
    for (const auto& t : m.filter_trace) {
      const auto& r = t.row;
      os << m.label << ',' << to_string(m.mode) << ',' << m.seed << ',' << t.link << ',' << r.k
         << ',' << r.t_local << ',' << r.theta_hat << ',' << r.varpi_hat << ',' << r.b_hat << ','
         << r.P_theta << ',' << r.P_varpi << ',' << r.P_b << ',' << r.d2 << ',' << r.alpha << ','
         << (r.gated ? 1 : 0) << ',' << t.theta_true << ',' << t.varpi_true << "\n";
    }
  });
}

void write_exchange_trace_jsonl(std::ostream& os, const SuiteResult& suite) {
  for_each_ok(suite, [&](const EpisodeMetrics& m) {
    for (const auto& x : m.exchanges) {
      const auto& e = x.ex;
      os << json{{"label", m.label}, {"mode", to_string(m.mode)}, {"seed", m.seed},
                 {"link", x.link}, {"k", e.round_index_k}, {"t1", e.t1}, {"t2", e.t2},
                 {"t3", e.t3}, {"t4", e.t4}, {"t5", e.t5}, {"t6", e.t6}, {"z", x.z},
                 {"H", {x.H(0), x.H(1), x.H(2)}}, {"R", x.R}}.dump()
         << "\n";
    }
  });
}

void write_aoi_trace_csv(std::ostream& os, const SuiteResult& suite) {
  os << "config,mode,seed,sender,t,value\n";
  for_each_ok(suite, [&](const EpisodeMetrics& m) {
    for (const auto& a : m.aoi_trace)
      os << m.label << ',' << to_string(m.mode) << ',' << m.seed << ',' << a.link << ',' << a.t
         << ',' << a.value << "\n";
  });
}

void write_reports(const std::filesystem::path& dir, const RunConfig& cfg,
                   const SuiteResult& suite) {
  std::filesystem::create_directories(dir);
  {
    auto os = open_out(dir / "metrics.jsonl");
    write_metrics_jsonl(os, suite);
  }
  {
    auto os = open_out(dir / "summary.csv");
    write_summary_csv(os, suite.summary);
  }
  {
    auto os = open_out(dir / "filter_trace.csv");
    write_filter_trace_csv(os, suite);
  }
  {
    auto os = open_out(dir / "exchange_trace.jsonl");
    write_exchange_trace_jsonl(os, suite);
  }
  {
    auto os = open_out(dir / "aoi_trace.csv");
    write_aoi_trace_csv(os, suite);
  }
  {
    auto os = open_out(dir / "effective_config.yaml");
    os << to_yaml(cfg);
  }
}

}  // namespace stfuse

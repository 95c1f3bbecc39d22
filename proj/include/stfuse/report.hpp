#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "stfuse/config.hpp"
#include "stfuse/scenario.hpp"

namespace stfuse {

struct Example1Result {
  double fusion_time_tf{0};
  double source_age_S{0};
  double arrival_age_A{0};
  double delivery_aoi_A_tilde{0};
};

/// The worked example: ego estimate (0.12 s, 0.002), fusion stamp 10.25 s;
/// neighbor estimate (-0.06 s, -0.001); used feature stamped 9.18 s, newest
/// delivered update stamped 9.55 s, transmission delay 0.40 s.
Example1Result example1();
void print_example1(std::ostream& os, const Example1Result& r);

void write_metrics_jsonl(std::ostream& os, const SuiteResult& suite);
void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& rows);
void write_filter_trace_csv(std::ostream& os, const SuiteResult& suite);
void write_exchange_trace_jsonl(std::ostream& os, const SuiteResult& suite);
void write_aoi_trace_csv(std::ostream& os, const SuiteResult& suite);

/// Writes every artifact plus effective_config.yaml into `dir`.
void write_reports(const std::filesystem::path& dir, const RunConfig& cfg, const SuiteResult& suite);

}  // namespace stfuse

#pragma once

#include <string>
#include <vector>

#include "splitkit/pipeline.hpp"

namespace splitkit {

// One row per succeeded cut: cut,pa,pi,pi_raw,mi_reduction,accuracy_u,
// accuracy_u_prime,accuracy_a,accuracy_a_prime,accuracy_r,flops_ratio,
// params_ratio.  '.' decimals, LF line endings, shortest round-trip floats.
std::string report_csv(const RunRecord& record);

// Scored reports under schema_version 1; failed cuts listed separately.
std::string report_json_text(const RunRecord& record);

// Full record: reports, failures, stage digests, provenance.  Wall times
// and directory paths are deliberately absent; reruns compare byte-equal.
std::string run_record_json_text(const RunRecord& record);
RunRecord parse_run_record(const std::string& json_text);

// Normalized per-cut curves (pa, pi, mi_reduction, flops_ratio).
std::string render_profile_svg(const RunRecord& record);
// Per-cut bars: mi_reduction next to the attack's kept advantage.
std::string render_attack_svg(const RunRecord& record);

// Writes the requested formats plus run_record.json and timings.txt into
// out_dir; returns the paths written.
std::vector<std::string> emit_report(const RunRecord& record,
                                     const std::vector<std::string>& formats,
                                     bool plots, const std::string& out_dir);

}  // namespace splitkit

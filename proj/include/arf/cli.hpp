#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "arf/evaluation.hpp"

namespace arf {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;   // bad flags, bad config, unreadable input
inline constexpr int kExitVerify = 2;  // a verification (gradient check) failed

// Entry point of the arf command line. Diagnostics go to err as one line.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// Result tables (domain shift, zero-shot, loss ablation) built from labelled metrics.
enum class ReportTable { ds, zsl, ablation };
enum class ReportFormat { csv, markdown };

// ablation expects each label to be a loss set such as "cl,cap".
std::string render_report(std::span<const Metrics> runs, ReportTable table, ReportFormat format);

}  // namespace arf

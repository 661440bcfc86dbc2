#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ratlesnet/dataset.h"
#include "ratlesnet/volume.h"

namespace ratlesnet {

// 2|a ∩ b| / (|a| + |b|); 1.0 when both masks are empty. Throws ShapeError if
// the shapes differ.
double dice(const Mask& a, const Mask& b);
double dice(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);

struct DiceResult {
  std::string id;
  double dice = 0.0;
  TimePoint time_point = TimePoint::k24h;
  bool sham = false;
  std::string study;
};

enum class GroupBy { kTimePoint, kStudy };
GroupBy parse_group_by(std::string_view text);

struct ReportRow {
  std::string group;  // a time point, a study, or "Average"
  bool shams_included = true;
  std::size_t n = 0;
  std::optional<double> mean;  // absent when n == 0
  std::optional<double> std;   // population standard deviation
};

struct EvalReport {
  std::vector<ReportRow> rows;

  const ReportRow& row(std::string_view group, bool shams_included) const;
};

// One Yes/No row pair per group (time points in 2h, 24h, D35 order, studies
// sorted by name), followed by the "Average" pair over all results.
EvalReport aggregate(std::span<const DiceResult> results, GroupBy group_by);

std::string format_report_text(const EvalReport& report);
// Header "group,shams_included,n,mean_dice,std_dice"; empty mean/std when n == 0.
std::string format_report_csv(const EvalReport& report);
// Header, then one "id<TAB>study<TAB>time_point<TAB>sham<TAB>dice" line per scan.
std::string format_scan_results(std::span<const DiceResult> results);

}  // namespace ratlesnet

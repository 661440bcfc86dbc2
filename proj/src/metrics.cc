#include "ratlesnet/metrics.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

namespace ratlesnet {

namespace {

ReportRow summarize(std::string group, bool shams_included, std::span<const DiceResult> results) {
  ReportRow row;
  row.group = std::move(group);
  row.shams_included = shams_included;
  double total = 0.0;
  for (const DiceResult& r : results) {
    if (!shams_included && r.sham) continue;
    total += r.dice;
    ++row.n;
  }
  if (row.n == 0) return row;
  const double mean = total / static_cast<double>(row.n);
  double var = 0.0;
  for (const DiceResult& r : results) {
    if (!shams_included && r.sham) continue;
    var += (r.dice - mean) * (r.dice - mean);
  }
  row.mean = mean;
  row.std = std::sqrt(var / static_cast<double>(row.n));
  return row;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

double dice(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  if (a.size() != b.size()) throw ShapeError("dice: masks differ in size");
  std::size_t both = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a[i] != 0;
    const bool y = b[i] != 0;
    na += x;
    nb += y;
    both += x && y;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

double dice(const Mask& a, const Mask& b) {
  if (a.shape != b.shape) throw ShapeError("dice: mask shapes differ");
  return dice(std::span(a.values), std::span(b.values));
}

GroupBy parse_group_by(std::string_view text) {
  if (text == "time_point") return GroupBy::kTimePoint;
  if (text == "study") return GroupBy::kStudy;
  throw ConfigError("group_by must be time_point or study, got '" + std::string(text) + "'");
}

const ReportRow& EvalReport::row(std::string_view group, bool shams_included) const {
  for (const ReportRow& r : rows) {
    if (r.group == group && r.shams_included == shams_included) return r;
  }
  throw ConfigError("report has no row for group '" + std::string(group) + "'");
}

EvalReport aggregate(std::span<const DiceResult> results, GroupBy group_by) {
  std::map<std::pair<int, std::string>, std::vector<DiceResult>> groups;
  for (const DiceResult& r : results) {
    if (group_by == GroupBy::kTimePoint) {
      groups[{static_cast<int>(r.time_point), to_string(r.time_point)}].push_back(r);
    } else {
      groups[{0, r.study}].push_back(r);
    }
  }
  EvalReport report;
  for (const auto& [key, members] : groups) {
    report.rows.push_back(summarize(key.second, true, members));
    report.rows.push_back(summarize(key.second, false, members));
  }
  report.rows.push_back(summarize("Average", true, results));
  report.rows.push_back(summarize("Average", false, results));
  return report;
}

std::string format_report_text(const EvalReport& report) {
  std::size_t width = 7;
  for (const ReportRow& r : report.rows) width = std::max(width, r.group.size());
  std::ostringstream out;
  auto pad = [](std::string s, std::size_t w) {
    s.resize(std::max(w, s.size()), ' ');
    return s;
  };
  out << pad("Group", width) << "  Shams  " << pad("n", 5) << "Dice\n";
  for (const ReportRow& r : report.rows) {
    out << pad(r.group, width) << "  " << pad(r.shams_included ? "Yes" : "No", 5) << "  "
        << pad(std::to_string(r.n), 5);
    if (r.mean) {
      out << fixed(*r.mean, 4) << " +/- " << fixed(*r.std, 4);
    } else {
      out << "-";
    }
    out << '\n';
  }
  return out.str();
}

std::string format_report_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "group,shams_included,n,mean_dice,std_dice\n";
  for (const ReportRow& r : report.rows) {
    out << r.group << ',' << (r.shams_included ? "yes" : "no") << ',' << r.n << ',';
    if (r.mean) out << fixed(*r.mean, 6) << ',' << fixed(*r.std, 6);
    else out << ',';
    out << '\n';
  }
  return out.str();
}

std::string format_scan_results(std::span<const DiceResult> results) {
  std::ostringstream out;
  out << "id\tstudy\ttime_point\tsham\tdice\n";
  for (const DiceResult& r : results) {
    out << r.id << '\t' << r.study << '\t' << to_string(r.time_point) << '\t' << (r.sham ? 1 : 0)
        << '\t' << fixed(r.dice, 6) << '\n';
  }
  return out.str();
}

}  // namespace ratlesnet

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "chatternet/error.hpp"
#include "chatternet/metrics.hpp"

namespace chatternet {

struct RunMetadata {
  std::string run_id;
  std::string variant;
  int m = 0;
  double delta_pred_days = 30.0;
};

inline constexpr const char* kMetricsHeader =
    "run_id,variant,m,delta_pred_days,subreddit,n,mape,kendall_tau,spearman_rho,stepwise_tau,mape_raw";

inline std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

inline std::string format_number(const std::optional<double>& v) { return v ? format_number(*v) : "NA"; }

inline std::string metrics_row(const RunMetadata& meta, const std::string& subreddit, const MetricReport& r) {
  std::ostringstream row;
  row << meta.run_id << ',' << meta.variant << ',' << meta.m << ',' << format_number(meta.delta_pred_days) << ','
      << subreddit << ',' << r.n << ',' << format_number(r.mape) << ',' << format_number(r.kendall_tau) << ','
      << format_number(r.spearman_rho) << ',' << format_number(r.stepwise_tau) << ',' << format_number(r.mape_raw);
  return row.str();
}

/// CSV with the global row (subreddit "ALL") first, then one row per
/// subreddit in name order when requested.
inline std::string metrics_csv(const RunMetadata& meta, const MetricReport& r, bool per_subreddit) {
  std::string out = std::string(kMetricsHeader) + "\n" + metrics_row(meta, "ALL", r) + "\n";
  if (per_subreddit) {
    for (const auto& [name, sub] : r.per_subreddit) out += metrics_row(meta, name, sub) + "\n";
  }
  return out;
}

/// One parsed row of a metrics CSV; undefined values stay empty.
struct MetricsRow {
  std::string run_id;
  std::string variant;
  int m = 0;
  double delta_pred_days = 0.0;
  std::string subreddit;
  std::size_t n = 0;
  double mape = 0.0;
  std::optional<double> kendall_tau;
  std::optional<double> spearman_rho;
  std::optional<double> stepwise_tau;
  std::optional<double> mape_raw;
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("run_id,variant,m,delta_pred_days,subreddit,n,mape", 0) != 0) {
    throw DataError("unexpected metrics header in " + path.string());
  }
  auto opt = [](const std::string& s) -> std::optional<double> {
    if (s.empty() || s == "NA") return std::nullopt;
    return std::stod(s);
  };
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() < 10) throw DataError("short metrics row in " + path.string());
    MetricsRow r;
    r.run_id = f[0];
    r.variant = f[1];
    r.m = std::stoi(f[2]);
    r.delta_pred_days = std::stod(f[3]);
    r.subreddit = f[4];
    r.n = static_cast<std::size_t>(std::stoull(f[5]));
    r.mape = std::stod(f[6]);
    r.kendall_tau = opt(f[7]);
    r.spearman_rho = opt(f[8]);
    r.stepwise_tau = opt(f[9]);
    if (f.size() > 10) r.mape_raw = opt(f[10]);
    rows.push_back(std::move(r));
  }
  return rows;
}

/// Markdown comparison of the ALL rows: one line per run, sorted by
/// variant, m and prediction window.
inline std::string comparison_table(std::vector<MetricsRow> rows) {
  std::erase_if(rows, [](const MetricsRow& r) { return r.subreddit != "ALL"; });
  if (rows.empty()) throw DataError("no runs to compare");
  std::sort(rows.begin(), rows.end(), [](const MetricsRow& a, const MetricsRow& b) {
    return std::tie(a.variant, a.m, a.delta_pred_days, a.run_id) < std::tie(b.variant, b.m, b.delta_pred_days, b.run_id);
  });
  std::ostringstream out;
  out << "| variant | m | delta_pred_days | n | MAPE | Kendall tau | Spearman rho | step-wise tau | run |\n";
  out << "|---|---|---|---|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    out << "| " << r.variant << " | " << r.m << " | " << format_number(r.delta_pred_days) << " | " << r.n << " | "
        << format_number(r.mape) << " | " << format_number(r.kendall_tau) << " | " << format_number(r.spearman_rho)
        << " | " << format_number(r.stepwise_tau) << " | " << r.run_id << " |\n";
  }
  return out.str();
}

/// Pivot of one metric with variants as rows and a sweep dimension (m or
/// prediction window) as columns.
inline std::string sweep_table(const std::vector<MetricsRow>& rows, bool by_m, bool use_tau) {
  std::map<std::string, std::map<double, std::optional<double>>> cells;
  std::vector<double> keys;
  for (const auto& r : rows) {
    if (r.subreddit != "ALL") continue;
    const double key = by_m ? static_cast<double>(r.m) : r.delta_pred_days;
    cells[r.variant][key] = use_tau ? r.kendall_tau : std::optional<double>(r.mape);
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
  }
  std::sort(keys.begin(), keys.end());
  std::ostringstream out;
  out << "| variant |";
  for (double k : keys) out << ' ' << (by_m ? "m=" : "days=") << k << " |";
  out << "\n|---|";
  for (std::size_t i = 0; i < keys.size(); ++i) out << "---|";
  out << '\n';
  for (const auto& [variant, row] : cells) {
    out << "| " << variant << " |";
    for (double k : keys) {
      auto it = row.find(k);
      out << ' ' << (it == row.end() ? std::string("-") : format_number(it->second)) << " |";
    }
    out << '\n';
  }
  return out.str();
}

/// Per-submission absolute relative error against ground truth.
inline std::string scatter_csv(const std::vector<PredictionRecord>& records, double epsilon = 1e-7) {
  std::string out = "subreddit,count,y_true,y_hat,abs_rel_error\n";
  for (const auto& p : records) {
    out += p.subreddit + "," + std::to_string(p.count) + "," + format_number(p.y_true) + "," +
           format_number(p.y_hat) + "," + format_number(std::abs(p.y_true - p.y_hat) / (p.y_true + epsilon)) + "\n";
  }
  return out;
}

/// Error versus ground-truth chatter as a standalone SVG.
inline std::string scatter_svg(const std::vector<PredictionRecord>& records, double epsilon = 1e-7) {
  constexpr double W = 640;
  constexpr double H = 420;
  constexpr double pad = 50;
  double xmax = 1e-9;
  double ymax = 1e-9;
  std::vector<std::pair<double, double>> pts;
  for (const auto& p : records) {
    const double e = std::min(std::abs(p.y_true - p.y_hat) / (p.y_true + epsilon), 5.0);
    pts.emplace_back(p.y_true, e);
    xmax = std::max(xmax, p.y_true);
    ymax = std::max(ymax, e);
  }
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<line x1=\"" << pad << "\" y1=\"" << H - pad << "\" x2=\"" << W - pad << "\" y2=\"" << H - pad
      << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << pad << "\" y1=\"" << pad << "\" x2=\"" << pad << "\" y2=\"" << H - pad
      << "\" stroke=\"black\"/>\n"
      << "<text x=\"" << W / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">ground truth ln(1+C)</text>\n"
      << "<text x=\"14\" y=\"" << H / 2 << "\" transform=\"rotate(-90 14 " << H / 2
      << ")\" text-anchor=\"middle\">relative error (capped at 5)</text>\n";
  for (const auto& [x, y] : pts) {
    const double px = pad + (W - 2 * pad) * x / xmax;
    const double py = H - pad - (H - 2 * pad) * y / ymax;
    out << "<circle cx=\"" << format_number(px) << "\" cy=\"" << format_number(py)
        << "\" r=\"2\" fill=\"steelblue\" fill-opacity=\"0.5\"/>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace chatternet

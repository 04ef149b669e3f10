#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "chatternet/error.hpp"

namespace chatternet {

/// 100 * mean |y - yhat| / (y + eps), the percentage form of the training loss.
inline double mape(std::span<const double> y_true, std::span<const double> y_pred, double epsilon = 1e-7) {
  if (y_true.size() != y_pred.size()) throw DataError("mape: length mismatch");
  if (y_true.empty()) throw DataError("mape: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) s += std::abs(y_true[i] - y_pred[i]) / (y_true[i] + epsilon);
  return 100.0 * s / static_cast<double>(y_true.size());
}

namespace metrics_detail {

/// Number of pairs among runs of equal adjacent values in a sorted range.
template <typename It, typename Eq>
std::int64_t tied_pairs(It first, It last, Eq eq) {
  std::int64_t total = 0;
  while (first != last) {
    It run = first;
    std::int64_t len = 0;
    while (run != last && eq(*run, *first)) {
      ++run;
      ++len;
    }
    total += len * (len - 1) / 2;
    first = run;
  }
  return total;
}

/// Sorts v ascending and returns the number of inversions removed.
inline std::int64_t merge_count(std::vector<double>& v, std::vector<double>& buf, std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::int64_t swaps = merge_count(v, buf, lo, mid) + merge_count(v, buf, mid, hi);
  std::size_t i = lo;
  std::size_t j = mid;
  std::size_t k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      swaps += static_cast<std::int64_t>(mid - i);
      buf[k++] = v[j++];
    } else {
      buf[k++] = v[i++];
    }
  }
  while (i < mid) buf[k++] = v[i++];
  while (j < hi) buf[k++] = v[j++];
  std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo), buf.begin() + static_cast<std::ptrdiff_t>(hi),
            v.begin() + static_cast<std::ptrdiff_t>(lo));
  return swaps;
}

}  // namespace metrics_detail

/// Kendall tau-b in O(n log n) (Knight's method). Undefined, and returned
/// empty, when fewer than two samples are given or either side is constant.
inline std::optional<double> kendall_tau(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DataError("kendall_tau: length mismatch");
  const std::size_t n = x.size();
  if (n < 2) return std::nullopt;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return x[a] < x[b] || (x[a] == x[b] && y[a] < y[b]);
  });
  const auto n0 = static_cast<std::int64_t>(n) * static_cast<std::int64_t>(n - 1) / 2;
  const std::int64_t n1 = metrics_detail::tied_pairs(order.begin(), order.end(),
                                                     [&](std::size_t a, std::size_t b) { return x[a] == x[b]; });
  const std::int64_t n3 = metrics_detail::tied_pairs(
      order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] == x[b] && y[a] == y[b]; });
  std::vector<double> ys(n);
  for (std::size_t i = 0; i < n; ++i) ys[i] = y[order[i]];
  std::vector<double> buf(n);
  const std::int64_t swaps = metrics_detail::merge_count(ys, buf, 0, n);
  const std::int64_t n2 = metrics_detail::tied_pairs(ys.begin(), ys.end(), [](double a, double b) { return a == b; });
  const std::int64_t den_x = n0 - n1;
  const std::int64_t den_y = n0 - n2;
  if (den_x == 0 || den_y == 0) return std::nullopt;
  const std::int64_t concordant_minus_discordant = n0 - n1 - n2 + n3 - 2 * swaps;
  return static_cast<double>(concordant_minus_discordant) /
         std::sqrt(static_cast<double>(den_x) * static_cast<double>(den_y));
}

/// 1-based ranks with ties sharing their average rank.
inline std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && v[order[j]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = avg;
    i = j;
  }
  return ranks;
}

inline std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DataError("pearson: length mismatch");
  if (x.size() < 2) return std::nullopt;
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline std::optional<double> spearman_rho(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DataError("spearman_rho: length mismatch");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

/// floor(size / k): the growth step reached by a discussion of this size.
inline std::vector<std::int64_t> stepwise_labels(std::span<const std::int64_t> sizes, std::int64_t k = 10) {
  if (k < 1) throw ConfigError("stepwise_labels: k must be at least 1");
  std::vector<std::int64_t> out;
  out.reserve(sizes.size());
  for (auto s : sizes) {
    if (s < 0) throw DataError("stepwise_labels: negative size");
    out.push_back(s / k);
  }
  return out;
}

/// Comment count implied by a chatter prediction: round(exp(yhat) - 1), at least 0.
inline std::int64_t predicted_count(double y_hat) {
  return std::max<std::int64_t>(0, std::llround(std::expm1(y_hat)));
}

inline std::optional<double> stepwise_tau(std::span<const std::int64_t> true_counts,
                                          std::span<const std::int64_t> predicted_counts, std::int64_t k = 10) {
  const auto a = stepwise_labels(true_counts, k);
  const auto b = stepwise_labels(predicted_counts, k);
  std::vector<double> da(a.begin(), a.end());
  std::vector<double> db(b.begin(), b.end());
  return kendall_tau(da, db);
}

struct PredictionRecord {
  std::string subreddit;
  double y_true = 0.0;
  double y_hat = 0.0;
  std::int64_t count = 0;
};

struct MetricReport {
  std::size_t n = 0;
  double mape = 0.0;      // on y = ln(1 + C)
  double mape_raw = 0.0;  // on raw counts, predicted count exp(yhat) - 1
  std::optional<double> kendall_tau;
  std::optional<double> spearman_rho;
  std::optional<double> stepwise_tau;
  std::map<std::string, MetricReport> per_subreddit;
};

inline MetricReport evaluate_records(const std::vector<PredictionRecord>& records, double epsilon = 1e-7,
                                     std::int64_t k = 10, bool per_subreddit = true) {
  if (records.empty()) throw DataError("no predictions to evaluate");
  MetricReport r;
  r.n = records.size();
  std::vector<double> y;
  std::vector<double> yh;
  std::vector<double> c;
  std::vector<double> ch;
  std::vector<std::int64_t> counts;
  std::vector<std::int64_t> pred_counts;
  for (const auto& p : records) {
    if (p.subreddit.empty()) throw DataError("prediction without subreddit");
    y.push_back(p.y_true);
    yh.push_back(p.y_hat);
    c.push_back(static_cast<double>(p.count));
    ch.push_back(std::max(0.0, std::expm1(p.y_hat)));
    counts.push_back(p.count);
    pred_counts.push_back(predicted_count(p.y_hat));
  }
  r.mape = mape(y, yh, epsilon);
  r.mape_raw = mape(c, ch, epsilon);
  r.kendall_tau = kendall_tau(y, yh);
  r.spearman_rho = spearman_rho(y, yh);
  r.stepwise_tau = stepwise_tau(counts, pred_counts, k);
  if (per_subreddit) {
    std::map<std::string, std::vector<PredictionRecord>> groups;
    for (const auto& p : records) groups[p.subreddit].push_back(p);
    for (const auto& [name, group] : groups) {
      r.per_subreddit.emplace(name, evaluate_records(group, epsilon, k, false));
    }
  }
  return r;
}

}  // namespace chatternet

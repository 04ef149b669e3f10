#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "chatternet/error.hpp"
#include "chatternet/text.hpp"

namespace chatternet {

using Timestamp = std::int64_t;  // unix seconds

struct NewsItem {
  std::string id;
  Timestamp timestamp = 0;
  std::string title;
  std::string body;
  std::string source;

  std::string text_digest() const { return title + "\n" + body; }
};

struct SubmissionItem {
  std::string id;
  Timestamp timestamp = 0;
  std::string subreddit;
  std::string title;
  std::string selftext;

  std::string text_digest() const { return title + "\n" + selftext; }
};

struct CommentEvent {
  std::string id;
  Timestamp timestamp = 0;
  std::string submission_id;
  std::string subreddit;
};

/// Interval k covers (origin + (k-1)*delta_obs, origin + k*delta_obs].
struct IntervalClock {
  Timestamp origin = 0;
  Timestamp delta_obs = 60;

  IntervalClock() = default;
  IntervalClock(Timestamp origin_, Timestamp delta) : origin(origin_), delta_obs(delta) {
    if (delta_obs <= 0) throw ConfigError("delta_obs must be positive");
  }

  std::int64_t index_of(Timestamp t) const {
    const Timestamp d = t - origin;
    // ceil(d / delta) for either sign of d.
    const std::int64_t q = d / delta_obs;
    return (d % delta_obs != 0 && d > 0) ? q + 1 : q;
  }
  Timestamp start(std::int64_t k) const { return origin + (k - 1) * delta_obs; }
  Timestamp end(std::int64_t k) const { return origin + k * delta_obs; }
};

struct ObservationBins {
  std::vector<std::int64_t> counts;

  std::size_t m() const { return counts.size(); }
  std::int64_t total() const {
    std::int64_t s = 0;
    for (auto c : counts) s += c;
    return s;
  }
};

struct ChatterTarget {
  std::int64_t count = 0;  // C
  double y = 0.0;          // ln(1 + C)
  Timestamp delta_pred = 30 * 86400;
  bool truncated = false;  // prediction window runs past the end of the corpus
};

struct SubredditActivity {
  std::string subreddit;
  std::int64_t interval = 0;
  std::int64_t comment_count = 0;
  double normalized_rate = 0.0;
};

template <typename Event>
struct Partition {
  std::map<std::int64_t, std::vector<Event>> groups;
  std::vector<std::string> diagnostics;
};

/// Stable sort by (timestamp, id).
template <typename Event>
void sort_events(std::vector<Event>& events) {
  std::stable_sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
    return a.timestamp != b.timestamp ? a.timestamp < b.timestamp : a.id < b.id;
  });
}

/// Groups events by half-open interval; records with negative timestamps are
/// rejected with a diagnostic.
template <typename Event>
Partition<Event> partition_intervals(std::vector<Event> events, const IntervalClock& clock) {
  Partition<Event> out;
  sort_events(events);
  for (auto& e : events) {
    if (e.timestamp < 0) {
      out.diagnostics.push_back("rejected " + e.id + ": negative timestamp " +
                                std::to_string(e.timestamp));
      continue;
    }
    out.groups[clock.index_of(e.timestamp)].push_back(std::move(e));
  }
  return out;
}

/// counts[l-1] = #{c : t_j + (l-1)*delta < c <= t_j + l*delta}.
inline ObservationBins bin_comments(Timestamp submission_time, std::span<const Timestamp> comment_times,
                                    std::size_t m, Timestamp delta_obs) {
  ObservationBins bins;
  bins.counts.assign(m, 0);
  if (m == 0) return bins;
  for (Timestamp c : comment_times) {
    const Timestamp d = c - submission_time;
    if (d <= 0) continue;
    const auto l = static_cast<std::size_t>((d + delta_obs - 1) / delta_obs);
    if (l >= 1 && l <= m) ++bins.counts[l - 1];
  }
  return bins;
}

/// C counts comments in (t_j + m*delta_obs, t_j + delta_pred]. When the
/// window passes corpus_end the count is truncated there and flagged.
inline ChatterTarget chatter_target(Timestamp submission_time, std::span<const Timestamp> comment_times,
                                    std::size_t m, Timestamp delta_obs, Timestamp delta_pred,
                                    std::optional<Timestamp> corpus_end = std::nullopt) {
  const Timestamp window_start = submission_time + static_cast<Timestamp>(m) * delta_obs;
  const Timestamp window_end = submission_time + delta_pred;
  if (static_cast<Timestamp>(m) * delta_obs >= delta_pred) {
    throw ConfigError("observation window (m * delta_obs) must be shorter than delta_pred");
  }
  ChatterTarget target;
  target.delta_pred = delta_pred;
  for (Timestamp c : comment_times) {
    if (c > window_start && c <= window_end) ++target.count;
  }
  target.truncated = corpus_end.has_value() && window_end > *corpus_end;
  target.y = std::log1p(static_cast<double>(target.count));
  return target;
}

/// Activity of a subreddit in the interval preceding k; k = 0 is a cold start.
inline SubredditActivity subreddit_rate(const std::string& subreddit, std::int64_t k,
                                        std::span<const CommentEvent> comments,
                                        const IntervalClock& clock) {
  SubredditActivity a{subreddit, k, 0, 0.0};
  if (k <= 0) return a;
  for (const auto& c : comments) {
    if (c.subreddit == subreddit && clock.index_of(c.timestamp) == k - 1) ++a.comment_count;
  }
  a.normalized_rate = std::log1p(static_cast<double>(a.comment_count));
  return a;
}

/// Per-(subreddit, interval) comment counts for repeated rate lookups.
class SubredditActivityIndex {
 public:
  SubredditActivityIndex(std::span<const CommentEvent> comments, const IntervalClock& clock) {
    for (const auto& c : comments) ++counts_[c.subreddit][clock.index_of(c.timestamp)];
  }

  SubredditActivity rate(const std::string& subreddit, std::int64_t k) const {
    SubredditActivity a{subreddit, k, 0, 0.0};
    if (k <= 0) return a;
    if (auto s = counts_.find(subreddit); s != counts_.end()) {
      if (auto it = s->second.find(k - 1); it != s->second.end()) a.comment_count = it->second;
    }
    a.normalized_rate = std::log1p(static_cast<double>(a.comment_count));
    return a;
  }

 private:
  std::unordered_map<std::string, std::unordered_map<std::int64_t, std::int64_t>> counts_;
};

// ---------------------------------------------------------------------------
// JSONL interchange

enum class StreamKind { news, submission, comment };

inline std::string to_string(StreamKind k) {
  switch (k) {
    case StreamKind::news: return "news";
    case StreamKind::submission: return "submission";
    case StreamKind::comment: return "comment";
  }
  return "?";
}

inline nlohmann::json to_json(const NewsItem& n) {
  return {{"id", n.id}, {"timestamp", n.timestamp}, {"title", n.title}, {"body", n.body},
          {"source", n.source}};
}
inline nlohmann::json to_json(const SubmissionItem& s) {
  return {{"id", s.id}, {"timestamp", s.timestamp}, {"subreddit", s.subreddit},
          {"title", s.title}, {"selftext", s.selftext}};
}
inline nlohmann::json to_json(const CommentEvent& c) {
  return {{"id", c.id}, {"timestamp", c.timestamp}, {"submission_id", c.submission_id},
          {"subreddit", c.subreddit}};
}

namespace detail {

inline std::optional<std::string> require_string(const nlohmann::json& j, const char* key,
                                                 std::string& why) {
  auto it = j.find(key);
  if (it == j.end()) {
    why = std::string("missing required field `") + key + "`";
    return std::nullopt;
  }
  if (!it->is_string()) {
    why = std::string("field `") + key + "` is not a string";
    return std::nullopt;
  }
  return it->get<std::string>();
}

inline std::optional<Timestamp> require_timestamp(const nlohmann::json& j, std::string& why) {
  auto it = j.find("timestamp");
  if (it == j.end()) {
    why = "missing required field `timestamp`";
    return std::nullopt;
  }
  if (!it->is_number_integer()) {
    why = "field `timestamp` is not an integer";
    return std::nullopt;
  }
  const auto t = it->get<Timestamp>();
  if (t < 0) {
    why = "negative timestamp";
    return std::nullopt;
  }
  return t;
}

inline std::optional<NewsItem> parse_record(const nlohmann::json& j, std::string& why, NewsItem*) {
  auto id = require_string(j, "id", why);
  auto ts = id ? require_timestamp(j, why) : std::nullopt;
  auto title = ts ? require_string(j, "title", why) : std::nullopt;
  auto body = title ? require_string(j, "body", why) : std::nullopt;
  auto source = body ? require_string(j, "source", why) : std::nullopt;
  if (!source) return std::nullopt;
  if (normalize(*title).empty()) {
    why = "title is empty after normalization";
    return std::nullopt;
  }
  return NewsItem{*id, *ts, *title, *body, *source};
}

inline std::optional<SubmissionItem> parse_record(const nlohmann::json& j, std::string& why,
                                                  SubmissionItem*) {
  auto id = require_string(j, "id", why);
  auto ts = id ? require_timestamp(j, why) : std::nullopt;
  auto sub = ts ? require_string(j, "subreddit", why) : std::nullopt;
  auto title = sub ? require_string(j, "title", why) : std::nullopt;
  auto self = title ? require_string(j, "selftext", why) : std::nullopt;
  if (!self) return std::nullopt;
  return SubmissionItem{*id, *ts, *sub, *title, *self};
}

inline std::optional<CommentEvent> parse_record(const nlohmann::json& j, std::string& why,
                                                CommentEvent*) {
  auto id = require_string(j, "id", why);
  auto ts = id ? require_timestamp(j, why) : std::nullopt;
  auto link = ts ? require_string(j, "submission_id", why) : std::nullopt;
  auto sub = link ? require_string(j, "subreddit", why) : std::nullopt;
  if (!sub) return std::nullopt;
  return CommentEvent{*id, *ts, *link, *sub};
}

}  // namespace detail

template <typename Record>
struct IngestResult {
  std::vector<Record> records;  // sorted by (timestamp, id)
  std::size_t skipped = 0;
  std::size_t filtered = 0;  // valid, but outside the selected subreddits
  std::vector<std::string> diagnostics;
};

/// Reads one JSON object per line. Malformed or schema-violating lines are
/// skipped and reported; more than half of the nonblank lines failing is a
/// hard DataError.
template <typename Record>
IngestResult<Record> ingest_jsonl(const std::string& path,
                                  const std::set<std::string>* allowed_subreddits = nullptr) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path);
  IngestResult<Record> out;
  std::string line;
  std::size_t line_no = 0;
  std::size_t nonblank = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    ++nonblank;
    auto j = nlohmann::json::parse(line, nullptr, false);
    std::string why;
    std::optional<Record> rec;
    if (j.is_discarded() || !j.is_object()) {
      why = "not a JSON object";
    } else {
      rec = detail::parse_record(j, why, static_cast<Record*>(nullptr));
    }
    if (!rec) {
      ++out.skipped;
      out.diagnostics.push_back(path + ":" + std::to_string(line_no) + ": " + why);
      continue;
    }
    if constexpr (requires { rec->subreddit; }) {
      if (allowed_subreddits != nullptr && !allowed_subreddits->empty() &&
          allowed_subreddits->count(rec->subreddit) == 0) {
        ++out.filtered;
        continue;
      }
    }
    out.records.push_back(std::move(*rec));
  }
  if (nonblank > 0 && 2 * out.skipped > nonblank) {
    throw DataError(path + ": " + std::to_string(out.skipped) + " of " +
                    std::to_string(nonblank) + " lines malformed");
  }
  sort_events(out.records);
  return out;
}

template <typename Record>
void write_jsonl(const std::string& path, std::span<const Record> records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& r : records) out << to_json(r).dump() << '\n';
  if (!out) throw DataError("failed writing " + path);
}

template <typename Record>
void write_jsonl(const std::string& path, const std::vector<Record>& records) {
  write_jsonl(path, std::span<const Record>(records));
}

/// Drops comments timestamped before their submission (clock skew in dumps).
/// Comments whose submission is unknown are kept: they still count towards
/// subreddit activity.
inline std::vector<std::string> drop_premature_comments(
    const std::vector<SubmissionItem>& submissions, std::vector<CommentEvent>& comments) {
  std::unordered_map<std::string, Timestamp> posted;
  for (const auto& s : submissions) posted.emplace(s.id, s.timestamp);
  std::vector<std::string> diagnostics;
  std::erase_if(comments, [&](const CommentEvent& c) {
    auto it = posted.find(c.submission_id);
    if (it == posted.end() || c.timestamp >= it->second) return false;
    diagnostics.push_back("dropped comment " + c.id + ": precedes submission " + c.submission_id);
    return true;
  });
  return diagnostics;
}

}  // namespace chatternet

#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "chatternet/error.hpp"
#include "chatternet/model.hpp"
#include "chatternet/stream.hpp"
#include "chatternet/text.hpp"

namespace chatternet {

struct Corpus {
  std::vector<NewsItem> news;
  std::vector<SubmissionItem> submissions;
  std::vector<CommentEvent> comments;
};

struct DataConfig {
  Timestamp delta_obs = 60;
  Timestamp delta_pred = 30 * 86400;
  int m = 0;
  // Split boundaries as fractions of the submission time span, unless given
  // explicitly. Boundaries are snapped to interval ends.
  double train_fraction = 0.7;
  double val_fraction = 0.15;
  std::optional<Timestamp> train_end;
  std::optional<Timestamp> val_end;
  int warmup_intervals = 60;
  std::vector<std::string> subreddits;  // empty: sorted names found in the data
  int submission_len = 50;
  int news_len = 100;
  double max_df = 0.8;
  std::int64_t min_df = 5;
};

inline void to_json(nlohmann::json& j, const DataConfig& c) {
  j = nlohmann::json{{"delta_obs", c.delta_obs},
                     {"delta_pred", c.delta_pred},
                     {"m", c.m},
                     {"train_fraction", c.train_fraction},
                     {"val_fraction", c.val_fraction},
                     {"warmup_intervals", c.warmup_intervals},
                     {"subreddits", c.subreddits},
                     {"submission_len", c.submission_len},
                     {"news_len", c.news_len},
                     {"max_df", c.max_df},
                     {"min_df", c.min_df}};
  if (c.train_end) j["train_end"] = *c.train_end;
  if (c.val_end) j["val_end"] = *c.val_end;
}

inline void from_json(const nlohmann::json& j, DataConfig& c) {
  c.delta_obs = j.value("delta_obs", c.delta_obs);
  c.delta_pred = j.value("delta_pred", c.delta_pred);
  c.m = j.value("m", c.m);
  c.train_fraction = j.value("train_fraction", c.train_fraction);
  c.val_fraction = j.value("val_fraction", c.val_fraction);
  if (j.contains("train_end")) c.train_end = j.at("train_end").get<Timestamp>();
  if (j.contains("val_end")) c.val_end = j.at("val_end").get<Timestamp>();
  c.warmup_intervals = j.value("warmup_intervals", c.warmup_intervals);
  c.subreddits = j.value("subreddits", c.subreddits);
  c.submission_len = j.value("submission_len", c.submission_len);
  c.news_len = j.value("news_len", c.news_len);
  c.max_df = j.value("max_df", c.max_df);
  c.min_df = j.value("min_df", c.min_df);
}

enum class Split { train, validation, test };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "?";
}

/// Everything the model needs about one submission.
struct Example {
  std::size_t submission = 0;  // index into Dataset::submissions()
  int subreddit = 0;
  std::int64_t interval = 0;
  double rate = 0.0;
  ObservationBins bins;
  ChatterTarget target;
  Split split = Split::train;
};

/// Items of one nonempty interval, as indices into the encoded streams.
struct TimelineEntry {
  std::int64_t interval = 0;
  std::vector<std::size_t> news;
  std::vector<std::size_t> submissions;
};

/// Encoded, interval-indexed view of a corpus. The vocabulary is built from
/// the training split unless one is supplied.
class Dataset {
 public:
  static Dataset build(Corpus corpus, const DataConfig& config,
                       std::optional<Vocabulary> vocab = std::nullopt) {
    if (config.m < 0) throw ConfigError("m must be nonnegative");
    if (config.submission_len <= 0 || config.news_len <= 0) {
      throw ConfigError("text lengths must be positive");
    }
    if (corpus.submissions.empty()) throw DataError("corpus has no submissions");
    Dataset d;
    d.config_ = config;
    sort_events(corpus.news);
    sort_events(corpus.submissions);
    sort_events(corpus.comments);
    d.diagnostics_ = drop_premature_comments(corpus.submissions, corpus.comments);

    Timestamp first = corpus.submissions.front().timestamp;
    Timestamp last = corpus.submissions.back().timestamp;
    Timestamp corpus_end = last;
    if (!corpus.news.empty()) {
      first = std::min(first, corpus.news.front().timestamp);
      corpus_end = std::max(corpus_end, corpus.news.back().timestamp);
    }
    if (!corpus.comments.empty()) corpus_end = std::max(corpus_end, corpus.comments.back().timestamp);
    d.corpus_end_ = corpus_end;
    d.clock_ = IntervalClock(first, config.delta_obs);

    const Timestamp span_start = corpus.submissions.front().timestamp;
    const double span = static_cast<double>(last - span_start);
    auto snap = [&](Timestamp t) { return d.clock_.end(d.clock_.index_of(t)); };
    d.train_end_ = snap(config.train_end.value_or(
        span_start + static_cast<Timestamp>(span * config.train_fraction)));
    d.val_end_ = snap(config.val_end.value_or(
        span_start + static_cast<Timestamp>(span * (config.train_fraction + config.val_fraction))));
    if (d.val_end_ < d.train_end_) throw ConfigError("validation end precedes training end");

    if (config.subreddits.empty()) {
      std::set<std::string> names;
      for (const auto& s : corpus.submissions) names.insert(s.subreddit);
      d.subreddits_.assign(names.begin(), names.end());
    } else {
      d.subreddits_ = config.subreddits;
    }
    std::unordered_map<std::string, int> sub_index;
    for (std::size_t i = 0; i < d.subreddits_.size(); ++i) {
      sub_index.emplace(d.subreddits_[i], static_cast<int>(i));
    }

    std::vector<std::vector<std::string>> news_tokens;
    std::vector<std::vector<std::string>> sub_tokens;
    news_tokens.reserve(corpus.news.size());
    sub_tokens.reserve(corpus.submissions.size());
    for (const auto& n : corpus.news) news_tokens.push_back(normalize(n.text_digest()));
    for (const auto& s : corpus.submissions) sub_tokens.push_back(normalize(s.text_digest()));

    if (vocab) {
      d.vocab_ = std::move(*vocab);
    } else {
      std::vector<std::vector<std::string>> training_docs;
      for (std::size_t i = 0; i < corpus.news.size(); ++i) {
        if (corpus.news[i].timestamp <= d.train_end_) training_docs.push_back(news_tokens[i]);
      }
      for (std::size_t i = 0; i < corpus.submissions.size(); ++i) {
        if (corpus.submissions[i].timestamp <= d.train_end_) training_docs.push_back(sub_tokens[i]);
      }
      if (training_docs.empty()) throw DataError("training split is empty");
      d.vocab_ = build_vocab(training_docs, config.max_df, config.min_df);
    }
    for (const auto& t : news_tokens) d.news_.push_back(encode(t, d.vocab_, static_cast<std::size_t>(config.news_len)));
    for (const auto& t : sub_tokens) {
      d.submission_texts_.push_back(encode(t, d.vocab_, static_cast<std::size_t>(config.submission_len)));
    }

    std::unordered_map<std::string, std::vector<Timestamp>> comment_times;
    for (const auto& c : corpus.comments) comment_times[c.submission_id].push_back(c.timestamp);
    const SubredditActivityIndex activity(corpus.comments, d.clock_);

    std::map<std::int64_t, TimelineEntry> timeline;
    for (std::size_t i = 0; i < corpus.news.size(); ++i) {
      const auto k = d.clock_.index_of(corpus.news[i].timestamp);
      timeline[k].interval = k;
      timeline[k].news.push_back(i);
    }
    static const std::vector<Timestamp> kNoComments;
    for (std::size_t i = 0; i < corpus.submissions.size(); ++i) {
      const auto& s = corpus.submissions[i];
      auto it = sub_index.find(s.subreddit);
      if (it == sub_index.end()) {
        throw DataError("submission " + s.id + " has unconfigured subreddit `" + s.subreddit + "`");
      }
      Example ex;
      ex.submission = i;
      ex.subreddit = it->second;
      ex.interval = d.clock_.index_of(s.timestamp);
      ex.rate = activity.rate(s.subreddit, ex.interval).normalized_rate;
      auto ct = comment_times.find(s.id);
      const auto& times = ct == comment_times.end() ? kNoComments : ct->second;
      ex.bins = bin_comments(s.timestamp, times, static_cast<std::size_t>(config.m), config.delta_obs);
      ex.target = chatter_target(s.timestamp, times, static_cast<std::size_t>(config.m),
                                 config.delta_obs, config.delta_pred, corpus_end);
      ex.split = s.timestamp <= d.train_end_ ? Split::train
                 : s.timestamp <= d.val_end_ ? Split::validation
                                             : Split::test;
      d.examples_.push_back(std::move(ex));
      timeline[d.examples_.back().interval].interval = d.examples_.back().interval;
      timeline[d.examples_.back().interval].submissions.push_back(i);
    }
    for (auto& [k, e] : timeline) d.timeline_.push_back(std::move(e));
    d.corpus_ = std::move(corpus);
    return d;
  }

  const DataConfig& config() const { return config_; }
  const Vocabulary& vocabulary() const { return vocab_; }
  const IntervalClock& clock() const { return clock_; }
  const std::vector<std::string>& subreddits() const { return subreddits_; }
  const std::vector<TokenSequence>& news_texts() const { return news_; }
  const std::vector<TokenSequence>& submission_texts() const { return submission_texts_; }
  const std::vector<Example>& examples() const { return examples_; }
  const std::vector<TimelineEntry>& timeline() const { return timeline_; }
  const Corpus& corpus() const { return corpus_; }
  const std::vector<std::string>& diagnostics() const { return diagnostics_; }
  Timestamp train_end() const { return train_end_; }
  Timestamp val_end() const { return val_end_; }
  Timestamp corpus_end() const { return corpus_end_; }

  std::size_t count(Split s) const {
    return static_cast<std::size_t>(std::count_if(
        examples_.begin(), examples_.end(), [s](const Example& e) { return e.split == s; }));
  }

  /// First interval index whose submissions belong to the split.
  std::int64_t first_interval(Split s) const {
    switch (s) {
      case Split::train: return timeline_.empty() ? 0 : timeline_.front().interval;
      case Split::validation: return clock_.index_of(train_end_) + 1;
      case Split::test: return clock_.index_of(val_end_) + 1;
    }
    return 0;
  }

  /// Items of a timeline entry in the form the model consumes.
  IntervalItems items(const TimelineEntry& e) const {
    IntervalItems it;
    for (auto i : e.news) it.news.emplace_back(news_[i].ids);
    for (auto i : e.submissions) {
      it.submissions.emplace_back(submission_texts_[i].ids);
      it.submission_subreddits.push_back(examples_[i].subreddit);
    }
    return it;
  }

  SubmissionInput input(const Example& ex) const {
    return SubmissionInput{submission_texts_[ex.submission].ids, ex.subreddit, ex.rate, ex.bins};
  }

  /// Corpus-wide document collection used for embedding pretraining (the
  /// training split of both streams).
  std::vector<TokenSequence> training_texts() const {
    std::vector<TokenSequence> out;
    for (std::size_t i = 0; i < news_.size(); ++i) {
      if (corpus_.news[i].timestamp <= train_end_) out.push_back(news_[i]);
    }
    for (std::size_t i = 0; i < submission_texts_.size(); ++i) {
      if (examples_[i].split == Split::train) out.push_back(submission_texts_[i]);
    }
    return out;
  }

 private:
  DataConfig config_;
  Corpus corpus_;
  Vocabulary vocab_;
  IntervalClock clock_;
  std::vector<std::string> subreddits_;
  std::vector<TokenSequence> news_;
  std::vector<TokenSequence> submission_texts_;
  std::vector<Example> examples_;
  std::vector<TimelineEntry> timeline_;
  std::vector<std::string> diagnostics_;
  Timestamp train_end_ = 0;
  Timestamp val_end_ = 0;
  Timestamp corpus_end_ = 0;
};

}  // namespace chatternet

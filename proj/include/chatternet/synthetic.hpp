#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "chatternet/dataset.hpp"
#include "chatternet/error.hpp"
#include "chatternet/rng.hpp"
#include "chatternet/stream.hpp"

// Coupled news / submission / comment streams. News arrives per topic as a
// piecewise-constant Poisson process with bursts; submissions pick topics
// in proportion to recent news and submission volume, and draw a Poisson
// number of comments whose mean grows with the news share of their topic.

namespace chatternet {

struct Burst {
  int topic = 0;
  Timestamp start = 0;  // seconds from the stream start
  Timestamp duration = 0;
  double multiplier = 1.0;
};

struct SynthConfig {
  int topic_count = 8;
  int vocab_per_topic = 40;
  int shared_words = 20;  // topic-free filler words
  int subreddit_count = 4;
  Timestamp start = 1538352000;
  Timestamp horizon = 84 * 3600;
  double news_rate = 2.0;  // per topic per hour, outside bursts
  // Explicit bursts; when empty, burst_count random bursts are drawn.
  std::vector<Burst> bursts;
  int burst_count = 12;
  Timestamp burst_duration = 6 * 3600;
  double burst_multiplier = 15.0;
  std::vector<double> submission_rate = {15.0};  // per subreddit per hour; last value repeats
  std::vector<double> base_mu = {12.0, 16.0, 20.0, 28.0};  // per subreddit; last value repeats
  double beta_exo = 5.0;
  double beta_endo = 0.0;
  Timestamp half_life = 3 * 3600;
  Timestamp comment_delay = 4 * 3600;  // mean of exponential delays
  int title_words = 8;
  int body_words = 12;
  int news_title_words = 8;
  int news_body_words = 20;
  double topic_word_fraction = 0.7;  // rest are filler
  std::uint64_t seed = 7;

  double rate_for(int subreddit) const { return pick(submission_rate, subreddit); }
  double mu_for(int subreddit) const { return pick(base_mu, subreddit); }

  void validate() const {
    if (topic_count < 1 || vocab_per_topic < 1 || subreddit_count < 1) {
      throw ConfigError("synthetic: topic, vocabulary and subreddit counts must be positive");
    }
    if (horizon <= 0) throw ConfigError("synthetic: horizon must be positive");
    if (half_life <= 0 || comment_delay <= 0) throw ConfigError("synthetic: time scales must be positive");
    if (news_rate < 0 || beta_exo < 0 || beta_endo < 0 || burst_multiplier < 0 || burst_count < 0) {
      throw ConfigError("synthetic: rates and couplings must be nonnegative");
    }
    if (submission_rate.empty() || base_mu.empty()) throw ConfigError("synthetic: empty rate lists");
    for (double r : submission_rate) {
      if (r < 0) throw ConfigError("synthetic: submission rates must be nonnegative");
    }
    for (double m : base_mu) {
      if (!(m > 0)) throw ConfigError("synthetic: base_mu must be positive");
    }
    if (topic_word_fraction < 0 || topic_word_fraction > 1) {
      throw ConfigError("synthetic: topic_word_fraction must lie in [0, 1]");
    }
    for (const auto& b : bursts) {
      if (b.topic < 0 || b.topic >= topic_count || b.duration < 0 || b.multiplier < 0) {
        throw ConfigError("synthetic: invalid burst");
      }
    }
  }

 private:
  static double pick(const std::vector<double>& v, int i) {
    return v[std::min<std::size_t>(static_cast<std::size_t>(i), v.size() - 1)];
  }
};

inline void to_json(nlohmann::json& j, const Burst& b) {
  j = nlohmann::json{{"topic", b.topic}, {"start", b.start}, {"duration", b.duration}, {"multiplier", b.multiplier}};
}

inline void from_json(const nlohmann::json& j, Burst& b) {
  b.topic = j.at("topic").get<int>();
  b.start = j.at("start").get<Timestamp>();
  b.duration = j.at("duration").get<Timestamp>();
  b.multiplier = j.value("multiplier", 1.0);
}

inline void to_json(nlohmann::json& j, const SynthConfig& c) {
  j = nlohmann::json{{"topic_count", c.topic_count},
                     {"vocab_per_topic", c.vocab_per_topic},
                     {"shared_words", c.shared_words},
                     {"subreddit_count", c.subreddit_count},
                     {"start", c.start},
                     {"horizon", c.horizon},
                     {"news_rate", c.news_rate},
                     {"bursts", c.bursts},
                     {"burst_count", c.burst_count},
                     {"burst_duration", c.burst_duration},
                     {"burst_multiplier", c.burst_multiplier},
                     {"submission_rate", c.submission_rate},
                     {"base_mu", c.base_mu},
                     {"beta_exo", c.beta_exo},
                     {"beta_endo", c.beta_endo},
                     {"half_life", c.half_life},
                     {"comment_delay", c.comment_delay},
                     {"title_words", c.title_words},
                     {"body_words", c.body_words},
                     {"news_title_words", c.news_title_words},
                     {"news_body_words", c.news_body_words},
                     {"topic_word_fraction", c.topic_word_fraction},
                     {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, SynthConfig& c) {
  const SynthConfig d;
  c.topic_count = j.value("topic_count", d.topic_count);
  c.vocab_per_topic = j.value("vocab_per_topic", d.vocab_per_topic);
  c.shared_words = j.value("shared_words", d.shared_words);
  c.subreddit_count = j.value("subreddit_count", d.subreddit_count);
  c.start = j.value("start", d.start);
  c.horizon = j.value("horizon", d.horizon);
  c.news_rate = j.value("news_rate", d.news_rate);
  c.bursts = j.value("bursts", d.bursts);
  c.burst_count = j.value("burst_count", d.burst_count);
  c.burst_duration = j.value("burst_duration", d.burst_duration);
  c.burst_multiplier = j.value("burst_multiplier", d.burst_multiplier);
  c.submission_rate = j.value("submission_rate", d.submission_rate);
  c.base_mu = j.value("base_mu", d.base_mu);
  c.beta_exo = j.value("beta_exo", d.beta_exo);
  c.beta_endo = j.value("beta_endo", d.beta_endo);
  c.half_life = j.value("half_life", d.half_life);
  c.comment_delay = j.value("comment_delay", d.comment_delay);
  c.title_words = j.value("title_words", d.title_words);
  c.body_words = j.value("body_words", d.body_words);
  c.news_title_words = j.value("news_title_words", d.news_title_words);
  c.news_body_words = j.value("news_body_words", d.news_body_words);
  c.topic_word_fraction = j.value("topic_word_fraction", d.topic_word_fraction);
  c.seed = j.value("seed", d.seed);
}

/// Generator-side facts about each submission, aligned with
/// SyntheticCorpus::corpus.submissions.
struct SubmissionTruth {
  int topic = 0;
  double news_share = 0.0;  // decayed news volume on the topic over all topics
  double expected_comments = 0.0;
};

struct SyntheticCorpus {
  Corpus corpus;
  std::vector<SubmissionTruth> truth;
  std::vector<std::string> subreddits;
};

namespace synth_detail {

/// Pronounceable letters-only pseudo-words, unique across the whole set.
inline std::vector<std::vector<std::string>> make_vocabularies(int topics, int per_topic, int shared,
                                                               CounterRng rng) {
  static constexpr const char* kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r",
                                            "s", "t", "v", "z", "br", "kr", "st", "tr"};
  static constexpr const char* kVowels[] = {"a", "e", "i", "o", "u", "ai", "ou"};
  std::set<std::string> used;
  auto fresh = [&] {
    for (;;) {
      std::string w;
      for (int s = 0; s < 3; ++s) {
        w += kOnsets[rng.below(std::size(kOnsets))];
        w += kVowels[rng.below(std::size(kVowels))];
      }
      if (used.insert(w).second) return w;
    }
  };
  std::vector<std::vector<std::string>> out(static_cast<std::size_t>(topics) + 1);
  for (int t = 0; t < topics; ++t) {
    for (int i = 0; i < per_topic; ++i) out[static_cast<std::size_t>(t)].push_back(fresh());
  }
  for (int i = 0; i < shared; ++i) out.back().push_back(fresh());
  return out;
}

/// Exponentially decayed per-topic volume.
class DecayedMass {
 public:
  DecayedMass(int topics, double half_life) : mass_(static_cast<std::size_t>(topics), 0.0),
                                              rate_(std::log(2.0) / half_life) {}

  void advance(double t) {
    if (t <= now_) return;
    const double f = std::exp(-rate_ * (t - now_));
    for (double& m : mass_) m *= f;
    now_ = t;
  }
  void add(int topic) { mass_[static_cast<std::size_t>(topic)] += 1.0; }

  double share(int topic) const {
    double total = 0.0;
    for (double m : mass_) total += m;
    return total > 0.0 ? mass_[static_cast<std::size_t>(topic)] / total : 0.0;
  }

 private:
  std::vector<double> mass_;
  double rate_;
  double now_ = 0.0;
};

}  // namespace synth_detail

inline std::vector<Burst> burst_schedule(const SynthConfig& c) {
  if (!c.bursts.empty()) return c.bursts;
  CounterRng rng(c.seed, 1);
  std::vector<Burst> out;
  for (int i = 0; i < c.burst_count; ++i) {
    Burst b;
    b.topic = static_cast<int>(rng.below(static_cast<std::uint64_t>(c.topic_count)));
    b.start = static_cast<Timestamp>(rng.uniform() * static_cast<double>(std::max<Timestamp>(1, c.horizon - c.burst_duration)));
    b.duration = c.burst_duration;
    b.multiplier = c.burst_multiplier;
    out.push_back(b);
  }
  std::sort(out.begin(), out.end(), [](const Burst& a, const Burst& b) { return a.start < b.start; });
  return out;
}

/// News intensity of a topic (per second) at offset t.
inline double news_intensity(const SynthConfig& c, const std::vector<Burst>& bursts, int topic, double t) {
  double rate = c.news_rate;
  for (const auto& b : bursts) {
    if (b.topic == topic && t >= static_cast<double>(b.start) && t < static_cast<double>(b.start + b.duration)) {
      rate += c.news_rate * (b.multiplier - 1.0);
    }
  }
  return std::max(0.0, rate) / 3600.0;
}

inline SyntheticCorpus generate(const SynthConfig& c) {
  c.validate();
  const auto vocab = synth_detail::make_vocabularies(c.topic_count, c.vocab_per_topic, c.shared_words,
                                                     CounterRng(c.seed, 0));
  const auto bursts = burst_schedule(c);
  SyntheticCorpus out;
  for (int s = 0; s < c.subreddit_count; ++s) {
    char name[16];
    std::snprintf(name, sizeof(name), "sub%02d", s);
    out.subreddits.emplace_back(name);
  }

  CounterRng text_rng(c.seed, 2);
  auto sentence = [&](int topic, int words) {
    std::string s;
    for (int i = 0; i < words; ++i) {
      const bool topical = text_rng.uniform() < c.topic_word_fraction || vocab.back().empty();
      const auto& pool = topical ? vocab[static_cast<std::size_t>(topic)] : vocab.back();
      if (!s.empty()) s += ' ';
      s += pool[text_rng.below(pool.size())];
    }
    return s;
  };

  // News: each topic's process is simulated over segments of constant rate.
  struct Arrival {
    double t;
    int topic;
  };
  std::vector<Arrival> news_times;
  CounterRng news_rng(c.seed, 3);
  for (int z = 0; z < c.topic_count; ++z) {
    std::vector<double> cuts = {0.0, static_cast<double>(c.horizon)};
    for (const auto& b : bursts) {
      if (b.topic != z) continue;
      cuts.push_back(std::clamp(static_cast<double>(b.start), 0.0, static_cast<double>(c.horizon)));
      cuts.push_back(std::clamp(static_cast<double>(b.start + b.duration), 0.0, static_cast<double>(c.horizon)));
    }
    std::sort(cuts.begin(), cuts.end());
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
      const double lo = cuts[i];
      const double hi = cuts[i + 1];
      if (hi <= lo) continue;
      const double rate = news_intensity(c, bursts, z, lo);
      if (rate <= 0.0) continue;
      for (double t = lo + news_rng.exponential(1.0 / rate); t < hi; t += news_rng.exponential(1.0 / rate)) {
        news_times.push_back({t, z});
      }
    }
  }
  std::sort(news_times.begin(), news_times.end(),
            [](const Arrival& a, const Arrival& b) { return a.t < b.t || (a.t == b.t && a.topic < b.topic); });
  for (std::size_t i = 0; i < news_times.size(); ++i) {
    char id[24];
    std::snprintf(id, sizeof(id), "n%07zu", i + 1);
    const int z = news_times[i].topic;
    out.corpus.news.push_back(NewsItem{id, c.start + static_cast<Timestamp>(std::floor(news_times[i].t)),
                                       sentence(z, c.news_title_words), sentence(z, c.news_body_words),
                                       "wire"});
  }

  // Submission times per subreddit, merged.
  struct Post {
    double t;
    int subreddit;
  };
  std::vector<Post> posts;
  CounterRng sub_rng(c.seed, 4);
  for (int s = 0; s < c.subreddit_count; ++s) {
    const double rate = c.rate_for(s) / 3600.0;
    if (rate <= 0.0) continue;
    for (double t = sub_rng.exponential(1.0 / rate); t < static_cast<double>(c.horizon);
         t += sub_rng.exponential(1.0 / rate)) {
      posts.push_back({t, s});
    }
  }
  std::sort(posts.begin(), posts.end(),
            [](const Post& a, const Post& b) { return a.t < b.t || (a.t == b.t && a.subreddit < b.subreddit); });

  synth_detail::DecayedMass news_mass(c.topic_count, static_cast<double>(c.half_life));
  synth_detail::DecayedMass sub_mass(c.topic_count, static_cast<double>(c.half_life));
  CounterRng topic_rng(c.seed, 5);
  CounterRng comment_rng(c.seed, 6);
  std::size_t next_news = 0;
  std::size_t comment_no = 0;
  for (std::size_t i = 0; i < posts.size(); ++i) {
    const double t = posts[i].t;
    const int s = posts[i].subreddit;
    const Timestamp ts = c.start + static_cast<Timestamp>(std::floor(t));
    // News visible at the post's timestamp.
    while (next_news < news_times.size() &&
           c.start + static_cast<Timestamp>(std::floor(news_times[next_news].t)) <= ts) {
      news_mass.advance(news_times[next_news].t);
      news_mass.add(news_times[next_news].topic);
      ++next_news;
    }
    news_mass.advance(t);
    sub_mass.advance(t);
    std::vector<double> w(static_cast<std::size_t>(c.topic_count));
    for (int z = 0; z < c.topic_count; ++z) {
      w[static_cast<std::size_t>(z)] = 1.0 + c.beta_exo * news_mass.share(z) + c.beta_endo * sub_mass.share(z);
    }
    const int z = static_cast<int>(topic_rng.categorical(w));
    const double share = news_mass.share(z);
    const double mean = c.mu_for(s) * (1.0 + c.beta_exo * share);
    sub_mass.add(z);

    char id[24];
    std::snprintf(id, sizeof(id), "s%07zu", i + 1);
    out.corpus.submissions.push_back(SubmissionItem{id, ts, out.subreddits[static_cast<std::size_t>(s)],
                                                    sentence(z, c.title_words), sentence(z, c.body_words)});
    out.truth.push_back({z, share, mean});
    const auto n = comment_rng.poisson(mean);
    for (std::uint64_t k = 0; k < n; ++k) {
      char cid[24];
      std::snprintf(cid, sizeof(cid), "c%08zu", ++comment_no);
      const auto delay = static_cast<Timestamp>(std::ceil(comment_rng.exponential(static_cast<double>(c.comment_delay))));
      out.corpus.comments.push_back(CommentEvent{cid, ts + std::max<Timestamp>(1, delay), id,
                                                 out.subreddits[static_cast<std::size_t>(s)]});
    }
  }
  sort_events(out.corpus.comments);
  return out;
}

struct StreamSummary {
  std::size_t news = 0;
  std::size_t submissions = 0;
  std::size_t comments = 0;
  std::map<std::string, std::size_t> submissions_per_subreddit;
  std::map<std::string, std::size_t> comments_per_subreddit;
  // Quantiles of comments per submission at 0, .25, .5, .75, .9, .99, 1.
  std::vector<double> comment_quantiles = std::vector<double>(7, 0.0);
  double mean_comments = 0.0;
};

inline StreamSummary describe(const Corpus& corpus) {
  StreamSummary s;
  s.news = corpus.news.size();
  s.submissions = corpus.submissions.size();
  s.comments = corpus.comments.size();
  std::map<std::string, std::size_t> per_submission;
  for (const auto& sub : corpus.submissions) {
    ++s.submissions_per_subreddit[sub.subreddit];
    per_submission[sub.id] = 0;
  }
  for (const auto& c : corpus.comments) {
    ++s.comments_per_subreddit[c.subreddit];
    if (auto it = per_submission.find(c.submission_id); it != per_submission.end()) ++it->second;
  }
  if (per_submission.empty()) return s;
  std::vector<double> counts;
  for (const auto& [id, n] : per_submission) counts.push_back(static_cast<double>(n));
  std::sort(counts.begin(), counts.end());
  double total = 0.0;
  for (double v : counts) total += v;
  s.mean_comments = total / static_cast<double>(counts.size());
  const double qs[] = {0.0, 0.25, 0.5, 0.75, 0.9, 0.99, 1.0};
  for (std::size_t i = 0; i < std::size(qs); ++i) {
    // Linear interpolation between order statistics.
    const double pos = qs[i] * static_cast<double>(counts.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, counts.size() - 1);
    s.comment_quantiles[i] = counts[lo] + (pos - static_cast<double>(lo)) * (counts[hi] - counts[lo]);
  }
  return s;
}

inline nlohmann::json to_json(const StreamSummary& s) {
  return nlohmann::json{{"news", s.news},
                        {"submissions", s.submissions},
                        {"comments", s.comments},
                        {"submissions_per_subreddit", s.submissions_per_subreddit},
                        {"comments_per_subreddit", s.comments_per_subreddit},
                        {"comment_quantiles", s.comment_quantiles},
                        {"mean_comments", s.mean_comments}};
}

}  // namespace chatternet

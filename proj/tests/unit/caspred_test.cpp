#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "chatternet/caspred.hpp"
#include "chatternet/rng.hpp"

namespace chatternet::caspred {
namespace {

TEST(Complexity, HandComputations) {
  EXPECT_EQ(complexity({{"a", 1}, {"b", 1}, {"c", 1}, {"d", 1}}), std::log(4.0));
  EXPECT_EQ(complexity({{"a", 1}}), 0.0);
  EXPECT_EQ(complexity({{"a", 5}}), 5.0 * (std::log(1.0) - std::log(5.0)));
  EXPECT_NEAR(complexity({{"a", 5}}), -8.047, 5e-4);
  EXPECT_EQ(complexity({}), 0.0);
}

TEST(Lix, HandComputations) {
  EXPECT_EQ(lix("The cat sat on the mat."), 6.0);
  EXPECT_EQ(lix("Extraordinary."), 101.0);
  EXPECT_EQ(lix("Short one. Another sentence here!"), 5.0 / 2.0 + 100.0 * 2.0 / 5.0);
  EXPECT_THROW(lix("..."), DataError);
}

TEST(TemporalGaps, HandComputations) {
  std::vector<Timestamp> t;
  for (int i = 1; i <= 10; ++i) t.push_back(10 * i);
  const auto g = temporal_gaps(t, 0, 10);
  EXPECT_EQ(g.avg_first, 10.0);
  EXPECT_EQ(g.avg_last, 112.5);
  const std::vector<Timestamp> same(10, 500);
  const auto z = temporal_gaps(same, 500, 10);
  EXPECT_EQ(z.avg_first, 0.0);
  EXPECT_EQ(z.avg_last, 0.0);
  EXPECT_THROW(temporal_gaps(same, 500, 5), ConfigError);
  EXPECT_THROW(temporal_gaps(std::vector<Timestamp>(9, 1), 0, 10), DataError);
}

TEST(FeatureGroups, OrgIsSubsetOfFull) {
  const auto org = feature_groups(FeatureSet::org);
  const auto full = feature_groups(FeatureSet::full);
  EXPECT_EQ(org, (std::vector<std::string>{"polarity", "commenting_time", "avg_gap_first", "avg_gap_last"}));
  EXPECT_EQ(full.size(), 10u);
  for (const auto& g : org) EXPECT_NE(std::find(full.begin(), full.end(), g), full.end()) << g;
  for (const char* starred : {"bag_of_words", "complexity", "lix", "referral_count", "size", "subreddit"}) {
    EXPECT_EQ(std::find(org.begin(), org.end(), starred), org.end()) << starred;
    EXPECT_NE(std::find(full.begin(), full.end(), starred), full.end()) << starred;
  }
}

TEST(Lexicon, LoadAndPolarityOverUniqueTerms) {
  const auto lex = Lexicon::load_csv(std::string(CHATTERNET_FIXTURES) + "/lexicon.csv");
  EXPECT_EQ(lex.size(), 5u);
  EXPECT_DOUBLE_EQ(lex.polarity({"good", "good", "bad", "other"}), 0.8 - 0.7);
  EXPECT_THROW(Lexicon::load_csv("/nonexistent/lexicon.csv"), DataError);
}

SubmissionItem submission(std::string title, std::string body = "") {
  SubmissionItem s;
  s.id = "s";
  s.timestamp = 100;
  s.subreddit = "news";
  s.title = std::move(title);
  s.selftext = std::move(body);
  return s;
}

TEST(Extract, FeaturesAndLayouts) {
  TfIdf tfidf;
  tfidf.fit({{"storm", "win"}, {"storm"}});
  Lexicon lex({{"storm", -0.3}, {"win", 0.6}});
  std::vector<Timestamp> times;
  for (int i = 12; i >= 1; --i) times.push_back(100 + 10 * i);  // unsorted, more than k
  const auto f = extract(submission("Storm win http://a.b", "see https://c.d now."), times, tfidf, &lex, 10);
  ASSERT_TRUE(f);
  EXPECT_EQ(f->referral_count, 2);
  EXPECT_DOUBLE_EQ(*f->polarity, 0.3);
  EXPECT_EQ(f->comment_times.size(), 10u);
  EXPECT_EQ(f->comment_times.front(), 10.0);
  EXPECT_EQ(f->avg_gap_first, 10.0);
  EXPECT_EQ(f->avg_gap_last, 112.5);
  EXPECT_FALSE(extract(submission("x"), {1, 2, 3}, tfidf, &lex, 10));
  EXPECT_FALSE(extract(submission("x"), times, tfidf, nullptr, 10)->polarity);

  const FeatureLayout org(FeatureSet::org, tfidf, {"news", "tech"}, 10, true);
  const FeatureLayout full(FeatureSet::full, tfidf, {"news", "tech"}, 10, true);
  EXPECT_EQ(org.size(), 1u + 10u + 2u);
  EXPECT_EQ(full.size(), org.size() + tfidf.terms().size() + 5u + 2u);
  for (const auto& n : org.names()) {
    EXPECT_NE(std::find(full.names().begin(), full.names().end(), n), full.names().end()) << n;
  }
  const auto v = full.flatten(*f);
  EXPECT_EQ(static_cast<std::size_t>(v.size()), full.size());
  EXPECT_EQ(v(v.size() - 2), 1.0);  // subreddit_news
  EXPECT_EQ(v(v.size() - 1), 0.0);
}

TEST(TfIdf, SmoothedIdfAndNormalization) {
  TfIdf t;
  t.fit({{"a", "b"}, {"a"}, {"c"}}, 1);
  EXPECT_EQ(t.terms(), (std::vector<std::string>{"a", "b", "c"}));
  const auto v = t.transform({"a", "b", "zzz"});
  EXPECT_NEAR(v.norm(), 1.0, 1e-15);
  const double ia = std::log(4.0 / 3.0) + 1.0, ib = std::log(2.0) + 1.0;
  EXPECT_NEAR(v(0) / v(1), ia / ib, 1e-14);
  TfIdf pruned;
  pruned.fit({{"a", "b"}, {"a"}, {"c"}}, 2);
  EXPECT_EQ(pruned.terms(), (std::vector<std::string>{"a"}));
}

TEST(StepwiseLogistic, SeparableStepsAreRecovered) {
  CounterRng rng(5, 0);
  const int n = 300;
  Matrix x(n, 2);
  std::vector<std::int64_t> steps(n);
  for (int i = 0; i < n; ++i) {
    const auto s = static_cast<std::int64_t>(1 + rng.below(3));
    steps[static_cast<std::size_t>(i)] = s;
    x(i, 0) = 4.0 * static_cast<double>(s) + rng.normal(0, 0.3);
    x(i, 1) = rng.normal();
  }
  StepwiseLogistic clf;
  EXPECT_THROW(clf.predict(x), ConfigError);
  clf.fit(x, steps);
  const auto pred = clf.predict(x);
  int correct = 0;
  for (int i = 0; i < n; ++i) correct += pred[static_cast<std::size_t>(i)] == steps[static_cast<std::size_t>(i)] ? 1 : 0;
  EXPECT_GT(correct, 290);
  EXPECT_THROW(clf.fit(x, {1, 2}), DataError);
}

}  // namespace
}  // namespace chatternet::caspred

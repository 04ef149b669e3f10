#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

#include "chatternet/metrics.hpp"
#include "chatternet/synthetic.hpp"

namespace chatternet {
namespace {

SynthConfig small(double beta_exo = 5.0) {
  SynthConfig c;
  c.horizon = 24 * 3600;
  c.submission_rate = {10.0};
  c.beta_exo = beta_exo;
  return c;
}

std::vector<double> comment_counts(const SyntheticCorpus& s) {
  std::map<std::string, double> n;
  for (const auto& c : s.corpus.comments) n[c.submission_id] += 1.0;
  std::vector<double> out;
  for (const auto& sub : s.corpus.submissions) out.push_back(n.count(sub.id) ? n[sub.id] : 0.0);
  return out;
}

TEST(Synthetic, DeterministicForASeed) {
  const auto a = generate(small());
  const auto b = generate(small());
  ASSERT_EQ(a.corpus.comments.size(), b.corpus.comments.size());
  for (std::size_t i = 0; i < a.corpus.comments.size(); ++i) {
    EXPECT_EQ(a.corpus.comments[i].id, b.corpus.comments[i].id);
    EXPECT_EQ(a.corpus.comments[i].timestamp, b.corpus.comments[i].timestamp);
  }
  auto other = small();
  other.seed = 8;
  EXPECT_NE(generate(other).corpus.comments.size(), a.corpus.comments.size());
}

TEST(Synthetic, StreamsAreConsistent) {
  const auto s = generate(small());
  ASSERT_EQ(s.truth.size(), s.corpus.submissions.size());
  std::map<std::string, const SubmissionItem*> subs;
  for (const auto& sub : s.corpus.submissions) subs[sub.id] = &sub;
  EXPECT_EQ(subs.size(), s.corpus.submissions.size());
  for (const auto& c : s.corpus.comments) {
    auto it = subs.find(c.submission_id);
    ASSERT_NE(it, subs.end());
    EXPECT_GT(c.timestamp, it->second->timestamp);
    EXPECT_EQ(c.subreddit, it->second->subreddit);
  }
  for (std::size_t i = 1; i < s.corpus.submissions.size(); ++i) {
    EXPECT_LE(s.corpus.submissions[i - 1].timestamp, s.corpus.submissions[i].timestamp);
  }
  const auto d = describe(s.corpus);
  EXPECT_EQ(d.comments, s.corpus.comments.size());
  std::size_t total = 0;
  for (const auto& [name, n] : d.comments_per_subreddit) total += n;
  EXPECT_EQ(total, d.comments);
  EXPECT_NEAR(d.mean_comments * static_cast<double>(d.submissions), static_cast<double>(d.comments), 1e-6);
}

TEST(Synthetic, NoExogenousEffectMeansNoCorrelation) {
  auto c = small(0.0);
  c.horizon = 72 * 3600;
  const auto s = generate(c);
  std::vector<double> share;
  for (const auto& t : s.truth) share.push_back(t.news_share);
  const auto r = pearson(share, comment_counts(s));
  ASSERT_TRUE(r);
  EXPECT_LT(std::abs(*r), 0.1);
}

TEST(Synthetic, BurstTopicsDrawMoreComments) {
  const auto s = generate(small(5.0));
  const auto counts = comment_counts(s);
  double hi = 0, lo = 0, nhi = 0, nlo = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (s.truth[i].news_share > 0.3) hi += counts[i], ++nhi;
    if (s.truth[i].news_share < 0.1) lo += counts[i], ++nlo;
  }
  ASSERT_GT(nhi, 20);
  ASSERT_GT(nlo, 20);
  EXPECT_GT(hi / nhi, 1.5 * lo / nlo);
}

TEST(Synthetic, MeanCommentsTrackBaseMu) {
  auto c = small(0.0);
  c.horizon = 96 * 3600;
  for (double scale : {1.0, 2.0}) {
    c.base_mu = {10.0 * scale};
    const auto s = generate(c);
    const auto d = describe(s.corpus);
    EXPECT_NEAR(d.mean_comments / (10.0 * scale), 1.0, 0.05);
  }
}

TEST(Synthetic, ConfigRoundTripAndValidation) {
  auto c = small();
  c.bursts = {Burst{0, 3, 3600, 4.0}};
  const nlohmann::json j = c;
  const auto back = j.get<SynthConfig>();
  EXPECT_EQ(nlohmann::json(back), j);
  c.beta_exo = -1.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

}  // namespace
}  // namespace chatternet

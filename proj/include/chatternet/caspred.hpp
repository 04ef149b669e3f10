#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "chatternet/error.hpp"
#include "chatternet/stream.hpp"
#include "chatternet/text.hpp"

// Classical cascade-growth baseline: hand-crafted content and timing
// features, one logistic model per growth step.

namespace chatternet::caspred {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// p = (1/|T|) sum_t tf_t (ln|T| - ln tf_t) over the submission's distinct
/// terms T. Empty input gives 0.
inline double complexity(const std::map<std::string, std::int64_t>& term_frequencies) {
  if (term_frequencies.empty()) return 0.0;
  const double n = static_cast<double>(term_frequencies.size());
  double s = 0.0;
  for (const auto& [term, tf] : term_frequencies) {
    const double f = static_cast<double>(tf);
    s += f * (std::log(n) - std::log(f));
  }
  return s / n;
}

inline std::map<std::string, std::int64_t> term_frequencies(const std::vector<std::string>& tokens) {
  std::map<std::string, std::int64_t> tf;
  for (const auto& t : tokens) ++tf[t];
  return tf;
}

struct TextCounts {
  std::int64_t words = 0;
  std::int64_t long_words = 0;  // more than 6 letters
  std::int64_t sentences = 0;
};

/// Words are whitespace-separated chunks holding at least one letter or
/// digit; sentences end at runs of '.', '!' or '?', and trailing text
/// without a terminator counts as one more sentence.
inline TextCounts count_text(std::string_view text) {
  TextCounts c;
  bool pending_sentence = false;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i >= text.size()) break;
    std::int64_t letters = 0;
    bool word = false;
    bool ends_sentence = false;
    for (; i < text.size() && !std::isspace(static_cast<unsigned char>(text[i])); ++i) {
      const auto ch = static_cast<unsigned char>(text[i]);
      if (std::isalpha(ch)) ++letters;
      if (std::isalnum(ch)) {
        word = true;
        ends_sentence = false;
      } else if (ch == '.' || ch == '!' || ch == '?') {
        ends_sentence = word;
      }
    }
    if (word) {
      ++c.words;
      if (letters > 6) ++c.long_words;
      pending_sentence = true;
    }
    if (ends_sentence && pending_sentence) {
      ++c.sentences;
      pending_sentence = false;
    }
  }
  if (pending_sentence) ++c.sentences;
  return c;
}

/// r = |w|/|s| + 100 |cw|/|w|.
inline double lix(std::string_view text) {
  const TextCounts c = count_text(text);
  if (c.words == 0 || c.sentences == 0) throw DataError("lix: text has no words");
  return static_cast<double>(c.words) / static_cast<double>(c.sentences) +
         100.0 * static_cast<double>(c.long_words) / static_cast<double>(c.words);
}

struct TemporalGaps {
  double avg_first = 0.0;
  double avg_last = 0.0;
};

/// avg_first = 1/(k/2-1) sum_{i=1}^{k/2-1} (t_i - t_{i-1}) and
/// avg_last = 1/(k/2-1) sum_{i=k/2}^{k} (t_i - t_0), with t_0 the submission
/// time. Needs exactly k sorted comment times; k even and at least 4.
inline TemporalGaps temporal_gaps(std::span<const Timestamp> comment_times, Timestamp t0, int k = 10) {
  if (k < 4 || k % 2 != 0) throw ConfigError("temporal_gaps: k must be even and at least 4");
  if (comment_times.size() != static_cast<std::size_t>(k)) {
    throw DataError("temporal_gaps: expected exactly k comment times");
  }
  if (!std::is_sorted(comment_times.begin(), comment_times.end())) {
    throw DataError("temporal_gaps: comment times must be sorted");
  }
  auto t = [&](int i) { return static_cast<double>(i == 0 ? t0 : comment_times[static_cast<std::size_t>(i - 1)]); };
  const int half = k / 2;
  const double div = static_cast<double>(half - 1);
  TemporalGaps g;
  for (int i = 1; i <= half - 1; ++i) g.avg_first += t(i) - t(i - 1);
  for (int i = half; i <= k; ++i) g.avg_last += t(i) - t(0);
  g.avg_first /= div;
  g.avg_last /= div;
  return g;
}

/// Term -> sentiment score, read from a "term,score" CSV (an optional
/// header row is skipped).
class Lexicon {
 public:
  Lexicon() = default;
  explicit Lexicon(std::unordered_map<std::string, double> scores) : scores_(std::move(scores)) {}

  static Lexicon load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read lexicon " + path);
    std::unordered_map<std::string, double> scores;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      const auto comma = line.rfind(',');
      if (comma == std::string::npos) throw DataError(path + ":" + std::to_string(line_no) + ": expected term,score");
      const std::string term = line.substr(0, comma);
      const std::string score = line.substr(comma + 1);
      try {
        std::size_t used = 0;
        const double v = std::stod(score, &used);
        if (used != score.size()) throw std::invalid_argument("trailing text");
        for (const auto& tok : normalize(term)) scores[tok] = v;
      } catch (const std::exception&) {
        if (line_no == 1) continue;  // header
        throw DataError(path + ":" + std::to_string(line_no) + ": bad score");
      }
    }
    return Lexicon(std::move(scores));
  }

  std::optional<double> score(const std::string& term) const {
    auto it = scores_.find(term);
    if (it == scores_.end()) return std::nullopt;
    return it->second;
  }
  std::size_t size() const { return scores_.size(); }

  /// Sum of scores over the distinct terms of a token list.
  double polarity(const std::vector<std::string>& tokens) const {
    const std::set<std::string> unique(tokens.begin(), tokens.end());
    double s = 0.0;
    for (const auto& t : unique) s += score(t).value_or(0.0);
    return s;
  }

 private:
  std::unordered_map<std::string, double> scores_;
};

/// Unigram tf-idf with smoothed idf = ln((1 + N) / (1 + df)) + 1 and L2
/// normalized rows; terms are those seen while fitting, in sorted order.
class TfIdf {
 public:
  void fit(const std::vector<std::vector<std::string>>& documents, std::int64_t min_df = 1) {
    std::map<std::string, std::int64_t> df;
    for (const auto& doc : documents) {
      for (const auto& t : std::set<std::string>(doc.begin(), doc.end())) ++df[t];
    }
    terms_.clear();
    index_.clear();
    idf_.clear();
    const double n = static_cast<double>(documents.size());
    for (const auto& [t, d] : df) {
      if (d < min_df) continue;
      index_.emplace(t, terms_.size());
      terms_.push_back(t);
      idf_.push_back(std::log((1.0 + n) / (1.0 + static_cast<double>(d))) + 1.0);
    }
  }

  Vector transform(const std::vector<std::string>& tokens) const {
    Vector v = Vector::Zero(static_cast<Eigen::Index>(terms_.size()));
    for (const auto& t : tokens) {
      if (auto it = index_.find(t); it != index_.end()) v(static_cast<Eigen::Index>(it->second)) += 1.0;
    }
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) *= idf_[static_cast<std::size_t>(i)];
    const double norm = v.norm();
    if (norm > 0.0) v /= norm;
    return v;
  }

  const std::vector<std::string>& terms() const { return terms_; }

 private:
  std::vector<std::string> terms_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<double> idf_;
};

struct CasPredFeatures {
  Vector tfidf;
  double complexity = 0.0;
  double lix = 0.0;
  std::optional<double> polarity;
  std::int64_t referral_count = 0;
  std::int64_t word_count = 0;
  std::int64_t sentence_count = 0;
  std::string subreddit;
  std::vector<double> comment_times;  // t_i - t_0 for the first k comments
  double avg_gap_first = 0.0;
  double avg_gap_last = 0.0;
};

/// Feature groups; starred groups are the content additions absent from
/// the original cascade-prediction feature set.
struct FeatureGroup {
  const char* name;
  bool starred;
};

inline constexpr FeatureGroup kFeatureGroups[] = {
    {"bag_of_words", true},    {"complexity", true},    {"lix", true},
    {"polarity", false},       {"referral_count", true}, {"size", true},
    {"subreddit", true},       {"commenting_time", false}, {"avg_gap_first", false},
    {"avg_gap_last", false},
};

enum class FeatureSet { org, full };

inline std::vector<std::string> feature_groups(FeatureSet set) {
  std::vector<std::string> out;
  for (const auto& g : kFeatureGroups) {
    if (set == FeatureSet::full || !g.starred) out.emplace_back(g.name);
  }
  return out;
}

/// Features of one submission given its first k comment times. Returns
/// nothing when fewer than k comments were observed. Without a lexicon the
/// polarity is left empty.
inline std::optional<CasPredFeatures> extract(const SubmissionItem& submission,
                                              std::vector<Timestamp> comment_times, const TfIdf& tfidf,
                                              const Lexicon* lexicon, int k = 10) {
  std::sort(comment_times.begin(), comment_times.end());
  if (comment_times.size() < static_cast<std::size_t>(k)) return std::nullopt;
  comment_times.resize(static_cast<std::size_t>(k));
  const std::string text = submission.text_digest();
  const auto tokens = normalize(text);
  CasPredFeatures f;
  f.tfidf = tfidf.transform(tokens);
  f.complexity = complexity(term_frequencies(tokens));
  const TextCounts counts = count_text(text);
  f.word_count = counts.words;
  f.sentence_count = counts.sentences;
  f.lix = counts.words > 0 ? lix(text) : 0.0;
  if (lexicon != nullptr) f.polarity = lexicon->polarity(tokens);
  f.referral_count = static_cast<std::int64_t>(count_urls(text));
  f.subreddit = submission.subreddit;
  for (auto t : comment_times) f.comment_times.push_back(static_cast<double>(t - submission.timestamp));
  const TemporalGaps g = temporal_gaps(comment_times, submission.timestamp, k);
  f.avg_gap_first = g.avg_first;
  f.avg_gap_last = g.avg_last;
  return f;
}

/// Flattens features into a named vector for the chosen set.
class FeatureLayout {
 public:
  FeatureLayout(FeatureSet set, const TfIdf& tfidf, std::vector<std::string> subreddits, int k, bool polarity)
      : set_(set), subreddits_(std::move(subreddits)), k_(k), polarity_(polarity) {
    if (polarity_) names_.emplace_back("polarity");
    for (int i = 1; i <= k_; ++i) names_.push_back("commenting_time_" + std::to_string(i));
    names_.emplace_back("avg_gap_first");
    names_.emplace_back("avg_gap_last");
    if (set_ == FeatureSet::full) {
      for (const auto& t : tfidf.terms()) names_.push_back("tfidf_" + t);
      for (const char* n : {"complexity", "lix", "referral_count", "word_count", "sentence_count"}) names_.emplace_back(n);
      for (const auto& s : subreddits_) names_.push_back("subreddit_" + s);
    }
  }

  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }

  Vector flatten(const CasPredFeatures& f) const {
    std::vector<double> v;
    v.reserve(names_.size());
    if (polarity_) v.push_back(f.polarity.value_or(0.0));
    v.insert(v.end(), f.comment_times.begin(), f.comment_times.end());
    v.push_back(f.avg_gap_first);
    v.push_back(f.avg_gap_last);
    if (set_ == FeatureSet::full) {
      for (Eigen::Index i = 0; i < f.tfidf.size(); ++i) v.push_back(f.tfidf(i));
      v.push_back(f.complexity);
      v.push_back(f.lix);
      v.push_back(static_cast<double>(f.referral_count));
      v.push_back(static_cast<double>(f.word_count));
      v.push_back(static_cast<double>(f.sentence_count));
      for (const auto& s : subreddits_) v.push_back(s == f.subreddit ? 1.0 : 0.0);
    }
    if (v.size() != names_.size()) throw DataError("feature vector does not match its layout");
    return Eigen::Map<Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
  }

 private:
  FeatureSet set_;
  std::vector<std::string> subreddits_;
  int k_;
  bool polarity_;
  std::vector<std::string> names_;
};

inline std::string features_csv(const FeatureLayout& layout, const std::vector<std::string>& ids,
                                const Matrix& x) {
  std::ostringstream out;
  out << "id";
  for (const auto& n : layout.names()) out << ',' << n;
  out << '\n';
  out.precision(10);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    out << ids[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < x.cols(); ++c) out << ',' << x(r, c);
    out << '\n';
  }
  return out.str();
}

/// Fit/predict contract for growth-step classifiers: labels are
/// floor(size / k) steps.
class GrowthClassifier {
 public:
  virtual ~GrowthClassifier() = default;
  virtual void fit(const Matrix& x, const std::vector<std::int64_t>& steps) = 0;
  virtual std::vector<std::int64_t> predict(const Matrix& x) const = 0;
};

/// L2-regularized logistic regression fitted by Newton's method.
class LogisticRegression {
 public:
  explicit LogisticRegression(double l2 = 1.0, int max_iter = 50) : l2_(l2), max_iter_(max_iter) {}

  void fit(const Matrix& x, const std::vector<int>& y) {
    const Eigen::Index n = x.rows();
    const Eigen::Index d = x.cols();
    Matrix xb(n, d + 1);
    xb << x, Vector::Ones(n);
    Vector yv(n);
    for (Eigen::Index i = 0; i < n; ++i) yv(i) = y[static_cast<std::size_t>(i)];
    w_ = Vector::Zero(d + 1);
    Matrix reg = l2_ * Matrix::Identity(d + 1, d + 1);
    reg(d, d) = 1e-8;  // intercept is not shrunk
    for (int it = 0; it < max_iter_; ++it) {
      const Vector p = probabilities(xb);
      const Vector grad = xb.transpose() * (p - yv) + reg * w_;
      const Vector s = p.cwiseProduct(Vector::Ones(n) - p).cwiseMax(1e-12);
      const Matrix hess = xb.transpose() * s.asDiagonal() * xb + reg;
      const Vector step = hess.ldlt().solve(grad);
      w_ -= step;
      if (step.lpNorm<Eigen::Infinity>() < 1e-10) break;
    }
  }

  Vector predict_proba(const Matrix& x) const {
    Matrix xb(x.rows(), x.cols() + 1);
    xb << x, Vector::Ones(x.rows());
    return probabilities(xb);
  }

 private:
  Vector probabilities(const Matrix& xb) const {
    return (xb * w_).unaryExpr([](double z) { return 1.0 / (1.0 + std::exp(-z)); });
  }

  double l2_;
  int max_iter_;
  Vector w_;
};

/// One logistic model per threshold "reaches step l" for l = 2..L (every
/// eligible submission reached step 1). Features are standardized with
/// training statistics. The predicted step climbs while consecutive
/// thresholds are predicted reached.
class StepwiseLogistic final : public GrowthClassifier {
 public:
  explicit StepwiseLogistic(double l2 = 1.0) : l2_(l2) {}

  void fit(const Matrix& x, const std::vector<std::int64_t>& steps) override {
    if (x.rows() == 0 || static_cast<std::size_t>(x.rows()) != steps.size()) {
      throw DataError("classifier: feature rows and labels disagree");
    }
    mean_ = x.colwise().mean();
    scale_ = ((x.rowwise() - mean_.transpose()).cwiseAbs2().colwise().mean()).cwiseSqrt().transpose();
    for (Eigen::Index i = 0; i < scale_.size(); ++i) {
      if (scale_(i) < 1e-12) scale_(i) = 1.0;
    }
    const Matrix z = standardize(x);
    min_step_ = *std::min_element(steps.begin(), steps.end());
    const auto max_step = *std::max_element(steps.begin(), steps.end());
    models_.clear();
    for (auto l = min_step_ + 1; l <= max_step; ++l) {
      std::vector<int> y;
      for (auto s : steps) y.push_back(s >= l ? 1 : 0);
      LogisticRegression m(l2_);
      m.fit(z, y);
      models_.push_back(std::move(m));
    }
    fitted_ = true;
  }

  std::vector<std::int64_t> predict(const Matrix& x) const override {
    if (!fitted_) throw ConfigError("classifier used before fit");
    const Matrix z = standardize(x);
    std::vector<std::int64_t> out(static_cast<std::size_t>(x.rows()), min_step_);
    std::vector<bool> climbing(out.size(), true);
    for (const auto& m : models_) {
      const Vector p = m.predict_proba(z);
      for (std::size_t i = 0; i < out.size(); ++i) {
        if (climbing[i] && p(static_cast<Eigen::Index>(i)) >= 0.5) {
          ++out[i];
        } else {
          climbing[i] = false;
        }
      }
    }
    return out;
  }

 private:
  Matrix standardize(const Matrix& x) const {
    if (x.cols() != mean_.size()) throw DataError("classifier: feature width changed since fit");
    return (x.rowwise() - mean_.transpose()).array().rowwise() / scale_.transpose().array();
  }

  double l2_;
  bool fitted_ = false;
  Vector mean_;
  Vector scale_;
  std::int64_t min_step_ = 0;
  std::vector<LogisticRegression> models_;
};

}  // namespace chatternet::caspred

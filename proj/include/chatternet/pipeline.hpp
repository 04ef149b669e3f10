#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "chatternet/dataset.hpp"
#include "chatternet/embedding.hpp"
#include "chatternet/error.hpp"
#include "chatternet/manifest.hpp"
#include "chatternet/metrics.hpp"
#include "chatternet/model.hpp"
#include "chatternet/report.hpp"
#include "chatternet/stream.hpp"
#include "chatternet/training.hpp"

// End-to-end plumbing shared by the command-line tool and the acceptance
// tests: the ingested store, run configuration, training and evaluation.

namespace chatternet {

namespace fs = std::filesystem;

inline void to_json(nlohmann::json& j, const EmbeddingOptions& o) {
  j = nlohmann::json{{"dim", o.dim},           {"window", o.window},
                     {"iterations", o.iterations}, {"negatives", o.negatives},
                     {"learning_rate", o.learning_rate}};
}

inline void from_json(const nlohmann::json& j, EmbeddingOptions& o) {
  o.dim = j.value("dim", o.dim);
  o.window = j.value("window", o.window);
  o.iterations = j.value("iterations", o.iterations);
  o.negatives = j.value("negatives", o.negatives);
  o.learning_rate = j.value("learning_rate", o.learning_rate);
}

/// Configuration file layout: {"data": {...}, "model": {...}, "train":
/// {...}, "embedding": {...}, "seed": N}. Model sizes that depend on the
/// data (vocabulary, subreddit count) and the shared settings (m, text
/// lengths) are filled in from the data section.
struct RunConfig {
  DataConfig data;
  ModelConfig model;
  TrainConfig train;
  EmbeddingOptions embedding;
  std::uint64_t seed = 1;

  nlohmann::json to_json() const {
    return nlohmann::json{{"data", data}, {"model", model}, {"train", train}, {"embedding", embedding}, {"seed", seed}};
  }

  static RunConfig from_json(const nlohmann::json& j) {
    RunConfig c;
    if (j.contains("data")) c.data = j.at("data").get<DataConfig>();
    if (j.contains("model")) c.model = j.at("model").get<ModelConfig>();
    if (j.contains("train")) c.train = j.at("train").get<TrainConfig>();
    if (j.contains("embedding")) c.embedding = j.at("embedding").get<EmbeddingOptions>();
    c.seed = j.value("seed", c.seed);
    return c;
  }

  static RunConfig load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read config " + path.string());
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw ConfigError("config " + path.string() + " is not a JSON object");
    try {
      return from_json(j);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("invalid config " + path.string() + ": " + e.what());
    }
  }
};

// ---------------------------------------------------------------------------
// Ingested store: validated, sorted JSONL streams plus stats.json and an
// interval index (intervals.csv: interval,start,end,news,submissions,comments
// for every nonempty interval).

struct StoreFiles {
  fs::path news, submissions, comments;
};

inline StoreFiles store_files(const fs::path& dir) {
  return {dir / "news.jsonl", dir / "submissions.jsonl", dir / "comments.jsonl"};
}

struct IngestStats {
  std::size_t news = 0, submissions = 0, comments = 0;
  std::size_t skipped_news = 0, skipped_submissions = 0, skipped_comments = 0;
  std::size_t dropped_comments = 0;
};

inline IngestStats ingest(const fs::path& news, const fs::path& subs, const fs::path& comments, const fs::path& out,
                          Timestamp delta_obs = 60, const std::set<std::string>& subreddits = {},
                          std::vector<std::string>* diagnostics = nullptr) {
  auto n = ingest_jsonl<NewsItem>(news.string());
  auto s = ingest_jsonl<SubmissionItem>(subs.string(), &subreddits);
  auto c = ingest_jsonl<CommentEvent>(comments.string(), &subreddits);
  auto dropped = drop_premature_comments(s.records, c.records);
  if (s.records.empty()) throw DataError("no valid submissions in " + subs.string());
  fs::create_directories(out);
  const auto files = store_files(out);
  write_jsonl(files.news.string(), n.records);
  write_jsonl(files.submissions.string(), s.records);
  write_jsonl(files.comments.string(), c.records);

  IngestStats st{n.records.size(), s.records.size(), c.records.size(), n.skipped, s.skipped, c.skipped, dropped.size()};
  Timestamp first = s.records.front().timestamp;
  Timestamp last = s.records.back().timestamp;
  if (!n.records.empty()) {
    first = std::min(first, n.records.front().timestamp);
    last = std::max(last, n.records.back().timestamp);
  }
  if (!c.records.empty()) last = std::max(last, c.records.back().timestamp);
  const IntervalClock clock(first, delta_obs);
  std::map<std::int64_t, std::array<std::size_t, 3>> per_interval;
  for (const auto& r : n.records) ++per_interval[clock.index_of(r.timestamp)][0];
  for (const auto& r : s.records) ++per_interval[clock.index_of(r.timestamp)][1];
  for (const auto& r : c.records) ++per_interval[clock.index_of(r.timestamp)][2];
  {
    std::ofstream idx(out / "intervals.csv");
    idx << "interval,start,end,news,submissions,comments\n";
    for (const auto& [k, v] : per_interval) {
      idx << k << ',' << clock.start(k) << ',' << clock.end(k) << ',' << v[0] << ',' << v[1] << ',' << v[2] << '\n';
    }
  }
  nlohmann::json stats = {{"news", st.news},
                          {"submissions", st.submissions},
                          {"comments", st.comments},
                          {"skipped", {{"news", st.skipped_news}, {"submissions", st.skipped_submissions}, {"comments", st.skipped_comments}}},
                          {"dropped_premature_comments", st.dropped_comments},
                          {"first_timestamp", first},
                          {"last_timestamp", last},
                          {"delta_obs", delta_obs},
                          {"nonempty_intervals", per_interval.size()}};
  std::ofstream(out / "stats.json") << stats.dump(2) << '\n';
  if (diagnostics != nullptr) {
    for (auto* d : {&n.diagnostics, &s.diagnostics, &c.diagnostics, &dropped}) {
      diagnostics->insert(diagnostics->end(), d->begin(), d->end());
    }
  }
  return st;
}

inline Corpus read_store(const fs::path& dir) {
  const auto files = store_files(dir);
  for (const auto& f : {files.news, files.submissions, files.comments}) {
    if (!fs::exists(f)) throw DataError("data store " + dir.string() + " lacks " + f.filename().string());
  }
  Corpus c;
  c.news = ingest_jsonl<NewsItem>(files.news.string()).records;
  c.submissions = ingest_jsonl<SubmissionItem>(files.submissions.string()).records;
  c.comments = ingest_jsonl<CommentEvent>(files.comments.string()).records;
  return c;
}

inline void write_store(const fs::path& dir, const Corpus& c) {
  fs::create_directories(dir);
  const auto files = store_files(dir);
  write_jsonl(files.news.string(), c.news);
  write_jsonl(files.submissions.string(), c.submissions);
  write_jsonl(files.comments.string(), c.comments);
}

inline std::map<std::string, FileFingerprint> store_fingerprints(const fs::path& dir) {
  const auto files = store_files(dir);
  return {{"news", fingerprint(files.news)},
          {"submissions", fingerprint(files.submissions)},
          {"comments", fingerprint(files.comments)}};
}

// ---------------------------------------------------------------------------
// Training

/// Model config for a dataset: data-dependent sizes and shared settings
/// copied from the data section.
inline ModelConfig model_config_for(const RunConfig& rc, const Dataset& data) {
  ModelConfig mc = rc.model;
  mc.vocab_size = static_cast<int>(data.vocabulary().size());
  mc.subreddit_count = static_cast<int>(data.subreddits().size());
  mc.m = rc.data.m;
  mc.submission_len = rc.data.submission_len;
  mc.news_len = rc.data.news_len;
  mc.word_dim = rc.embedding.dim;
  mc.validate();
  return mc;
}

/// Builds, pretrains and trains a model. The run directory receives
/// config.json, vocab.txt, subreddits.json, embeddings.bin, epoch_log.csv,
/// ledger.json and checkpoints/.
inline CheckpointLedger train_pipeline(const RunConfig& rc, Corpus corpus, const fs::path& run_dir,
                                       const std::function<void(const EpochSummary&)>& on_epoch = {}) {
  rc.train.validate();
  fs::create_directories(run_dir);
  DataConfig dc = rc.data;
  const Dataset data = Dataset::build(std::move(corpus), dc);
  ModelConfig mc = model_config_for(rc, data);
  {
    std::ofstream(run_dir / "config.json") << rc.to_json().dump(2) << '\n';
    nlohmann::json subs = data.subreddits();
    std::ofstream(run_dir / "subreddits.json") << subs.dump() << '\n';
  }
  data.vocabulary().save((run_dir / "vocab.txt").string());
  EmbeddingOptions eo = rc.embedding;
  eo.seed = CounterRng(rc.seed, 11).next_u64();
  const auto embeddings = pretrain_embeddings(data.training_texts(), data.vocabulary().size(), eo);
  save_matrix((run_dir / "embeddings.bin").string(), embeddings);
  ChatterNet model(mc, rc.seed);
  model.set_word_embeddings(embeddings);
  return train_run(model, data, rc.train, run_dir, on_epoch);
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvaluationResult {
  RunMetadata meta;
  MetricReport report;
  std::vector<PredictionRecord> records;
};

struct EvaluateOptions {
  std::optional<double> delta_pred_days;  // defaults to the run's window
  Split split = Split::test;
  bool best_only = false;  // use the single best checkpoint instead of the ensemble
};

/// Rebuilds the dataset with the run's vocabulary and scores the split with
/// the averaged top checkpoints.
inline EvaluationResult evaluate_run(const fs::path& run_dir, Corpus corpus, const EvaluateOptions& opt = {}) {
  if (!fs::exists(run_dir / "config.json")) throw DataError("no run found in " + run_dir.string());
  RunConfig rc = RunConfig::load(run_dir / "config.json");
  if (opt.delta_pred_days) {
    if (!(*opt.delta_pred_days > 0)) throw ConfigError("delta-pred must be positive");
    rc.data.delta_pred = static_cast<Timestamp>(std::llround(*opt.delta_pred_days * 86400.0));
  }
  {
    std::ifstream in(run_dir / "subreddits.json");
    if (in) rc.data.subreddits = nlohmann::json::parse(in).get<std::vector<std::string>>();
  }
  Vocabulary vocab = Vocabulary::load((run_dir / "vocab.txt").string());
  const Dataset data = Dataset::build(std::move(corpus), rc.data, std::move(vocab));
  auto models = load_ensemble(run_dir);
  if (opt.best_only) models.erase(models.begin() + 1, models.end());
  std::vector<const ChatterNet*> ptrs;
  for (const auto& m : models) ptrs.push_back(&m);
  const auto preds = ensemble_predict(ptrs, data, opt.split, rc.data.warmup_intervals);
  if (preds.empty()) throw DataError("the evaluation split has no scored submissions");

  EvaluationResult r;
  std::ifstream min(run_dir / "manifest.json");
  r.meta.run_id = min ? nlohmann::json::parse(min).value("run_id", run_dir.filename().string())
                      : run_dir.filename().string();
  r.meta.variant = to_string(rc.model.variant);
  r.meta.m = rc.data.m;
  r.meta.delta_pred_days = static_cast<double>(rc.data.delta_pred) / 86400.0;
  for (const auto& p : preds) r.records.push_back({p.subreddit, p.y_true, p.y_hat, p.count});
  r.report = evaluate_records(r.records, rc.train.epsilon);
  return r;
}

}  // namespace chatternet

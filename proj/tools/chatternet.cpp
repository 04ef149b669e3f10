// chatternet: ingest, train, evaluate, synth, report, caspred and rerun.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "chatternet/caspred.hpp"
#include "chatternet/error.hpp"
#include "chatternet/manifest.hpp"
#include "chatternet/metrics.hpp"
#include "chatternet/pipeline.hpp"
#include "chatternet/report.hpp"
#include "chatternet/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace chatternet;

namespace {

constexpr const char* kDataRootEnv = "CHATTERNET_DATA_ROOT";

std::string default_data_root() {
  const char* v = std::getenv(kDataRootEnv);
  return v != nullptr ? v : "";
}

fs::path require_data(const std::string& data) {
  if (data.empty()) throw ConfigError(std::string("--data is required (or set ") + kDataRootEnv + ")");
  return fs::path(data);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

// --- ingest -----------------------------------------------------------------

struct IngestArgs {
  std::string news, subs, comments, out;
  Timestamp delta_obs = 60;
  std::vector<std::string> subreddits;

  json to_json() const {
    return {{"news", news}, {"subs", subs}, {"comments", comments}, {"out", out},
            {"delta_obs", delta_obs}, {"subreddits", subreddits}};
  }
  static IngestArgs from_json(const json& j) {
    IngestArgs a;
    a.news = j.at("news");
    a.subs = j.at("subs");
    a.comments = j.at("comments");
    a.out = j.at("out");
    a.delta_obs = j.value("delta_obs", a.delta_obs);
    a.subreddits = j.value("subreddits", a.subreddits);
    return a;
  }
};

int run_ingest(const IngestArgs& a) {
  RunManifest manifest;
  manifest.command = "ingest";
  manifest.arguments = a.to_json();
  manifest.config = {{"delta_obs", a.delta_obs}, {"subreddits", a.subreddits}};
  manifest.data = {{"news", fingerprint(a.news)}, {"submissions", fingerprint(a.subs)},
                   {"comments", fingerprint(a.comments)}};
  manifest.created_at = utc_now();
  std::vector<std::string> diagnostics;
  const std::set<std::string> allowed(a.subreddits.begin(), a.subreddits.end());
  const auto st = ingest(a.news, a.subs, a.comments, a.out, a.delta_obs, allowed, &diagnostics);
  manifest.write(fs::path(a.out) / "manifest.json");
  for (const auto& d : diagnostics) std::cerr << "warning: " << d << '\n';
  std::cout << "ingested " << st.news << " news, " << st.submissions << " submissions, " << st.comments
            << " comments into " << a.out << '\n';
  return 0;
}

// --- train ------------------------------------------------------------------

struct TrainArgs {
  std::string config, data, out;
  std::optional<std::string> variant;
  std::optional<int> m;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::optional<double> learning_rate;
  std::optional<double> delta_pred_days;
  std::optional<int> embedding_iterations;

  RunConfig effective() const {
    RunConfig rc = config.empty() ? RunConfig{} : RunConfig::load(config);
    if (variant) rc.model.variant = parse_variant(*variant);
    if (m) rc.data.m = *m;
    if (seed) rc.seed = *seed;
    if (epochs) rc.train.epochs = *epochs;
    if (learning_rate) rc.train.learning_rate = *learning_rate;
    if (delta_pred_days) rc.data.delta_pred = static_cast<Timestamp>(std::llround(*delta_pred_days * 86400.0));
    if (embedding_iterations) rc.embedding.iterations = *embedding_iterations;
    rc.train.seed = rc.seed;
    rc.model.m = rc.data.m;
    return rc;
  }
};

int train_with(const RunConfig& rc, const fs::path& data_dir, const fs::path& out) {
  if (rc.model.variant == Variant::lstm_cc && rc.data.m == 0) {
    throw ConfigError("variant lstm_cc needs m >= 1: zero-shot is not supported");
  }
  rc.train.validate();
  fs::create_directories(out);
  RunManifest manifest;
  manifest.command = "train";
  manifest.arguments = {{"data", fs::absolute(data_dir).lexically_normal().string()}, {"out", out.string()}};
  manifest.config = rc.to_json();
  manifest.data = store_fingerprints(data_dir);
  manifest.seed = rc.seed;
  manifest.created_at = utc_now();
  manifest.write(out / "manifest.json");
  std::cerr << "run " << manifest.run_id() << ": variant " << to_string(rc.model.variant) << ", m=" << rc.data.m
            << ", " << rc.train.epochs << " epochs\n";
  const auto ledger = train_pipeline(rc, read_store(data_dir), out, [](const EpochSummary& s) {
    std::cerr << "epoch " << s.epoch << ": train loss " << s.train_loss << ", validation loss " << s.val_loss
              << ", " << s.updates << " updates, " << s.seconds << " s\n";
  });
  std::cout << "trained " << out.string() << "; best validation loss " << ledger.entries().front().val_loss << '\n';
  return 0;
}

// --- evaluate ---------------------------------------------------------------

struct EvaluateArgs {
  std::string run, data, out;
  std::optional<double> delta_pred_days;
  bool per_subreddit = false;
  bool plot = false;
  bool best_only = false;
  std::string split = "test";

  json to_json() const {
    json j = {{"run", run}, {"data", data}, {"out", out}, {"per_subreddit", per_subreddit},
              {"plot", plot}, {"best_only", best_only}, {"split", split}};
    if (delta_pred_days) j["delta_pred_days"] = *delta_pred_days;
    return j;
  }
  static EvaluateArgs from_json(const json& j) {
    EvaluateArgs a;
    a.run = j.at("run");
    a.data = j.at("data");
    a.out = j.at("out");
    if (j.contains("delta_pred_days")) a.delta_pred_days = j.at("delta_pred_days").get<double>();
    a.per_subreddit = j.value("per_subreddit", false);
    a.plot = j.value("plot", false);
    a.best_only = j.value("best_only", false);
    a.split = j.value("split", std::string("test"));
    return a;
  }
};

Split parse_split(const std::string& s) {
  if (s == "test") return Split::test;
  if (s == "validation") return Split::validation;
  if (s == "train") return Split::train;
  throw ConfigError("unknown split `" + s + "` (expected train, validation or test)");
}

int run_evaluate(EvaluateArgs a) {
  const fs::path run(a.run);
  const fs::path data = require_data(a.data);
  if (!fs::exists(run / "ledger.json")) throw DataError("no checkpoints in " + run.string());
  if (a.out.empty()) a.out = (run / "eval").string();
  const fs::path out(a.out);
  fs::create_directories(out);
  EvaluateOptions opt;
  opt.delta_pred_days = a.delta_pred_days;
  opt.split = parse_split(a.split);
  opt.best_only = a.best_only;

  RunManifest manifest;
  manifest.command = "evaluate";
  a.data = fs::absolute(data).lexically_normal().string();
  a.run = fs::absolute(run).lexically_normal().string();
  manifest.arguments = a.to_json();
  manifest.config = a.to_json();
  manifest.config.erase("out");
  manifest.config.erase("run");
  manifest.config.erase("data");
  manifest.data = store_fingerprints(data);
  const auto ledger = CheckpointLedger::load(run / "ledger.json");
  for (const auto& e : ledger.entries()) manifest.data["checkpoint:" + e.path] = fingerprint(run / e.path / "params.bin");
  manifest.created_at = utc_now();

  const auto result = evaluate_run(run, read_store(data), opt);
  write_text(out / "metrics.csv", metrics_csv(result.meta, result.report, a.per_subreddit));
  write_text(out / "predictions.csv", scatter_csv(result.records));
  if (a.plot) write_text(out / "scatter.svg", scatter_svg(result.records));
  manifest.write(out / "manifest.json");
  std::cout << "MAPE " << format_number(result.report.mape) << ", Kendall tau "
            << format_number(result.report.kendall_tau) << ", Spearman rho "
            << format_number(result.report.spearman_rho) << ", step-wise tau "
            << format_number(result.report.stepwise_tau) << " over " << result.report.n << " submissions\n";
  return 0;
}

// --- synth ------------------------------------------------------------------

int synth_with(SynthConfig cfg, const fs::path& out) {
  fs::create_directories(out);
  RunManifest manifest;
  manifest.command = "synth";
  manifest.config = cfg;
  manifest.seed = cfg.seed;
  manifest.arguments = {{"out", out.string()}};
  manifest.created_at = utc_now();
  const auto s = generate(cfg);
  write_store(out, s.corpus);
  std::string truth = "submission_id,topic,news_share,expected_comments\n";
  for (std::size_t i = 0; i < s.truth.size(); ++i) {
    truth += s.corpus.submissions[i].id + "," + std::to_string(s.truth[i].topic) + "," +
             format_number(s.truth[i].news_share) + "," + format_number(s.truth[i].expected_comments) + "\n";
  }
  write_text(out / "truth.csv", truth);
  write_text(out / "summary.json", to_json(describe(s.corpus)).dump(2) + "\n");
  write_text(out / "synth_config.json", json(cfg).dump(2) + "\n");
  manifest.write(out / "manifest.json");
  std::cout << "generated " << s.corpus.news.size() << " news, " << s.corpus.submissions.size() << " submissions, "
            << s.corpus.comments.size() << " comments into " << out.string() << '\n';
  return 0;
}

// --- report -----------------------------------------------------------------

int run_report(const std::vector<std::string>& runs, const fs::path& out) {
  std::vector<MetricsRow> rows;
  std::string all = std::string(kMetricsHeader) + "\n";
  for (const auto& r : runs) {
    fs::path csv = r;
    if (fs::is_directory(csv)) csv = fs::exists(csv / "metrics.csv") ? csv / "metrics.csv" : csv / "eval" / "metrics.csv";
    if (!fs::exists(csv)) {
      std::cerr << "warning: no metrics found for " << r << '\n';
      continue;
    }
    auto more = read_metrics_csv(csv);
    rows.insert(rows.end(), more.begin(), more.end());
    std::ifstream in(csv);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (!line.empty()) all += line + "\n";
    }
  }
  if (rows.empty()) throw DataError("no evaluated runs found");
  fs::create_directories(out);
  write_text(out / "comparison.csv", all);
  write_text(out / "comparison.md", comparison_table(rows));
  write_text(out / "sweep_observation_window.md",
             "MAPE\n\n" + sweep_table(rows, true, false) + "\nKendall tau\n\n" + sweep_table(rows, true, true));
  write_text(out / "sweep_prediction_window.md",
             "MAPE\n\n" + sweep_table(rows, false, false) + "\nKendall tau\n\n" + sweep_table(rows, false, true));
  std::cout << comparison_table(rows);
  return 0;
}

// --- caspred ----------------------------------------------------------------

struct CaspredArgs {
  std::string data, out, lexicon;
  int k = 10;
  double delta_pred_days = 30.0;
  double train_fraction = 0.7;
  double l2 = 1.0;
};

int run_caspred(const CaspredArgs& a) {
  const Corpus corpus = read_store(require_data(a.data));
  const fs::path out(a.out);
  fs::create_directories(out);
  std::optional<caspred::Lexicon> lexicon;
  if (!a.lexicon.empty()) {
    lexicon = caspred::Lexicon::load_csv(a.lexicon);
  } else {
    std::cerr << "warning: no lexicon given; polarity is omitted\n";
  }
  const auto window = static_cast<Timestamp>(std::llround(a.delta_pred_days * 86400.0));
  std::map<std::string, std::vector<Timestamp>> comment_times;
  for (const auto& c : corpus.comments) comment_times[c.submission_id].push_back(c.timestamp);

  const auto& subs = corpus.submissions;
  const Timestamp t_first = subs.front().timestamp;
  const Timestamp split_at =
      t_first + static_cast<Timestamp>(static_cast<double>(subs.back().timestamp - t_first) * a.train_fraction);
  std::vector<std::vector<std::string>> train_docs;
  for (const auto& s : subs) {
    if (s.timestamp <= split_at) train_docs.push_back(normalize(s.text_digest()));
  }
  caspred::TfIdf tfidf;
  tfidf.fit(train_docs, 2);
  std::set<std::string> sub_names;
  for (const auto& s : subs) sub_names.insert(s.subreddit);

  struct Row {
    std::string id;
    bool train;
    std::int64_t size;
    caspred::CasPredFeatures f;
  };
  std::vector<Row> rows;
  for (const auto& s : subs) {
    std::vector<Timestamp> times;
    for (auto t : comment_times[s.id]) {
      if (t > s.timestamp && t <= s.timestamp + window) times.push_back(t);
    }
    const auto size = static_cast<std::int64_t>(times.size());
    auto f = caspred::extract(s, times, tfidf, lexicon ? &*lexicon : nullptr, a.k);
    if (f) rows.push_back({s.id, s.timestamp <= split_at, size, std::move(*f)});
  }
  std::size_t n_train = 0;
  for (const auto& r : rows) n_train += r.train ? 1 : 0;
  if (n_train == 0 || n_train == rows.size()) throw DataError("caspred needs eligible submissions on both sides of the split");

  std::string summary = "variant,n_train,n_test,stepwise_tau\n";
  for (auto set : {caspred::FeatureSet::org, caspred::FeatureSet::full}) {
    const std::string name = set == caspred::FeatureSet::org ? "caspred_org" : "caspred_full";
    const caspred::FeatureLayout layout(set, tfidf, {sub_names.begin(), sub_names.end()}, a.k, lexicon.has_value());
    caspred::Matrix x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(layout.size()));
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      x.row(static_cast<Eigen::Index>(i)) = layout.flatten(rows[i].f).transpose();
      ids.push_back(rows[i].id);
    }
    write_text(out / ("features_" + name + ".csv"), caspred::features_csv(layout, ids, x));
    caspred::Matrix xtr(static_cast<Eigen::Index>(n_train), x.cols());
    caspred::Matrix xte(static_cast<Eigen::Index>(rows.size() - n_train), x.cols());
    std::vector<std::int64_t> ytr, yte;
    Eigen::Index itr = 0, ite = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto step = rows[i].size / a.k;
      if (rows[i].train) {
        xtr.row(itr++) = x.row(static_cast<Eigen::Index>(i));
        ytr.push_back(step);
      } else {
        xte.row(ite++) = x.row(static_cast<Eigen::Index>(i));
        yte.push_back(step);
      }
    }
    caspred::StepwiseLogistic clf(a.l2);
    clf.fit(xtr, ytr);
    const auto pred = clf.predict(xte);
    const std::vector<double> dt(yte.begin(), yte.end());
    const std::vector<double> dp(pred.begin(), pred.end());
    const auto tau = kendall_tau(dt, dp);
    summary += name + "," + std::to_string(n_train) + "," + std::to_string(yte.size()) + "," + format_number(tau) + "\n";
  }
  write_text(out / "caspred_metrics.csv", summary);
  std::cout << summary;
  return 0;
}

// --- rerun ------------------------------------------------------------------

int run_rerun(const fs::path& manifest_path, const std::string& out) {
  const auto m = RunManifest::read(manifest_path);
  if (m.command != "synth") m.verify_data();
  if (m.command == "train") {
    return train_with(RunConfig::from_json(m.config), m.arguments.at("data").get<std::string>(), out);
  }
  if (m.command == "evaluate") {
    auto a = EvaluateArgs::from_json(m.arguments);
    a.out = out;
    return run_evaluate(a);
  }
  if (m.command == "ingest") {
    auto a = IngestArgs::from_json(m.arguments);
    a.out = out;
    return run_ingest(a);
  }
  if (m.command == "synth") return synth_with(m.config.get<SynthConfig>(), out);
  throw DataError("manifest records unknown command `" + m.command + "`");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"chatternet: chatter prediction from news and submission streams"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kArtifactVersion);

  IngestArgs ingest_args;
  auto* ingest_cmd = app.add_subcommand("ingest", "validate, sort and index raw JSONL streams");
  ingest_cmd->add_option("--news", ingest_args.news, "news JSONL")->required();
  ingest_cmd->add_option("--subs", ingest_args.subs, "submissions JSONL")->required();
  ingest_cmd->add_option("--comments", ingest_args.comments, "comments JSONL")->required();
  ingest_cmd->add_option("--out", ingest_args.out, "output store directory")->required();
  ingest_cmd->add_option("--delta-obs", ingest_args.delta_obs, "interval length in seconds")->check(CLI::PositiveNumber);
  ingest_cmd->add_option("--subreddits", ingest_args.subreddits, "keep only these subreddits")->delimiter(',');

  TrainArgs train_args;
  train_args.data = default_data_root();
  auto* train_cmd = app.add_subcommand("train", "train a model on an ingested store");
  train_cmd->add_option("--config", train_args.config, "JSON run configuration");
  train_cmd->add_option("--data", train_args.data, std::string("ingested store (default $") + kDataRootEnv + ")");
  train_cmd->add_option("--out", train_args.out, "run directory")->required();
  train_cmd->add_option("--variant", train_args.variant, "full, news_only, submission_only, static or lstm_cc");
  train_cmd->add_option("--m", train_args.m, "observation window in intervals")->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--seed", train_args.seed, "seed for every random choice");
  train_cmd->add_option("--epochs", train_args.epochs, "number of epochs")->check(CLI::PositiveNumber);
  train_cmd->add_option("--lr", train_args.learning_rate, "Adam learning rate");
  train_cmd->add_option("--delta-pred", train_args.delta_pred_days, "prediction window in days");
  train_cmd->add_option("--embedding-iterations", train_args.embedding_iterations, "skip-gram passes");

  EvaluateArgs eval_args;
  eval_args.data = default_data_root();
  auto* eval_cmd = app.add_subcommand("evaluate", "score a trained run");
  eval_cmd->add_option("--run", eval_args.run, "run directory")->required();
  eval_cmd->add_option("--data", eval_args.data, std::string("ingested store (default $") + kDataRootEnv + ")");
  eval_cmd->add_option("--out", eval_args.out, "output directory (default RUN/eval)");
  eval_cmd->add_option("--delta-pred", eval_args.delta_pred_days, "prediction window in days");
  eval_cmd->add_flag("--per-subreddit", eval_args.per_subreddit, "add one row per subreddit");
  eval_cmd->add_flag("--plot", eval_args.plot, "write an error-versus-truth scatter plot");
  eval_cmd->add_flag("--best-only", eval_args.best_only, "use the best checkpoint instead of the ensemble");
  eval_cmd->add_option("--split", eval_args.split, "train, validation or test");

  std::string synth_config, synth_out;
  std::optional<std::uint64_t> synth_seed;
  auto* synth_cmd = app.add_subcommand("synth", "generate synthetic coupled streams");
  synth_cmd->add_option("--config", synth_config, "JSON generator configuration");
  synth_cmd->add_option("--out", synth_out, "output directory")->required();
  synth_cmd->add_option("--seed", synth_seed, "generator seed");

  std::vector<std::string> report_runs;
  std::string report_out;
  auto* report_cmd = app.add_subcommand("report", "compare evaluated runs");
  report_cmd->add_option("--runs", report_runs, "run or evaluation directories")->required();
  report_cmd->add_option("--out", report_out, "output directory")->required();

  CaspredArgs cas_args;
  cas_args.data = default_data_root();
  auto* cas_cmd = app.add_subcommand("caspred", "feature-based growth-step baseline");
  cas_cmd->add_option("--data", cas_args.data, "ingested store");
  cas_cmd->add_option("--out", cas_args.out, "output directory")->required();
  cas_cmd->add_option("--lexicon", cas_args.lexicon, "term,score sentiment CSV");
  cas_cmd->add_option("--k", cas_args.k, "observed discussion size")->check(CLI::Range(4, 1000));
  cas_cmd->add_option("--delta-pred", cas_args.delta_pred_days, "prediction window in days");
  cas_cmd->add_option("--train-fraction", cas_args.train_fraction, "time share used for fitting");

  std::string rerun_manifest, rerun_out;
  auto* rerun_cmd = app.add_subcommand("rerun", "repeat a command from its manifest");
  rerun_cmd->add_option("--manifest", rerun_manifest, "manifest.json of a previous command")->required();
  rerun_cmd->add_option("--out", rerun_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(ErrorKind::usage);
  }

  try {
    if (*ingest_cmd) return run_ingest(ingest_args);
    if (*train_cmd) return train_with(train_args.effective(), require_data(train_args.data), train_args.out);
    if (*eval_cmd) return run_evaluate(eval_args);
    if (*synth_cmd) {
      SynthConfig cfg;
      if (!synth_config.empty()) {
        std::ifstream in(synth_config);
        if (!in) throw DataError("cannot read " + synth_config);
        cfg = json::parse(in).get<SynthConfig>();
      }
      if (synth_seed) cfg.seed = *synth_seed;
      return synth_with(cfg, synth_out);
    }
    if (*report_cmd) return run_report(report_runs, report_out);
    if (*cas_cmd) return run_caspred(cas_args);
    if (*rerun_cmd) return run_rerun(rerun_manifest, rerun_out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const json::exception& e) {
    std::cerr << "error: malformed JSON: " << e.what() << '\n';
    return static_cast<int>(ErrorKind::data);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ErrorKind::data);
  }
  return static_cast<int>(ErrorKind::usage);
}

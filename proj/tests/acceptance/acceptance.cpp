// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset. Exit status is nonzero when any selected
// criterion fails.

#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include "chatternet/caspred.hpp"
#include "chatternet/synthetic.hpp"
#include "support/cli.hpp"
#include "support/oracles.hpp"
#include "support/testing.hpp"

namespace {

using namespace chatternet;
using namespace chatternet::testing;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

// 1 -------------------------------------------------------------------------

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  std::size_t checked = 0, failures = 0, incomplete = 0;
  double worst = 0.0;
  const int configs = 12;
  for (int i = 0; i < configs; ++i) {
    ChatterNet model(gradient_config(i), 5 + static_cast<std::uint64_t>(i));
    CounterRng rng(77 + static_cast<std::uint64_t>(i), 1);
    randomize_alive(model, rng);
    const auto rep = check_gradients(model, make_scenario(model, rng));
    checked += rep.checked;
    failures += rep.failures;
    worst = std::max(worst, rep.max_error);
    incomplete += missing_groups(model.config(), rep).empty() ? 0 : 1;
  }
  const double secs = seconds_since(t0);
  return {failures == 0 && incomplete == 0 && secs < 300.0,
          std::to_string(configs) + " micro-configs, " + std::to_string(checked) + " entries, " +
              std::to_string(failures) + " over rel tol 1e-4 (worst " + fmt(worst, 3) + "), " +
              std::to_string(incomplete) + " configs with an untouched parameter group, " + fmt(secs, 3) + " s"};
}

// 2 -------------------------------------------------------------------------

Outcome structural_identities() {
  std::size_t checks = 0;
  std::vector<std::string> bad;
  auto expect = [&](bool ok, const std::string& what) {
    ++checks;
    if (!ok && bad.size() < 5) bad.push_back(what);
  };
  CounterRng rng(404, 0);
  const Variant variants[] = {Variant::full, Variant::news_only, Variant::submission_only, Variant::static_kernels};
  for (int trial = 0; trial < 8; ++trial) {
    for (auto v : variants) {
      for (int m : {0, 2}) {
        ChatterNet model(tiny_config(v, m), 1000 + static_cast<std::uint64_t>(trial));
        randomize_alive(model, rng);
        const auto& c = model.config();
        for (int s = 0; s < 10; ++s) {
          const auto ids = random_tokens(rng, c.submission_len, c.vocab_size, 1 + static_cast<int>(rng.below(8)));
          SubmissionInput in;
          in.tokens = ids;
          in.subreddit = static_cast<int>(rng.below(3));
          in.rate = rng.uniform(0.0, 8.0);
          for (int l = 0; l < m; ++l) in.bins.counts.push_back(static_cast<std::int64_t>(rng.below(9)));
          Vector g(c.influence_dim());
          for (Index i = 0; i < g.size(); ++i) g(i) = std::tanh(rng.normal());
          const auto p = model.forward(in, g);
          const std::string tag = to_string(v) + " m" + std::to_string(m);
          if (m == 0) expect(p.y_hat == p.base, tag + ": zero-shot y != B");
          expect(p.r > 0.0 && p.r < 1.0, tag + ": r outside (0,1)");
          expect(p.base <= p.b_tilde, tag + ": B > B~");
          expect(std::isfinite(p.y_hat) && std::isfinite(p.base) && std::isfinite(p.b_tilde), tag + ": non-finite");
        }
      }
    }
    // Unit gains and zero kernels on the calibrated block.
    ChatterNet model(tiny_config(), 2000 + static_cast<std::uint64_t>(trial));
    randomize_alive(model, rng);
    auto& p = model.params();
    for (const auto& gp : model.gain_projections()) {
      p[gp.from_influence].setZero();
      p[gp.from_subreddit].setZero();
      p[gp.bias].setOnes();
    }
    const auto& c = model.config();
    for (int s = 0; s < 10; ++s) {
      const auto ids = random_tokens(rng, c.submission_len, c.vocab_size, 1 + static_cast<int>(rng.below(8)));
      Vector g(c.influence_dim());
      for (Index i = 0; i < g.size(); ++i) g(i) = std::tanh(rng.normal());
      const Vector u = model.subreddit_vector(static_cast<int>(rng.below(3)));
      expect(std::abs(model.tec_potential(ids, g, u, true) - model.tec_potential(ids, g, u, false)) <= 1e-12,
             "unit gain: TEC differs from static kernels");
    }
    for (const auto& gp : model.gain_projections()) p[gp.bias].setZero();
    for (std::size_t l = 0; l < model.gain_projections().size(); ++l) {
      expect(model.tec_kernel(l, Vector::Zero(c.influence_dim()), Vector::Zero(c.subreddit_dim)).isZero(0.0),
             "zero influence and biases: W_TEC != 0");
    }
  }
  return {bad.empty(), std::to_string(checks) + " checks" + (bad.empty() ? "" : ", first failure: " + bad.front())};
}

// 3 -------------------------------------------------------------------------

Outcome metric_oracles() {
  auto sweep = rank_oracle_sweep(2024, 100, 1e-12);
  using V = std::vector<double>;
  sweep.check(mape(V{2, 4}, V{1, 5}, 0.0) == 37.5, "mape 37.5");
  sweep.check(mape(V{3, 7}, V{3, 7}) == 0.0, "mape 0");
  sweep.check(std::abs(mape(V{1}, V{2}) - 100.0) < 1e-4, "mape 100");
  return {sweep.failures.empty(), "100 tied sequences, " + std::to_string(sweep.cases) + " comparisons, max |diff| " +
                                      fmt(sweep.max_error, 3) +
                                      (sweep.failures.empty() ? "" : ", first failure: " + sweep.failures.front())};
}

// 4 -------------------------------------------------------------------------

Outcome stream_accounting() {
  auto sweep = partition_oracle_sweep(21, {0, 1, 2, 5}, 250);
  // Boundary cases: exactly on a bin edge and exactly on the window end.
  const std::vector<Timestamp> edge{60, 120, 86400, 86401};
  const auto bins = bin_comments(0, edge, 2, 60);
  const auto target = chatter_target(0, edge, 2, 60, 86400);
  sweep.check(bins.counts == std::vector<std::int64_t>{1, 1}, "edge comments land in the bin they close");
  sweep.check(target.count == 1, "window end is inclusive and the next second excluded");
  return {sweep.failures.empty(), std::to_string(sweep.cases) + " counting checks for m in {0,1,2,5}" +
                                      (sweep.failures.empty() ? "" : ", first failure: " + sweep.failures.front())};
}

// 5-7 -----------------------------------------------------------------------

// Desk-scale protocol for the synthetic corpus, fixed for every variant.
constexpr double kSynthLearningRate = 1e-4;
constexpr int kSynthEpochs = 12;

struct SynthRun {
  double mape = 0.0;
  std::optional<double> tau;
  double seconds = 0.0;
};

class SyntheticStudy {
 public:
  SyntheticStudy() : corpus_(generate(SynthConfig{}).corpus), root_(scratch_dir("acceptance_synth")) {
    const auto d = describe(corpus_);
    std::cerr << "synthetic corpus: " << d.submissions << " submissions, " << d.news << " news, " << d.comments
              << " comments\n";
  }

  const SynthRun& run(Variant v, int m) {
    const std::string key = to_string(v) + "_m" + std::to_string(m);
    if (auto it = runs_.find(key); it != runs_.end()) return it->second;
    RunConfig rc;
    rc.data.delta_pred = 86400;
    rc.data.m = m;
    rc.data.submission_len = 24;
    rc.data.news_len = 32;
    rc.model.variant = v;
    rc.embedding.iterations = 5;
    rc.train.learning_rate = kSynthLearningRate;
    rc.train.epochs = kSynthEpochs;
    const auto t0 = Clock::now();
    const auto dir = root_ / key;
    train_pipeline(rc, corpus_, dir, [&](const EpochSummary& s) {
      std::cerr << key << " epoch " << s.epoch << " train " << s.train_loss << " validation " << s.val_loss << "\n";
    });
    const auto r = evaluate_run(dir, corpus_);
    SynthRun out{r.report.mape, r.report.kendall_tau, seconds_since(t0)};
    std::cerr << key << " test MAPE " << out.mape << " tau " << format_number(out.tau) << " (" << out.seconds
              << " s)\n";
    return runs_.emplace(key, out).first->second;
  }

 private:
  Corpus corpus_;
  std::filesystem::path root_;
  std::map<std::string, SynthRun> runs_;
};

SyntheticStudy& study() {
  static SyntheticStudy s;
  return s;
}

Outcome exogenous_signal() {
  const auto& full = study().run(Variant::full, 0);
  const auto& stat = study().run(Variant::static_kernels, 0);
  const double gain = 1.0 - full.mape / stat.mape;
  const double minutes = (full.seconds + stat.seconds) / 60.0;
  return {gain >= 0.2 && minutes < 60.0,
          "full MAPE " + fmt(full.mape) + " vs static " + fmt(stat.mape) + ", relative improvement " +
              fmt(100.0 * gain, 3) + "% (need >= 20%), " + fmt(minutes, 3) + " min"};
}

Outcome ablation_direction() {
  const double full = study().run(Variant::full, 0).mape;
  const double news = study().run(Variant::news_only, 0).mape;
  const double subs = study().run(Variant::submission_only, 0).mape;
  const double stat = study().run(Variant::static_kernels, 0).mape;
  const double mid = std::min(news, subs);
  return {full <= mid && mid <= stat, "MAPE full " + fmt(full) + ", news_only " + fmt(news) + ", submission_only " +
                                          fmt(subs) + ", static " + fmt(stat)};
}

Outcome observation_trend() {
  const auto t0 = study().run(Variant::full, 0).tau;
  const auto t60 = study().run(Variant::full, 60).tau;
  return {t0 && t60 && *t60 >= *t0, "tau(m=60) " + format_number(t60) + " vs tau(m=0) " + format_number(t0)};
}

// 8 -------------------------------------------------------------------------

Outcome protocol_conformance() {
  auto rc = fixture_run_config(Variant::full, 0, true);
  rc.train = TrainConfig{};
  rc.train.learning_rate = kSynthLearningRate;
  std::vector<std::string> bad;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) bad.push_back(what);
  };
  expect(rc.train.epochs == 25 && rc.train.batch_size == 1 && rc.train.checkpoint_top_k == 5, "defaults");
  TrainConfig batched = rc.train;
  batched.batch_size = 2;
  bool rejected = false;
  try {
    batched.validate();
  } catch (const ConfigError&) {
    rejected = true;
  }
  expect(rejected, "batch size above one accepted");

  const Corpus corpus = fixture_corpus();
  expect(corpus.submissions.size() == 200, "fixture has " + std::to_string(corpus.submissions.size()) + " submissions");
  const Dataset data = Dataset::build(corpus, rc.data);
  const auto train_count = data.count(Split::train);
  const auto dir = scratch_dir("acceptance_protocol");
  std::vector<EpochSummary> epochs;
  train_pipeline(rc, corpus, dir, [&](const EpochSummary& s) { epochs.push_back(s); });
  expect(epochs.size() == 25, "ran " + std::to_string(epochs.size()) + " epochs");
  for (const auto& s : epochs) {
    expect(s.updates == train_count, "epoch " + std::to_string(s.epoch) + " made " + std::to_string(s.updates) +
                                         " updates for " + std::to_string(train_count) + " submissions");
    expect(s.initial_state_norm == 0.0, "epoch " + std::to_string(s.epoch) + " started from a carried state");
  }
  const auto ledger = CheckpointLedger::load(dir / "ledger.json");
  expect(ledger.capacity() == 5 && ledger.entries().size() == 5, "ledger does not hold five checkpoints");
  for (std::size_t i = 0; i + 1 < ledger.entries().size(); ++i) {
    expect(ledger.entries()[i].val_loss <= ledger.entries()[i + 1].val_loss, "ledger out of order");
  }
  std::vector<double> sorted;
  for (const auto& s : epochs) sorted.push_back(s.val_loss);
  std::sort(sorted.begin(), sorted.end());
  expect(ledger.entries().back().val_loss == sorted[4], "ledger is not the top five epochs");

  const auto models = load_ensemble(dir);
  expect(models.size() == 5, "ensemble of " + std::to_string(models.size()));
  std::vector<const ChatterNet*> ptrs;
  for (const auto& m : models) ptrs.push_back(&m);
  Vocabulary vocab = Vocabulary::load((dir / "vocab.txt").string());
  const Dataset eval_data = Dataset::build(corpus, rc.data, std::move(vocab));
  const auto mean = ensemble_predict(ptrs, eval_data, Split::test, rc.data.warmup_intervals);
  std::vector<std::vector<ScoredPrediction>> each;
  for (const auto* m : ptrs) each.push_back(predict_split(*m, eval_data, Split::test, rc.data.warmup_intervals));
  double max_diff = 0.0;
  for (std::size_t i = 0; i < mean.size(); ++i) {
    double s = 0.0;
    for (const auto& e : each) s += e[i].y_hat;
    max_diff = std::max(max_diff, std::abs(s / 5.0 - mean[i].y_hat));
  }
  expect(!mean.empty() && max_diff < 1e-12, "averaged prediction differs from the mean of five");

  const bool decreasing = epochs.size() >= 5 && epochs[4].train_loss < epochs[0].train_loss;
  expect(decreasing, "training loss did not decrease from epoch 1 to 5");
  std::string losses;
  for (std::size_t i = 0; i < std::min<std::size_t>(5, epochs.size()); ++i) {
    losses += (i ? " " : "") + fmt(epochs[i].train_loss, 4);
  }
  return {bad.empty(), std::to_string(train_count) + " updates per epoch, epoch 1-5 loss " + losses +
                           (bad.empty() ? "" : ", first failure: " + bad.front())};
}

// 9 -------------------------------------------------------------------------

Outcome caspred_exactness() {
  using namespace caspred;
  std::vector<std::string> bad;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) bad.push_back(what);
  };
  expect(complexity({{"a", 1}, {"b", 1}, {"c", 1}, {"d", 1}}) == std::log(4.0), "complexity ln 4");
  expect(complexity({{"a", 1}}) == 0.0, "complexity single term");
  expect(complexity({{"a", 5}}) == -5.0 * std::log(5.0), "complexity tf 5");
  expect(lix("The cat sat on the mat.") == 6.0, "lix 6");
  expect(lix("Extraordinary.") == 101.0, "lix 101");
  std::vector<Timestamp> t;
  for (int i = 1; i <= 10; ++i) t.push_back(10 * i);
  const auto g = temporal_gaps(t, 0, 10);
  expect(g.avg_first == 10.0 && g.avg_last == 112.5, "temporal gaps");
  const auto z = temporal_gaps(std::vector<Timestamp>(10, 0), 0, 10);
  expect(z.avg_first == 0.0 && z.avg_last == 0.0, "simultaneous gaps");
  expect(count_urls("a http://x.y b https://z.w") == 2, "referral count");
  const auto org = feature_groups(FeatureSet::org);
  const auto full = feature_groups(FeatureSet::full);
  expect(org == std::vector<std::string>{"polarity", "commenting_time", "avg_gap_first", "avg_gap_last"},
         "org feature groups");
  for (const auto& f : org) expect(std::find(full.begin(), full.end(), f) != full.end(), f + " missing from full");
  expect(full.size() == 10, "full feature groups");
  return {bad.empty(), bad.empty() ? "complexity, LIX, gaps, referrals and feature sets exact" : bad.front()};
}

// 10 ------------------------------------------------------------------------

Outcome cli_end_to_end() {
  const auto root = scratch_dir("acceptance_cli");
  const auto c = fixture("corpus200");
  const std::string store = (root / "store").string();
  const std::string run = (root / "run").string();
  const std::string rerun = (root / "rerun").string();
  auto step = [&](const std::string& args) { return run_cli(args).exit_code == 0; };
  if (!step("ingest --news " + (c / "news.jsonl").string() + " --subs " + (c / "submissions.jsonl").string() +
            " --comments " + (c / "comments.jsonl").string() + " --out " + store)) {
    return {false, "ingest failed"};
  }
  if (!step("train --config " + (c / "run_config.json").string() + " --data " + store + " --out " + run +
            " --epochs 1")) {
    return {false, "train failed"};
  }
  if (!step("evaluate --run " + run + " --data " + store)) return {false, "evaluate failed"};
  const auto csv = slurp(run + "/eval/metrics.csv");
  for (const char* col : {"mape", "kendall_tau", "spearman_rho", "stepwise_tau"}) {
    if (csv.find(col) == std::string::npos) return {false, std::string("metrics.csv lacks ") + col};
  }
  try {
    const auto m = nlohmann::json::parse(slurp(run + "/manifest.json"));
    if (m.at("command") != "train" || !m.contains("config") || !m.contains("data")) {
      return {false, "manifest incomplete"};
    }
  } catch (const std::exception& e) {
    return {false, std::string("manifest invalid: ") + e.what()};
  }
  if (!step("rerun --manifest " + run + "/manifest.json --out " + rerun)) return {false, "rerun failed"};
  if (!step("evaluate --run " + rerun + " --data " + store)) return {false, "evaluate of rerun failed"};
  const bool same = slurp(rerun + "/eval/metrics.csv") == csv;
  return {same, same ? "metrics.csv reproduced byte for byte from the manifest" : "rerun metrics differ"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient suite", gradient_suite},
      {"structural identities", structural_identities},
      {"metric oracles", metric_oracles},
      {"stream accounting", stream_accounting},
      {"synthetic exogenous signal", exogenous_signal},
      {"ablation direction", ablation_direction},
      {"observation-window trend", observation_trend},
      {"training protocol", protocol_conformance},
      {"CasPred feature exactness", caspred_exactness},
      {"end-to-end CLI", cli_end_to_end},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::stoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(n)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << n << ". " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}

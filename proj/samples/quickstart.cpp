// Generates a small synthetic corpus, trains the static variant for two
// epochs and prints test metrics for the averaged checkpoints.

#include <filesystem>
#include <iostream>

#include "chatternet/pipeline.hpp"
#include "chatternet/synthetic.hpp"

int main(int argc, char** argv) {
  namespace fs = std::filesystem;
  using namespace chatternet;
  const fs::path run_dir = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "chatternet_quickstart";
  fs::remove_all(run_dir);

  SynthConfig sc;
  sc.horizon = 36 * 3600;
  sc.submission_rate = {6.0};
  const auto synth = generate(sc);
  std::cout << synth.corpus.submissions.size() << " submissions, " << synth.corpus.news.size() << " news\n";

  RunConfig rc;
  rc.data.delta_pred = 86400;
  rc.data.submission_len = 24;
  rc.data.news_len = 32;
  rc.model.variant = Variant::static_kernels;
  rc.train.epochs = 2;
  rc.train.learning_rate = 1e-3;
  rc.embedding.iterations = 2;

  train_pipeline(rc, synth.corpus, run_dir, [](const EpochSummary& s) {
    std::cout << "epoch " << s.epoch << " train " << s.train_loss << " validation " << s.val_loss << '\n';
  });
  const auto result = evaluate_run(run_dir, synth.corpus);
  std::cout << "test MAPE " << format_number(result.report.mape) << ", Kendall tau "
            << format_number(result.report.kendall_tau) << " over " << result.report.n << " submissions\n";
  return 0;
}

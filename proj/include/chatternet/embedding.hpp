#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "chatternet/error.hpp"
#include "chatternet/rng.hpp"
#include "chatternet/text.hpp"

namespace chatternet {

using EmbeddingMatrix = Eigen::MatrixXd;  // vocabulary_size x dim, row 0 is PAD

struct EmbeddingOptions {
  int dim = 100;
  int window = 10;
  int iterations = 500;
  int negatives = 5;
  double learning_rate = 0.025;
  std::uint64_t seed = 1;
};

class EmbeddingTrainer {
 public:
  virtual ~EmbeddingTrainer() = default;
  virtual EmbeddingMatrix train(const std::vector<TokenSequence>& corpus, std::size_t vocab_size,
                                const EmbeddingOptions& options) const = 0;
};

/// Skip-gram with negative sampling, word2vec style: random window shrink,
/// unigram^0.75 noise, linearly decaying learning rate. Deterministic given
/// the seed.
class SkipGramTrainer final : public EmbeddingTrainer {
 public:
  EmbeddingMatrix train(const std::vector<TokenSequence>& corpus, std::size_t vocab_size,
                        const EmbeddingOptions& opt) const override {
    CounterRng rng(opt.seed, 0x5e1f);
    const auto dim = static_cast<Eigen::Index>(opt.dim);
    const auto rows = static_cast<Eigen::Index>(vocab_size);
    EmbeddingMatrix input(rows, dim);
    for (Eigen::Index i = 0; i < input.size(); ++i) {
      input.data()[i] = (rng.uniform() - 0.5) / static_cast<double>(opt.dim);
    }
    EmbeddingMatrix output = EmbeddingMatrix::Zero(rows, dim);

    std::vector<double> counts(vocab_size, 0.0);
    std::size_t total_tokens = 0;
    for (const auto& seq : corpus) {
      for (std::size_t i = 0; i < seq.true_length; ++i) {
        counts[static_cast<std::size_t>(seq.ids[i])] += 1.0;
        ++total_tokens;
      }
    }
    counts[Vocabulary::kPad] = 0.0;
    std::vector<double> noise_cdf(vocab_size, 0.0);
    double acc = 0.0;
    for (std::size_t i = 0; i < vocab_size; ++i) {
      acc += std::pow(counts[i], 0.75);
      noise_cdf[i] = acc;
    }
    if (total_tokens == 0 || acc <= 0.0) {
      input.row(Vocabulary::kPad).setZero();
      return input;
    }
    auto draw_noise = [&]() {
      const double u = rng.uniform() * acc;
      return static_cast<Eigen::Index>(
          std::upper_bound(noise_cdf.begin(), noise_cdf.end(), u) - noise_cdf.begin());
    };

    const double total_steps =
        static_cast<double>(opt.iterations) * static_cast<double>(total_tokens);
    double step = 0.0;
    Eigen::VectorXd grad_center(dim);
    for (int it = 0; it < opt.iterations; ++it) {
      for (const auto& seq : corpus) {
        const auto len = static_cast<std::ptrdiff_t>(seq.true_length);
        for (std::ptrdiff_t pos = 0; pos < len; ++pos) {
          const double lr = std::max(opt.learning_rate * 1e-4,
                                     opt.learning_rate * (1.0 - step / total_steps));
          step += 1.0;
          const Eigen::Index center = seq.ids[static_cast<std::size_t>(pos)];
          const auto reach = static_cast<std::ptrdiff_t>(1 + rng.below(static_cast<std::uint64_t>(opt.window)));
          for (std::ptrdiff_t c = std::max<std::ptrdiff_t>(0, pos - reach);
               c < std::min(len, pos + reach + 1); ++c) {
            if (c == pos) continue;
            const Eigen::Index context = seq.ids[static_cast<std::size_t>(c)];
            grad_center.setZero();
            for (int n = 0; n <= opt.negatives; ++n) {
              Eigen::Index target = context;
              double label = 1.0;
              if (n > 0) {
                target = draw_noise();
                if (target == context) continue;
                label = 0.0;
              }
              const double score = input.row(center).dot(output.row(target));
              const double g = lr * (label - 1.0 / (1.0 + std::exp(-score)));
              grad_center += g * output.row(target).transpose();
              output.row(target) += g * input.row(center);
            }
            input.row(center) += grad_center.transpose();
          }
        }
      }
    }
    input.row(Vocabulary::kPad).setZero();
    return input;
  }
};

inline EmbeddingMatrix pretrain_embeddings(const std::vector<TokenSequence>& corpus,
                                           std::size_t vocab_size, const EmbeddingOptions& options,
                                           const EmbeddingTrainer& trainer = SkipGramTrainer{}) {
  if (options.dim <= 0 || options.window <= 0 || options.iterations <= 0 ||
      options.negatives < 0) {
    throw ConfigError("embedding dim, window and iterations must be positive");
  }
  if (corpus.empty()) throw DataError("cannot pretrain embeddings on an empty corpus");
  if (vocab_size < 4) throw DataError("vocabulary has no special tokens");
  EmbeddingMatrix m = trainer.train(corpus, vocab_size, options);
  if (m.rows() != static_cast<Eigen::Index>(vocab_size) || m.cols() != options.dim) {
    throw DataError("embedding trainer returned a matrix of the wrong shape");
  }
  if (!m.allFinite()) throw NumericalError("embedding pretraining produced non-finite values");
  m.row(Vocabulary::kPad).setZero();
  return m;
}

// Matrix file: ASCII header "chatternet-matrix 1 <rows> <cols> float64\n"
// followed by rows*cols little-endian IEEE-754 doubles in row-major order.
inline void save_matrix(const std::string& path, const Eigen::MatrixXd& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write matrix: " + path);
  out << "chatternet-matrix 1 " << m.rows() << ' ' << m.cols() << " float64\n";
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
  out.write(reinterpret_cast<const char*>(rm.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(rm.size())));
  if (!out) throw DataError("failed writing matrix: " + path);
}

inline Eigen::MatrixXd load_matrix(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read matrix: " + path);
  std::string header;
  std::getline(in, header);
  char magic[32] = {};
  int version = 0;
  long rows = 0;
  long cols = 0;
  char dtype[16] = {};
  if (std::sscanf(header.c_str(), "%31s %d %ld %ld %15s", magic, &version, &rows, &cols, dtype) != 5 ||
      std::strcmp(magic, "chatternet-matrix") != 0 || version != 1 ||
      std::strcmp(dtype, "float64") != 0 || rows < 0 || cols < 0) {
    throw DataError("bad matrix header in " + path);
  }
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(rows, cols);
  in.read(reinterpret_cast<char*>(rm.data()),
          static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(rm.size())));
  if (!in) throw DataError("truncated matrix file: " + path);
  return rm;
}

}  // namespace chatternet

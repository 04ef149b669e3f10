#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "chatternet/error.hpp"
#include "chatternet/rng.hpp"

namespace chatternet {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;
using ParamId = std::size_t;

/// Named, ordered collection of trainable tensors. Layers refer to their
/// tensors by ParamId so optimizers, gradient checks and serialization can
/// walk every parameter uniformly.
class ParameterSet {
 public:
  ParamId add(std::string name, Index rows, Index cols) {
    if (index_.count(name) > 0) throw ConfigError("duplicate parameter " + name);
    index_.emplace(name, values_.size());
    names_.push_back(std::move(name));
    values_.push_back(Matrix::Zero(rows, cols));
    return values_.size() - 1;
  }

  Matrix& operator[](ParamId id) { return values_[id]; }
  const Matrix& operator[](ParamId id) const { return values_[id]; }

  std::size_t size() const { return values_.size(); }
  const std::string& name(ParamId id) const { return names_[id]; }
  ParamId id(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter " + name);
    return it->second;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
    return n;
  }

  bool all_finite() const {
    for (const auto& v : values_) {
      if (!v.allFinite()) return false;
    }
    return true;
  }

  /// Glorot/Xavier uniform: U(-a, a), a = sqrt(6 / (fan_in + fan_out)).
  void xavier(ParamId id, double fan_in, double fan_out, CounterRng& rng) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    Matrix& m = values_[id];
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-limit, limit);
  }

  // Binary layout: "chatternet-params 1\n", u64 count, then per tensor
  // u64 name length, name bytes, i64 rows, i64 cols and rows*cols
  // little-endian doubles in column-major order.
  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write parameters: " + path);
    out << "chatternet-params 1\n";
    write_u64(out, values_.size());
    for (std::size_t i = 0; i < values_.size(); ++i) {
      write_u64(out, names_[i].size());
      out.write(names_[i].data(), static_cast<std::streamsize>(names_[i].size()));
      const std::int64_t dims[2] = {values_[i].rows(), values_[i].cols()};
      out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
      out.write(reinterpret_cast<const char*>(values_[i].data()),
                static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(values_[i].size())));
    }
    if (!out) throw DataError("failed writing parameters: " + path);
  }

  /// Loads tensors by name into an already-shaped set; shapes must agree.
  void load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read parameters: " + path);
    std::string header;
    std::getline(in, header);
    if (header != "chatternet-params 1") throw DataError("bad parameter header in " + path);
    const auto count = read_u64(in);
    if (count != values_.size()) throw DataError("parameter count mismatch in " + path);
    for (std::uint64_t k = 0; k < count; ++k) {
      std::string name(read_u64(in), '\0');
      in.read(name.data(), static_cast<std::streamsize>(name.size()));
      std::int64_t dims[2] = {0, 0};
      in.read(reinterpret_cast<char*>(dims), sizeof(dims));
      Matrix& m = values_[id(name)];
      if (!in || dims[0] != m.rows() || dims[1] != m.cols()) {
        throw DataError("shape mismatch for " + name + " in " + path);
      }
      in.read(reinterpret_cast<char*>(m.data()),
              static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size())));
    }
    if (!in) throw DataError("truncated parameter file: " + path);
  }

 private:
  static void write_u64(std::ofstream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
  static std::uint64_t read_u64(std::ifstream& in) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
  }

  std::vector<std::string> names_;
  std::vector<Matrix> values_;
  std::unordered_map<std::string, ParamId> index_;
};

/// Gradient buffers shaped like a ParameterSet.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(const ParameterSet& params) {
    grads_.reserve(params.size());
    for (ParamId i = 0; i < params.size(); ++i) {
      grads_.push_back(Matrix::Zero(params[i].rows(), params[i].cols()));
    }
  }

  Matrix& operator[](ParamId id) { return grads_[id]; }
  const Matrix& operator[](ParamId id) const { return grads_[id]; }
  std::size_t size() const { return grads_.size(); }

  void zero() {
    for (auto& g : grads_) g.setZero();
  }

 private:
  std::vector<Matrix> grads_;
};

/// Adam with bias correction.
class Adam {
 public:
  Adam() = default;
  Adam(const ParameterSet& params, double learning_rate, double beta1 = 0.9,
       double beta2 = 0.999, double epsilon = 1e-8)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {
    for (ParamId i = 0; i < params.size(); ++i) {
      m_.push_back(Matrix::Zero(params[i].rows(), params[i].cols()));
      v_.push_back(Matrix::Zero(params[i].rows(), params[i].cols()));
    }
  }

  void step(ParameterSet& params, const Gradients& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    const double step_size = lr_ * std::sqrt(c2) / c1;
    for (ParamId i = 0; i < params.size(); ++i) {
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i].cwiseAbs2();
      params[i].array() -= step_size * m_[i].array() / (v_[i].array().sqrt() + eps_ * std::sqrt(c2));
    }
  }

  std::int64_t steps() const { return t_; }
  double learning_rate() const { return lr_; }

 private:
  double lr_ = 1e-3;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  std::int64_t t_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

}  // namespace chatternet

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "chatternet/params.hpp"

// Building blocks with explicit forward tapes and hand-written backward
// passes. Sequences are stored position-major: a feature map is a
// (length x channels) matrix.

namespace chatternet::nn {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Vector sigmoid(const Vector& x) {
  return x.unaryExpr([](double v) { return sigmoid(v); });
}

inline double leaky_relu(double x, double alpha) { return x >= 0.0 ? x : alpha * x; }

/// Rows of the (length x (kernel*channels)) patch matrix for a stride-1
/// convolution with zero "same" padding (kernel must be odd).
inline Matrix im2col(const Matrix& x, int kernel) {
  const Index length = x.rows();
  const Index channels = x.cols();
  const int half = kernel / 2;
  Matrix cols = Matrix::Zero(length, kernel * channels);
  for (int o = 0; o < kernel; ++o) {
    const int shift = o - half;
    const Index src0 = std::max<Index>(0, shift);
    const Index dst0 = std::max<Index>(0, -shift);
    const Index n = length - std::abs(shift);
    if (n <= 0) continue;
    cols.block(dst0, o * channels, n, channels) = x.block(src0, 0, n, channels);
  }
  return cols;
}

inline Matrix col2im(const Matrix& dcols, Index channels, int kernel) {
  const Index length = dcols.rows();
  const int half = kernel / 2;
  Matrix dx = Matrix::Zero(length, channels);
  for (int o = 0; o < kernel; ++o) {
    const int shift = o - half;
    const Index src0 = std::max<Index>(0, shift);
    const Index dst0 = std::max<Index>(0, -shift);
    const Index n = length - std::abs(shift);
    if (n <= 0) continue;
    dx.block(src0, 0, n, channels) += dcols.block(dst0, o * channels, n, channels);
  }
  return dx;
}

/// Max pool with window 2 and stride 2 along positions; a trailing odd row is
/// dropped.
struct PoolTape {
  Index in_rows = 0;
  Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic> argmax;
};

inline Matrix max_pool2(const Matrix& x, PoolTape& tape) {
  const Index out_rows = x.rows() / 2;
  tape.in_rows = x.rows();
  tape.argmax.resize(out_rows, x.cols());
  Matrix y(out_rows, x.cols());
  for (Index c = 0; c < x.cols(); ++c) {
    for (Index r = 0; r < out_rows; ++r) {
      const Index a = 2 * r;
      const bool first = x(a, c) >= x(a + 1, c);
      tape.argmax(r, c) = first ? a : a + 1;
      y(r, c) = first ? x(a, c) : x(a + 1, c);
    }
  }
  return y;
}

inline Matrix max_pool2_backward(const Matrix& dy, const PoolTape& tape) {
  Matrix dx = Matrix::Zero(tape.in_rows, dy.cols());
  for (Index c = 0; c < dy.cols(); ++c) {
    for (Index r = 0; r < dy.rows(); ++r) dx(tape.argmax(r, c), c) += dy(r, c);
  }
  return dx;
}

/// Column-wise max over positions.
inline Vector global_max(const Matrix& x, std::vector<Index>& argmax) {
  argmax.assign(static_cast<std::size_t>(x.cols()), 0);
  Vector y(x.cols());
  for (Index c = 0; c < x.cols(); ++c) {
    Index best = 0;
    y(c) = x.col(c).maxCoeff(&best);
    argmax[static_cast<std::size_t>(c)] = best;
  }
  return y;
}

inline Matrix global_max_backward(const Vector& dy, const std::vector<Index>& argmax, Index rows) {
  Matrix dx = Matrix::Zero(rows, dy.size());
  for (Index c = 0; c < dy.size(); ++c) dx(argmax[static_cast<std::size_t>(c)], c) = dy(c);
  return dx;
}

// ---------------------------------------------------------------------------
// GRU: z = s(Wz x + Uz h + bz), r = s(Wr x + Ur h + br),
//      n = tanh(Wn x + Un (r*h) + bn), h' = (1 - z)*n + z*h.
// Stacked gate order in W (3H x I), U (3H x H), b (3H x 1): z, r, n.

struct GruIds {
  ParamId w, u, b;
};

struct GruStepTape {
  Vector x, h_prev, z, r, n, rh;
};

inline Vector gru_step(const ParameterSet& p, const GruIds& ids, const Vector& x, const Vector& h,
                       GruStepTape* tape) {
  const Matrix& W = p[ids.w];
  const Matrix& U = p[ids.u];
  const Index H = h.size();
  const Vector a = W * x + p[ids.b].col(0);
  const Vector z = sigmoid(Vector(a.segment(0, H) + U.middleRows(0, H) * h));
  const Vector r = sigmoid(Vector(a.segment(H, H) + U.middleRows(H, H) * h));
  const Vector rh = r.cwiseProduct(h);
  const Vector n = (a.segment(2 * H, H) + U.middleRows(2 * H, H) * rh).array().tanh().matrix();
  Vector out = (Vector::Ones(H) - z).cwiseProduct(n) + z.cwiseProduct(h);
  if (tape != nullptr) *tape = GruStepTape{x, h, z, r, n, rh};
  return out;
}

/// Accumulates parameter gradients; returns (dx, dh_prev).
inline std::pair<Vector, Vector> gru_step_backward(const ParameterSet& p, const GruIds& ids,
                                                   const GruStepTape& t, const Vector& dh,
                                                   Gradients& g) {
  const Matrix& W = p[ids.w];
  const Matrix& U = p[ids.u];
  const Index H = t.h_prev.size();
  const Vector dz = dh.cwiseProduct(t.h_prev - t.n);
  const Vector dn = dh.cwiseProduct(Vector::Ones(H) - t.z);
  Vector dh_prev = dh.cwiseProduct(t.z);

  Vector da(3 * H);
  da.segment(2 * H, H) = dn.cwiseProduct((Vector::Ones(H) - t.n.cwiseAbs2()));
  const Vector drh = U.middleRows(2 * H, H).transpose() * da.segment(2 * H, H);
  const Vector dr = drh.cwiseProduct(t.h_prev);
  dh_prev += drh.cwiseProduct(t.r);
  da.segment(0, H) = dz.cwiseProduct(t.z.cwiseProduct(Vector::Ones(H) - t.z));
  da.segment(H, H) = dr.cwiseProduct(t.r.cwiseProduct(Vector::Ones(H) - t.r));

  Matrix& dU = g[ids.u];
  dU.middleRows(0, H).noalias() += da.segment(0, H) * t.h_prev.transpose();
  dU.middleRows(H, H).noalias() += da.segment(H, H) * t.h_prev.transpose();
  dU.middleRows(2 * H, H).noalias() += da.segment(2 * H, H) * t.rh.transpose();
  dh_prev.noalias() += U.middleRows(0, H).transpose() * da.segment(0, H);
  dh_prev.noalias() += U.middleRows(H, H).transpose() * da.segment(H, H);
  g[ids.w].noalias() += da * t.x.transpose();
  g[ids.b].col(0) += da;
  Vector dx = W.transpose() * da;
  return {std::move(dx), std::move(dh_prev)};
}

// ---------------------------------------------------------------------------
// LSTM with gate order i, f, g, o in W (4H x I), U (4H x H), b (4H x 1).

struct LstmIds {
  ParamId w, u, b;
};

struct LstmStepTape {
  Vector x, h_prev, c_prev, i, f, g, o, c, tanh_c;
};

inline std::pair<Vector, Vector> lstm_step(const ParameterSet& p, const LstmIds& ids,
                                           const Vector& x, const Vector& h, const Vector& c,
                                           LstmStepTape* tape) {
  const Index H = h.size();
  const Vector a = p[ids.w] * x + p[ids.u] * h + p[ids.b].col(0);
  const Vector i = sigmoid(Vector(a.segment(0, H)));
  const Vector f = sigmoid(Vector(a.segment(H, H)));
  const Vector gg = a.segment(2 * H, H).array().tanh().matrix();
  const Vector o = sigmoid(Vector(a.segment(3 * H, H)));
  Vector c_next = f.cwiseProduct(c) + i.cwiseProduct(gg);
  const Vector tanh_c = c_next.array().tanh().matrix();
  Vector h_next = o.cwiseProduct(tanh_c);
  if (tape != nullptr) *tape = LstmStepTape{x, h, c, i, f, gg, o, c_next, tanh_c};
  return {std::move(h_next), std::move(c_next)};
}

/// Returns (dh_prev, dc_prev); input gradients are not needed by callers.
inline std::pair<Vector, Vector> lstm_step_backward(const ParameterSet& p, const LstmIds& ids,
                                                    const LstmStepTape& t, const Vector& dh,
                                                    const Vector& dc_in, Gradients& grads) {
  const Index H = t.h_prev.size();
  const Vector ones = Vector::Ones(H);
  const Vector dc =
      dc_in + dh.cwiseProduct(t.o).cwiseProduct(ones - t.tanh_c.cwiseAbs2());
  Vector da(4 * H);
  da.segment(0, H) = dc.cwiseProduct(t.g).cwiseProduct(t.i.cwiseProduct(ones - t.i));
  da.segment(H, H) = dc.cwiseProduct(t.c_prev).cwiseProduct(t.f.cwiseProduct(ones - t.f));
  da.segment(2 * H, H) = dc.cwiseProduct(t.i).cwiseProduct(ones - t.g.cwiseAbs2());
  da.segment(3 * H, H) = dh.cwiseProduct(t.tanh_c).cwiseProduct(t.o.cwiseProduct(ones - t.o));
  grads[ids.w].noalias() += da * t.x.transpose();
  grads[ids.u].noalias() += da * t.h_prev.transpose();
  grads[ids.b].col(0) += da;
  Vector dh_prev = p[ids.u].transpose() * da;
  Vector dc_prev = dc.cwiseProduct(t.f);
  return {std::move(dh_prev), std::move(dc_prev)};
}

}  // namespace chatternet::nn

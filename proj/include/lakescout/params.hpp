#pragma once

#include "autodiff.hpp"
#include "error.hpp"
#include "rng.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace lakescout {

enum class EncoderMode { Linear, BiLstm };

inline const char* to_string(EncoderMode m) { return m == EncoderMode::Linear ? "linear" : "bilstm"; }

inline EncoderMode encoder_mode_from_string(const std::string& s) {
  if (s == "linear") return EncoderMode::Linear;
  if (s == "bilstm") return EncoderMode::BiLstm;
  throw ValidationError("unknown encoder mode '" + s + "'");
}

// Gate blocks stacked in order input, forget, candidate, output (4h rows).
template <class T>
struct LstmCellT {
  T w_ih;  // 4h x d_c
  T w_hh;  // 4h x h
  T bias;  // 1 x 4h
};

// Two-layer perceptron R^d -> R^d (ELU) -> R (sigmoid) over an elementwise product.
template <class T>
struct MlpT {
  T w1;  // d x d, applied as x * w1^T
  T b1;  // 1 x d
  T w2;  // d x 1
  T b2;  // 1 x 1
};

template <class T>
struct ModelT {
  EncoderMode mode = EncoderMode::BiLstm;

  T w_statement;  // linear mode: d x d_c projection per node type
  T w_table;
  LstmCellT<T> lstm_forward;   // bilstm mode, hidden width d/2 each
  LstmCellT<T> lstm_backward;

  T a_sts;  // 2d x 1 node-level attention, one per meta-path
  T a_tst;
  T q0;     // d x 1 path-level attention vector
  T w0;     // d x d
  T b0;     // 1 x d

  std::vector<T> gcn;  // r layers, d x d

  MlpT<T> decoder;
};

using ModelParams = ModelT<Matrix>;
using MlpParams = MlpT<Matrix>;

// Calls f(name, tensor_a, tensor_b, ...) for every active tensor, in a fixed order shared
// by checkpoints, optimizers and gradient collection.
template <class F, class First, class... Rest>
void visit_tensors(F&& f, First& first, Rest&... rest) {
  if (first.mode == EncoderMode::Linear) {
    f("encoder.w_statement", first.w_statement, rest.w_statement...);
    f("encoder.w_table", first.w_table, rest.w_table...);
  } else {
    f("encoder.lstm_forward.w_ih", first.lstm_forward.w_ih, rest.lstm_forward.w_ih...);
    f("encoder.lstm_forward.w_hh", first.lstm_forward.w_hh, rest.lstm_forward.w_hh...);
    f("encoder.lstm_forward.bias", first.lstm_forward.bias, rest.lstm_forward.bias...);
    f("encoder.lstm_backward.w_ih", first.lstm_backward.w_ih, rest.lstm_backward.w_ih...);
    f("encoder.lstm_backward.w_hh", first.lstm_backward.w_hh, rest.lstm_backward.w_hh...);
    f("encoder.lstm_backward.bias", first.lstm_backward.bias, rest.lstm_backward.bias...);
  }
  f("attention.a_sts", first.a_sts, rest.a_sts...);
  f("attention.a_tst", first.a_tst, rest.a_tst...);
  f("attention.q0", first.q0, rest.q0...);
  f("attention.w0", first.w0, rest.w0...);
  f("attention.b0", first.b0, rest.b0...);
  for (std::size_t l = 0; l < first.gcn.size(); ++l) {
    f("gcn.w" + std::to_string(l), first.gcn[l], rest.gcn[l]...);
  }
  f("decoder.w1", first.decoder.w1, rest.decoder.w1...);
  f("decoder.b1", first.decoder.b1, rest.decoder.b1...);
  f("decoder.w2", first.decoder.w2, rest.decoder.w2...);
  f("decoder.b2", first.decoder.b2, rest.decoder.b2...);
}

template <class F, class First, class... Rest>
void visit_mlp_tensors(F&& f, First& first, Rest&... rest) {
  f("w1", first.w1, rest.w1...);
  f("b1", first.b1, rest.b1...);
  f("w2", first.w2, rest.w2...);
  f("b2", first.b2, rest.b2...);
}

struct ModelDims {
  std::size_t d = 128;        // embedding width
  std::size_t d_c = 256;      // raw feature width
  std::size_t gcn_layers = 3;
  EncoderMode mode = EncoderMode::BiLstm;
};

inline Matrix uniform_matrix(Rng& rng, std::size_t rows, std::size_t cols, double bound) {
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = rng.uniform(-bound, bound);
  return m;
}

inline MlpParams init_mlp(std::size_t d, Rng& rng) {
  const double b = 1.0 / std::sqrt(static_cast<double>(d));
  return {uniform_matrix(rng, d, d, b), uniform_matrix(rng, 1, d, b), uniform_matrix(rng, d, 1, b),
          uniform_matrix(rng, 1, 1, b)};
}

// Every tensor uniform in (-1/sqrt(d), 1/sqrt(d)). The two linear projections start from
// the same draw so both node types begin in one shared space.
inline ModelParams init_model(const ModelDims& dims, std::uint64_t seed) {
  if (dims.d == 0 || dims.d_c == 0 || dims.gcn_layers == 0) throw ValidationError("model dimensions must be positive");
  if (dims.mode == EncoderMode::BiLstm && dims.d % 2 != 0) throw ValidationError("bilstm mode needs an even d");
  Rng rng(seed);
  const double b = 1.0 / std::sqrt(static_cast<double>(dims.d));
  ModelParams m;
  m.mode = dims.mode;
  if (dims.mode == EncoderMode::Linear) {
    m.w_statement = uniform_matrix(rng, dims.d, dims.d_c, b);
    m.w_table = m.w_statement;
  } else {
    const std::size_t h = dims.d / 2;
    for (auto* cell : {&m.lstm_forward, &m.lstm_backward}) {
      cell->w_ih = uniform_matrix(rng, 4 * h, dims.d_c, b);
      cell->w_hh = uniform_matrix(rng, 4 * h, h, b);
      cell->bias = uniform_matrix(rng, 1, 4 * h, b);
    }
  }
  m.a_sts = uniform_matrix(rng, 2 * dims.d, 1, b);
  m.a_tst = uniform_matrix(rng, 2 * dims.d, 1, b);
  m.q0 = uniform_matrix(rng, dims.d, 1, b);
  m.w0 = uniform_matrix(rng, dims.d, dims.d, b);
  m.b0 = uniform_matrix(rng, 1, dims.d, b);
  for (std::size_t l = 0; l < dims.gcn_layers; ++l) m.gcn.push_back(uniform_matrix(rng, dims.d, dims.d, b));
  m.decoder = init_mlp(dims.d, rng);
  return m;
}

inline std::size_t embedding_dim(const ModelParams& m) { return static_cast<std::size_t>(m.q0.rows()); }

inline std::size_t feature_dim(const ModelParams& m) {
  return static_cast<std::size_t>(m.mode == EncoderMode::Linear ? m.w_statement.cols() : m.lstm_forward.w_ih.cols());
}

// Leaves on `tape` for every active tensor; the result mirrors the parameter layout.
inline ModelT<ad::Var> bind(ad::Tape& tape, const ModelParams& p) {
  ModelT<ad::Var> v;
  v.mode = p.mode;
  v.gcn.resize(p.gcn.size());
  visit_tensors([&](const std::string&, ad::Var& var, const Matrix& m) { var = tape.leaf(m); }, v, p);
  return v;
}

// Same as bind, but as constants (no gradient bookkeeping).
inline ModelT<ad::Var> bind_constant(ad::Tape& tape, const ModelParams& p) {
  ModelT<ad::Var> v;
  v.mode = p.mode;
  v.gcn.resize(p.gcn.size());
  visit_tensors([&](const std::string&, ad::Var& var, const Matrix& m) { var = tape.constant(m); }, v, p);
  return v;
}

inline MlpT<ad::Var> bind(ad::Tape& tape, const MlpParams& p, bool trainable = true) {
  MlpT<ad::Var> v;
  visit_mlp_tensors(
      [&](const std::string&, ad::Var& var, const Matrix& m) { var = trainable ? tape.leaf(m) : tape.constant(m); }, v,
      p);
  return v;
}

inline ModelParams gradients(const ModelT<ad::Var>& bound, const ModelParams& like) {
  ModelParams g = like;
  visit_tensors([&](const std::string&, Matrix& out, const ad::Var& v) { out = v.grad(); }, g, bound);
  return g;
}

inline MlpParams gradients(const MlpT<ad::Var>& bound) {
  MlpParams g;
  visit_mlp_tensors([&](const std::string&, Matrix& out, const ad::Var& v) { out = v.grad(); }, g, bound);
  return g;
}

// Rounds every tensor to float32 precision, so a snapshot survives the on-disk format exactly.
template <class M>
void round_to_float(M& m) {
  auto r = [](const std::string&, Matrix& x) { x = x.cast<float>().cast<double>(); };
  if constexpr (requires { m.mode; }) {
    visit_tensors(r, m);
  } else {
    visit_mlp_tensors(r, m);
  }
}

template <class M>
bool all_finite(M& m) {
  bool ok = true;
  auto f = [&](const std::string&, const Matrix& x) { ok = ok && x.allFinite(); };
  if constexpr (requires { m.mode; }) {
    visit_tensors(f, m);
  } else {
    visit_mlp_tensors(f, m);
  }
  return ok;
}

}  // namespace lakescout

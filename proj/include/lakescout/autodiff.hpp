#pragma once

// Minimal tape-based reverse-mode differentiation over dense matrices.
//
// Every op evaluates eagerly and records a closure that pushes the upstream
// gradient into its parents. Tape::backward walks the nodes in reverse
// creation order, so a node's gradient is complete before its closure runs.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cassert>
#include <cmath>
#include <deque>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace lakescout {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

namespace ad {

class Tape;

class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  const Matrix& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
  int id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix& upstream)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Matrix value) { return push(std::move(value), true, nullptr); }
  Var constant(Matrix value) { return push(std::move(value), false, nullptr); }

  Var record(Matrix value, std::initializer_list<Var> parents, Backward fn) {
    bool needs = false;
    for (const Var& p : parents) needs = needs || node(p).requires_grad;
    return push(std::move(value), needs, needs ? std::move(fn) : nullptr);
  }
  Var record(Matrix value, const std::vector<Var>& parents, Backward fn) {
    bool needs = false;
    for (const Var& p : parents) needs = needs || node(p).requires_grad;
    return push(std::move(value), needs, needs ? std::move(fn) : nullptr);
  }

  bool requires_grad(const Var& v) const { return node(v).requires_grad; }

  // Adds `g` into v's gradient, allocating on first touch.
  template <class Expr>
  void accumulate(const Var& v, const Expr& g) {
    Node& n = node(v);
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  // Seeds d(root)/d(root) = 1 for a 1x1 root and propagates.
  void backward(const Var& root) {
    if (root.rows() != 1 || root.cols() != 1) {
      throw std::invalid_argument("backward: root must be a 1x1 scalar");
    }
    node(root).grad = Matrix::Ones(1, 1);
    for (int i = root.id(); i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.fn || n.grad.size() == 0) continue;
      n.fn(*this, n.grad);
    }
  }

  const Matrix& value_of(const Var& v) const { return node(v).value; }
  const Matrix& grad_of(const Var& v) const {
    const Node& n = node(v);
    if (n.grad.size() == 0) {
      // Untouched gradient: materialize zeros so callers see the right shape.
      const_cast<Node&>(n).grad = Matrix::Zero(n.value.rows(), n.value.cols());
    }
    return n.grad;
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Backward fn;
  };

  Var push(Matrix value, bool requires_grad, Backward fn) {
    nodes_.push_back(Node{std::move(value), Matrix(), requires_grad, std::move(fn)});
    return Var(this, static_cast<int>(nodes_.size() - 1));
  }

  Node& node(const Var& v) {
    assert(v.tape() == this);
    return nodes_[static_cast<std::size_t>(v.id())];
  }
  const Node& node(const Var& v) const {
    assert(v.tape() == this);
    return nodes_[static_cast<std::size_t>(v.id())];
  }

  std::deque<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape_->value_of(*this); }
inline const Matrix& Var::grad() const { return tape_->grad_of(*this); }

namespace detail {

inline void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch (" +
                                std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " vs " +
                                std::to_string(b.rows()) + "x" + std::to_string(b.cols()) + ")");
  }
}

template <class F, class DF>
Var unary(const Var& x, F f, DF df) {
  Matrix y = x.value().unaryExpr(f);
  return x.tape()->record(y, {x}, [x, df](Tape& t, const Matrix& g) {
    const Matrix& in = x.value();
    Matrix d(in.rows(), in.cols());
    for (Eigen::Index i = 0; i < in.size(); ++i) d(i) = df(in(i));
    t.accumulate(x, g.cwiseProduct(d));
  });
}

}  // namespace detail

// ---- linear algebra ---------------------------------------------------------

// a * b
inline Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
  return a.tape()->record(a.value() * b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate(a, g * b.value().transpose());
    if (t.requires_grad(b)) t.accumulate(b, a.value().transpose() * g);
  });
}

// a * b^T
inline Var matmul_nt(const Var& a, const Var& b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("matmul_nt: inner dimension mismatch");
  return a.tape()->record(a.value() * b.value().transpose(), {a, b},
                          [a, b](Tape& t, const Matrix& g) {
                            if (t.requires_grad(a)) t.accumulate(a, g * b.value());
                            if (t.requires_grad(b)) t.accumulate(b, g.transpose() * a.value());
                          });
}

// s * b for a constant sparse s. `s` must outlive the tape's backward pass.
inline Var spmm(const SparseMatrix& s, const Var& b) {
  if (s.cols() != b.rows()) throw std::invalid_argument("spmm: inner dimension mismatch");
  const SparseMatrix* sp = &s;
  Matrix y = s * b.value();
  return b.tape()->record(std::move(y), {b}, [sp, b](Tape& t, const Matrix& g) {
    t.accumulate(b, sp->transpose() * g);
  });
}

// ---- elementwise -------------------------------------------------------------

inline Var add(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "add");
  return a.tape()->record(a.value() + b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

inline Var sub(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "sub");
  return a.tape()->record(a.value() - b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

// a (n x m) plus the row vector b (1 x m) broadcast over rows.
inline Var add_row(const Var& a, const Var& b) {
  if (b.rows() != 1 || b.cols() != a.cols()) throw std::invalid_argument("add_row: bias shape");
  Matrix y = a.value().rowwise() + b.value().row(0);
  return a.tape()->record(std::move(y), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    if (t.requires_grad(b)) t.accumulate(b, g.colwise().sum());
  });
}

inline Var hadamard(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "hadamard");
  return a.tape()->record(a.value().cwiseProduct(b.value()), {a, b},
                          [a, b](Tape& t, const Matrix& g) {
                            if (t.requires_grad(a)) t.accumulate(a, g.cwiseProduct(b.value()));
                            if (t.requires_grad(b)) t.accumulate(b, g.cwiseProduct(a.value()));
                          });
}

inline Var scale(const Var& a, double c) {
  return a.tape()->record(a.value() * c, {a},
                          [a, c](Tape& t, const Matrix& g) { t.accumulate(a, g * c); });
}

inline Var add_scalar(const Var& a, double c) {
  Matrix y = a.value().array() + c;
  return a.tape()->record(std::move(y), {a},
                          [a](Tape& t, const Matrix& g) { t.accumulate(a, g); });
}

// a * s where s is a 1x1 Var.
inline Var scale_by(const Var& a, const Var& s) {
  if (s.rows() != 1 || s.cols() != 1) throw std::invalid_argument("scale_by: scalar expected");
  return a.tape()->record(a.value() * s.scalar(), {a, s}, [a, s](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate(a, g * s.scalar());
    if (t.requires_grad(s)) t.accumulate(s, Matrix::Constant(1, 1, g.cwiseProduct(a.value()).sum()));
  });
}

inline Var sigmoid(const Var& x) {
  Matrix y = x.value().unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
  return x.tape()->record(y, {x}, [x, y](Tape& t, const Matrix& g) {
    t.accumulate(x, g.cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix())));
  });
}

inline Var tanh(const Var& x) {
  Matrix y = x.value().array().tanh().matrix();
  return x.tape()->record(y, {x}, [x, y](Tape& t, const Matrix& g) {
    t.accumulate(x, g.cwiseProduct((1.0 - y.array().square()).matrix()));
  });
}

inline Var relu(const Var& x) {
  return detail::unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

inline Var elu(const Var& x, double alpha = 1.0) {
  return detail::unary(
      x, [alpha](double v) { return v > 0.0 ? v : alpha * std::expm1(v); },
      [alpha](double v) { return v > 0.0 ? 1.0 : alpha * std::exp(v); });
}

inline Var leaky_relu(const Var& x, double slope) {
  return detail::unary(
      x, [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double v) { return v > 0.0 ? 1.0 : slope; });
}

inline Var log(const Var& x) {
  return detail::unary(
      x, [](double v) { return std::log(v); }, [](double v) { return 1.0 / v; });
}

// Clamp into [lo, hi]; gradient is zero where the clamp is active.
inline Var clamp(const Var& x, double lo, double hi) {
  return detail::unary(
      x, [lo, hi](double v) { return std::min(hi, std::max(lo, v)); },
      [lo, hi](double v) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

// ---- reductions ---------------------------------------------------------------

inline Var sum(const Var& a) {
  return a.tape()->record(Matrix::Constant(1, 1, a.value().sum()), {a},
                          [a](Tape& t, const Matrix& g) {
                            t.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
                          });
}

inline Var mean(const Var& a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

// Mean over rows: (n x m) -> (1 x m).
inline Var mean_rows(const Var& a) {
  const double n = static_cast<double>(a.rows());
  Matrix y = a.value().colwise().sum() / n;
  return a.tape()->record(std::move(y), {a}, [a, n](Tape& t, const Matrix& g) {
    t.accumulate(a, g.replicate(a.rows(), 1) / n);
  });
}

// Row-wise dot product: (n x m), (n x m) -> (n x 1).
inline Var row_dot(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "row_dot");
  Matrix y = a.value().cwiseProduct(b.value()).rowwise().sum();
  return a.tape()->record(std::move(y), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate(a, (b.value().array().colwise() * g.col(0).array()).matrix());
    if (t.requires_grad(b)) t.accumulate(b, (a.value().array().colwise() * g.col(0).array()).matrix());
  });
}

// Each row divided by sqrt(|row|^2 + eps).
inline Var row_normalize(const Var& a, double eps = 1e-12) {
  const Vector norms = (a.value().rowwise().squaredNorm().array() + eps).sqrt().matrix();
  Matrix y = a.value().array().colwise() / norms.array();
  return a.tape()->record(y, {a}, [a, y, norms](Tape& t, const Matrix& g) {
    const Vector proj = y.cwiseProduct(g).rowwise().sum();
    Matrix d = g - (y.array().colwise() * proj.array()).matrix();
    t.accumulate(a, (d.array().colwise() / norms.array()).matrix());
  });
}

// ---- shape ----------------------------------------------------------------------

inline Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index n) {
  Matrix y = a.value().middleCols(start, n);
  return a.tape()->record(std::move(y), {a}, [a, start, n](Tape& t, const Matrix& g) {
    Matrix full = Matrix::Zero(a.rows(), a.cols());
    full.middleCols(start, n) = g;
    t.accumulate(a, full);
  });
}

inline Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index n) {
  Matrix y = a.value().middleRows(start, n);
  return a.tape()->record(std::move(y), {a}, [a, start, n](Tape& t, const Matrix& g) {
    Matrix full = Matrix::Zero(a.rows(), a.cols());
    full.middleRows(start, n) = g;
    t.accumulate(a, full);
  });
}

inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != parts[0].rows()) throw std::invalid_argument("concat_cols: row mismatch");
    cols += p.cols();
  }
  Matrix y(parts[0].rows(), cols);
  Eigen::Index c = 0;
  for (const Var& p : parts) {
    y.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  return parts[0].tape()->record(std::move(y), parts, [parts](Tape& t, const Matrix& g) {
    Eigen::Index off = 0;
    for (const Var& p : parts) {
      t.accumulate(p, g.middleCols(off, p.cols()));
      off += p.cols();
    }
  });
}

inline Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  Eigen::Index rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != parts[0].cols()) throw std::invalid_argument("concat_rows: col mismatch");
    rows += p.rows();
  }
  Matrix y(rows, parts[0].cols());
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    y.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  return parts[0].tape()->record(std::move(y), parts, [parts](Tape& t, const Matrix& g) {
    Eigen::Index off = 0;
    for (const Var& p : parts) {
      t.accumulate(p, g.middleRows(off, p.rows()));
      off += p.rows();
    }
  });
}

// Rows of `a` picked by index (repeats allowed).
inline Var gather_rows(const Var& a, std::vector<int> index) {
  Matrix y(static_cast<Eigen::Index>(index.size()), a.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    y.row(static_cast<Eigen::Index>(i)) = a.value().row(index[i]);
  }
  return a.tape()->record(std::move(y), {a}, [a, index = std::move(index)](Tape& t, const Matrix& g) {
    Matrix d = Matrix::Zero(a.rows(), a.cols());
    for (std::size_t i = 0; i < index.size(); ++i) d.row(index[i]) += g.row(static_cast<Eigen::Index>(i));
    t.accumulate(a, d);
  });
}

// ---- segment ops ----------------------------------------------------------------
//
// A segmentation of n entries is given by offsets (size S+1, offsets[0] = 0,
// offsets[S] = n); segment s covers [offsets[s], offsets[s+1]).

// Softmax within each segment of the column vector x, where entry k stands for
// multiplicity[k] identical copies. Returns the total weight of each entry's copies.
inline Var segment_softmax(const Var& x, std::vector<int> offsets, std::vector<double> multiplicity) {
  if (x.cols() != 1) throw std::invalid_argument("segment_softmax: column vector expected");
  const Eigen::Index n = x.rows();
  if (multiplicity.empty()) multiplicity.assign(static_cast<std::size_t>(n), 1.0);
  Matrix y(n, 1);
  const Matrix& v = x.value();
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    const int lo = offsets[s], hi = offsets[s + 1];
    if (lo == hi) continue;
    double mx = v(lo, 0);
    for (int k = lo; k < hi; ++k) mx = std::max(mx, v(k, 0));
    double z = 0.0;
    for (int k = lo; k < hi; ++k) {
      y(k, 0) = multiplicity[static_cast<std::size_t>(k)] * std::exp(v(k, 0) - mx);
      z += y(k, 0);
    }
    for (int k = lo; k < hi; ++k) y(k, 0) /= z;
  }
  return x.tape()->record(y, {x}, [x, y, offsets = std::move(offsets)](Tape& t, const Matrix& g) {
    Matrix d(y.rows(), 1);
    for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
      const int lo = offsets[s], hi = offsets[s + 1];
      double dot = 0.0;
      for (int k = lo; k < hi; ++k) dot += g(k, 0) * y(k, 0);
      for (int k = lo; k < hi; ++k) d(k, 0) = y(k, 0) * (g(k, 0) - dot);
    }
    t.accumulate(x, d);
  });
}

// out[s] = sum_{k in segment s} w[k] * h[row[k]]; w is (n x 1), result (S x cols(h)).
inline Var segment_weighted_sum(const Var& w, const Var& h, std::vector<int> row,
                                std::vector<int> offsets) {
  const Eigen::Index segments = static_cast<Eigen::Index>(offsets.size()) - 1;
  Matrix y = Matrix::Zero(segments, h.cols());
  const Matrix& wv = w.value();
  const Matrix& hv = h.value();
  for (Eigen::Index s = 0; s < segments; ++s) {
    for (int k = offsets[static_cast<std::size_t>(s)]; k < offsets[static_cast<std::size_t>(s) + 1]; ++k) {
      y.row(s) += wv(k, 0) * hv.row(row[static_cast<std::size_t>(k)]);
    }
  }
  return w.tape()->record(
      std::move(y), {w, h},
      [w, h, row = std::move(row), offsets = std::move(offsets)](Tape& t, const Matrix& g) {
        const Matrix& wv = w.value();
        const Matrix& hv = h.value();
        const bool need_w = t.requires_grad(w);
        const bool need_h = t.requires_grad(h);
        Matrix dw = need_w ? Matrix(Matrix::Zero(wv.rows(), 1)) : Matrix();
        Matrix dh = need_h ? Matrix(Matrix::Zero(hv.rows(), hv.cols())) : Matrix();
        for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
          for (int k = offsets[s]; k < offsets[s + 1]; ++k) {
            const int r = row[static_cast<std::size_t>(k)];
            if (need_w) dw(k, 0) = g.row(static_cast<Eigen::Index>(s)).dot(hv.row(r));
            if (need_h) dh.row(r) += wv(k, 0) * g.row(static_cast<Eigen::Index>(s));
          }
        }
        if (need_w) t.accumulate(w, dw);
        if (need_h) t.accumulate(h, dh);
      });
}

// log(sum exp) within each segment of the column vector x; result (S x 1).
inline Var segment_logsumexp(const Var& x, std::vector<int> offsets) {
  if (x.cols() != 1) throw std::invalid_argument("segment_logsumexp: column vector expected");
  const Eigen::Index segments = static_cast<Eigen::Index>(offsets.size()) - 1;
  Matrix y(segments, 1);
  Matrix soft(x.rows(), 1);
  const Matrix& v = x.value();
  for (Eigen::Index s = 0; s < segments; ++s) {
    const int lo = offsets[static_cast<std::size_t>(s)], hi = offsets[static_cast<std::size_t>(s) + 1];
    if (lo == hi) throw std::invalid_argument("segment_logsumexp: empty segment");
    double mx = v(lo, 0);
    for (int k = lo; k < hi; ++k) mx = std::max(mx, v(k, 0));
    double z = 0.0;
    for (int k = lo; k < hi; ++k) z += std::exp(v(k, 0) - mx);
    y(s, 0) = mx + std::log(z);
    for (int k = lo; k < hi; ++k) soft(k, 0) = std::exp(v(k, 0) - y(s, 0));
  }
  return x.tape()->record(std::move(y), {x},
                          [x, soft, offsets = std::move(offsets)](Tape& t, const Matrix& g) {
                            Matrix d(soft.rows(), 1);
                            for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
                              for (int k = offsets[s]; k < offsets[s + 1]; ++k) {
                                d(k, 0) = soft(k, 0) * g(static_cast<Eigen::Index>(s), 0);
                              }
                            }
                            t.accumulate(x, d);
                          });
}

}  // namespace ad
}  // namespace lakescout

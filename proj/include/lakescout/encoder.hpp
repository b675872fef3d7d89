#pragma once

#include "autodiff.hpp"
#include "error.hpp"
#include "featurizer.hpp"
#include "params.hpp"

#include <algorithm>
#include <map>
#include <vector>

namespace lakescout {

namespace detail {

inline void check_content_set(const ContentSet& cs, std::size_t d_c) {
  if (cs.elements.empty()) throw ValidationError("content set of '" + cs.node_id + "' is empty");
  for (const auto& e : cs.elements) {
    if (static_cast<std::size_t>(e.size()) != d_c) {
      throw ValidationError("content element of '" + cs.node_id + "' has dimension " + std::to_string(e.size()) +
                            ", expected " + std::to_string(d_c));
    }
  }
}

// Elements summed in lexicographic order, so the sum is bitwise independent of input order.
inline Vector ordered_sum(const ContentSet& cs) {
  std::vector<const Vector*> order;
  for (const auto& e : cs.elements) order.push_back(&e);
  std::sort(order.begin(), order.end(), [](const Vector* a, const Vector* b) {
    return std::lexicographical_compare(a->data(), a->data() + a->size(), b->data(), b->data() + b->size());
  });
  Vector s = Vector::Zero(cs.elements.front().size());
  for (const Vector* e : order) s += *e;
  return s;
}

}  // namespace detail

// h = sum_i W_a x_i.
inline Vector encode_linear(const ContentSet& cs, const Matrix& w_a) {
  detail::check_content_set(cs, static_cast<std::size_t>(w_a.cols()));
  return w_a * detail::ordered_sum(cs);
}

inline Vector encode_linear(const ContentSet& cs, const ModelParams& p, NodeType type) {
  if (p.mode != EncoderMode::Linear) throw ValidationError("encode_linear needs linear-mode parameters");
  return encode_linear(cs, type == NodeType::Statement ? p.w_statement : p.w_table);
}

// Node content prepared once for repeated tape forwards.
struct EncoderInput {
  std::size_t num_statements = 0;
  std::size_t num_tables = 0;
  Matrix statement_sum;  // S x d_c, linear mode
  Matrix table_sum;      // T x d_c
  struct Group {
    std::vector<int> nodes;    // unified node ids, all with the same content-set length
    std::vector<Matrix> steps;  // steps[i] is (nodes x d_c), element i of each node
  };
  std::vector<Group> groups;  // ascending length

  std::size_t num_nodes() const { return num_statements + num_tables; }
};

inline EncoderInput prepare_encoder_input(const std::vector<ContentSet>& statements,
                                          const std::vector<ContentSet>& tables, std::size_t d_c) {
  EncoderInput in;
  in.num_statements = statements.size();
  in.num_tables = tables.size();
  const auto dc = static_cast<Eigen::Index>(d_c);
  in.statement_sum = Matrix(static_cast<Eigen::Index>(statements.size()), dc);
  in.table_sum = Matrix(static_cast<Eigen::Index>(tables.size()), dc);
  std::map<std::size_t, std::vector<std::pair<int, const ContentSet*>>> by_len;
  for (std::size_t i = 0; i < statements.size(); ++i) {
    detail::check_content_set(statements[i], d_c);
    in.statement_sum.row(static_cast<Eigen::Index>(i)) = detail::ordered_sum(statements[i]).transpose();
    by_len[statements[i].size()].push_back({static_cast<int>(i), &statements[i]});
  }
  for (std::size_t i = 0; i < tables.size(); ++i) {
    detail::check_content_set(tables[i], d_c);
    in.table_sum.row(static_cast<Eigen::Index>(i)) = detail::ordered_sum(tables[i]).transpose();
    by_len[tables[i].size()].push_back({static_cast<int>(statements.size() + i), &tables[i]});
  }
  for (const auto& [len, members] : by_len) {
    EncoderInput::Group g;
    for (const auto& [node, cs] : members) g.nodes.push_back(node);
    for (std::size_t step = 0; step < len; ++step) {
      Matrix x(static_cast<Eigen::Index>(members.size()), dc);
      for (std::size_t r = 0; r < members.size(); ++r) {
        x.row(static_cast<Eigen::Index>(r)) = members[r].second->elements[step].transpose();
      }
      g.steps.push_back(std::move(x));
    }
    in.groups.push_back(std::move(g));
  }
  return in;
}

namespace detail {

// Hidden states of one LSTM direction over a batch of equal-length sequences, in
// sequence-position order.
inline std::vector<ad::Var> lstm_states(ad::Tape& tape, const LstmCellT<ad::Var>& cell,
                                        const std::vector<ad::Var>& xs, bool reverse) {
  const Eigen::Index n = xs.front().rows();
  const Eigen::Index h = cell.w_hh.cols();
  ad::Var hs = tape.constant(Matrix::Zero(n, h));
  ad::Var cs = tape.constant(Matrix::Zero(n, h));
  std::vector<ad::Var> out(xs.size());
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const std::size_t pos = reverse ? xs.size() - 1 - k : k;
    ad::Var z = ad::add_row(ad::add(ad::matmul_nt(xs[pos], cell.w_ih), ad::matmul_nt(hs, cell.w_hh)), cell.bias);
    ad::Var i = ad::sigmoid(ad::slice_cols(z, 0, h));
    ad::Var f = ad::sigmoid(ad::slice_cols(z, h, h));
    ad::Var g = ad::tanh(ad::slice_cols(z, 2 * h, h));
    ad::Var o = ad::sigmoid(ad::slice_cols(z, 3 * h, h));
    cs = ad::add(ad::hadamard(f, cs), ad::hadamard(i, g));
    hs = ad::hadamard(o, ad::tanh(cs));
    out[pos] = hs;
  }
  return out;
}

inline ad::Var mean_of(const std::vector<ad::Var>& vs) {
  ad::Var acc = vs.front();
  for (std::size_t i = 1; i < vs.size(); ++i) acc = ad::add(acc, vs[i]);
  return ad::scale(acc, 1.0 / static_cast<double>(vs.size()));
}

}  // namespace detail

// Content embeddings of every node, (S + T) x d in unified order.
inline ad::Var encode_nodes(ad::Tape& tape, const ModelT<ad::Var>& m, const EncoderInput& in) {
  if (m.mode == EncoderMode::Linear) {
    std::vector<ad::Var> parts;
    if (in.num_statements > 0) parts.push_back(ad::matmul_nt(tape.constant(in.statement_sum), m.w_statement));
    if (in.num_tables > 0) parts.push_back(ad::matmul_nt(tape.constant(in.table_sum), m.w_table));
    if (parts.empty()) throw ValidationError("no nodes to encode");
    return parts.size() == 1 ? parts.front() : ad::concat_rows(parts);
  }
  std::vector<ad::Var> blocks;
  std::vector<int> position(in.num_nodes(), -1);
  int row = 0;
  for (const auto& g : in.groups) {
    std::vector<ad::Var> xs;
    for (const auto& x : g.steps) xs.push_back(tape.constant(x));
    ad::Var fw = detail::mean_of(detail::lstm_states(tape, m.lstm_forward, xs, false));
    ad::Var bw = detail::mean_of(detail::lstm_states(tape, m.lstm_backward, xs, true));
    blocks.push_back(ad::concat_cols({fw, bw}));
    for (int node : g.nodes) position[static_cast<std::size_t>(node)] = row++;
  }
  if (blocks.empty()) throw ValidationError("no nodes to encode");
  ad::Var stacked = blocks.size() == 1 ? blocks.front() : ad::concat_rows(blocks);
  return ad::gather_rows(stacked, position);
}

// (1/|C|) sum_i [forward h_i ; backward h_i].
inline Vector encode_bilstm(const ContentSet& cs, const ModelParams& p) {
  if (p.mode != EncoderMode::BiLstm) throw ValidationError("encode_bilstm needs bilstm-mode parameters");
  detail::check_content_set(cs, feature_dim(p));
  ad::Tape tape;
  ModelT<ad::Var> m = bind_constant(tape, p);
  std::vector<ad::Var> xs;
  for (const auto& e : cs.elements) xs.push_back(tape.constant(e.transpose()));
  ad::Var fw = detail::mean_of(detail::lstm_states(tape, m.lstm_forward, xs, false));
  ad::Var bw = detail::mean_of(detail::lstm_states(tape, m.lstm_backward, xs, true));
  return ad::concat_cols({fw, bw}).value().transpose();
}

inline Vector encode(const ContentSet& cs, const ModelParams& p, NodeType type) {
  return p.mode == EncoderMode::Linear ? encode_linear(cs, p, type) : encode_bilstm(cs, p);
}

}  // namespace lakescout

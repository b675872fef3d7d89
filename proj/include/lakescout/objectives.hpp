#pragma once

#include "autodiff.hpp"
#include "error.hpp"
#include "params.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace lakescout {

inline constexpr double kProbabilityClamp = 1e-7;

// One anchor with its same-type negatives; indices are rows of the embedding matrices.
struct ContrastiveAnchor {
  int node = 0;
  std::vector<int> negatives;
};

// Normalized InfoNCE for one direction. The anchor view supplies h_v; the other view supplies
// the positive h_v and the negatives. Anchors without negatives are skipped; returns 0 when
// none remain.
inline ad::Var contrastive_view_loss(const ad::Var& anchor_view, const ad::Var& other_view,
                                     const std::vector<ContrastiveAnchor>& anchors, double tau) {
  if (!(tau > 0.0)) throw ValidationError("temperature must be positive");
  ad::Tape& tape = *anchor_view.tape();
  std::vector<int> rep, cand, offsets{0}, positive;
  double norm = 0.0;
  for (const auto& a : anchors) {
    if (a.negatives.empty()) continue;
    positive.push_back(static_cast<int>(cand.size()));
    rep.push_back(a.node);
    cand.push_back(a.node);
    for (int n : a.negatives) {
      rep.push_back(a.node);
      cand.push_back(n);
    }
    offsets.push_back(static_cast<int>(cand.size()));
    norm += std::log(static_cast<double>(a.negatives.size()) + 1.0);
  }
  if (positive.empty()) return tape.constant(Matrix::Zero(1, 1));
  ad::Var lhs = ad::gather_rows(ad::row_normalize(anchor_view), rep);
  ad::Var rhs = ad::gather_rows(ad::row_normalize(other_view), cand);
  ad::Var sims = ad::scale(ad::row_dot(lhs, rhs), 1.0 / tau);
  ad::Var lse = ad::segment_logsumexp(sims, offsets);
  ad::Var raw = ad::sub(ad::sum(lse), ad::sum(ad::gather_rows(sims, positive)));
  return ad::scale(raw, 1.0 / norm);
}

inline ad::Var contrastive_loss(const ad::Var& view_meta, const ad::Var& view_gcn,
                                const std::vector<ContrastiveAnchor>& meta_anchored,
                                const std::vector<ContrastiveAnchor>& gcn_anchored, double tau, double lambda) {
  if (lambda < 0.0 || lambda > 1.0) throw ValidationError("lambda must lie in [0, 1]");
  ad::Var lp = contrastive_view_loss(view_meta, view_gcn, meta_anchored, tau);
  ad::Var lr = contrastive_view_loss(view_gcn, view_meta, gcn_anchored, tau);
  return ad::add(ad::scale(lp, lambda), ad::scale(lr, 1.0 - lambda));
}

// sigmoid(MLP(h_u o h_v)) for row-aligned pairs; (n x 1).
inline ad::Var decode_pairs(const ad::Var& hu, const ad::Var& hv, const MlpT<ad::Var>& mlp) {
  ad::Var x = ad::hadamard(hu, hv);
  ad::Var hidden = ad::elu(ad::add_row(ad::matmul_nt(x, mlp.w1), mlp.b1));
  return ad::sigmoid(ad::add_row(ad::matmul(hidden, mlp.w2), mlp.b2));
}

// Pairs given as row indices into `h`.
struct EdgePairs {
  std::vector<int> u, v;

  std::size_t size() const { return u.size(); }
};

// ln(1 + L~), L~ = -(mean log p(pos) + mean log(1 - p(neg))).
inline ad::Var edge_reconstruction_loss(const ad::Var& h, const EdgePairs& positives, const EdgePairs& negatives,
                                        const MlpT<ad::Var>& mlp) {
  if (positives.size() == 0) throw ValidationError("edge reconstruction needs at least one masked edge");
  ad::Var pp = ad::clamp(decode_pairs(ad::gather_rows(h, positives.u), ad::gather_rows(h, positives.v), mlp),
                         kProbabilityClamp, 1.0 - kProbabilityClamp);
  ad::Var l = ad::mean(ad::log(pp));
  if (negatives.size() > 0) {
    ad::Var pn = ad::clamp(decode_pairs(ad::gather_rows(h, negatives.u), ad::gather_rows(h, negatives.v), mlp),
                           kProbabilityClamp, 1.0 - kProbabilityClamp);
    l = ad::add(l, ad::mean(ad::log(ad::add_scalar(ad::scale(pn, -1.0), 1.0))));
  }
  return ad::log(ad::add_scalar(ad::scale(l, -1.0), 1.0));
}

inline ad::Var joint_loss(const ad::Var& l_er, const ad::Var& l_cl, double beta) {
  if (beta < 0.0) throw ValidationError("beta must be nonnegative");
  return ad::add(l_er, ad::scale(l_cl, beta));
}

// ---- value-level entry points --------------------------------------------------------

inline double decode_edge(const Vector& hu, const Vector& hv, const MlpParams& mlp) {
  ad::Tape tape;
  auto m = bind(tape, mlp, false);
  return decode_pairs(tape.constant(hu.transpose()), tape.constant(hv.transpose()), m).scalar();
}

// Probabilities for many pairs; rows of `hu` and `hv` are aligned.
inline Vector decode_edges(const Matrix& hu, const Matrix& hv, const MlpParams& mlp) {
  ad::Tape tape;
  auto m = bind(tape, mlp, false);
  return decode_pairs(tape.constant(hu), tape.constant(hv), m).value();
}

// Log-smoothed BCE from decoder probabilities directly.
inline double edge_reconstruction_loss(const std::vector<double>& positive_probs,
                                       const std::vector<double>& negative_probs) {
  if (positive_probs.empty()) throw ValidationError("edge reconstruction needs at least one masked edge");
  auto c = [](double p) { return std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp); };
  double lp = 0.0, ln = 0.0;
  for (double p : positive_probs) lp += std::log(c(p));
  for (double p : negative_probs) ln += std::log(1.0 - c(p));
  double tilde = -lp / static_cast<double>(positive_probs.size());
  if (!negative_probs.empty()) tilde -= ln / static_cast<double>(negative_probs.size());
  return std::log(tilde + 1.0);
}

inline double contrastive_view_loss(const Matrix& anchor_view, const Matrix& other_view,
                                    const std::vector<ContrastiveAnchor>& anchors, double tau) {
  ad::Tape tape;
  return contrastive_view_loss(tape.constant(anchor_view), tape.constant(other_view), anchors, tau).scalar();
}

inline double contrastive_loss(double view_meta_loss, double view_gcn_loss, double lambda) {
  if (lambda < 0.0 || lambda > 1.0) throw ValidationError("lambda must lie in [0, 1]");
  return lambda * view_meta_loss + (1.0 - lambda) * view_gcn_loss;
}

inline double joint_loss(double l_er, double l_cl, double beta) {
  if (beta < 0.0) throw ValidationError("beta must be nonnegative");
  return l_er + beta * l_cl;
}

}  // namespace lakescout

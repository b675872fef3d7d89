#pragma once

#include "autodiff.hpp"
#include "error.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace lakescout {

struct AdamConfig {
  double learning_rate = 8e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam over a parameter structure visited with `visit(f, params, ...)`; moments are held in
// two structures of the same shape.
template <class P>
class Adam {
 public:
  template <class Visit>
  Adam(const P& like, AdamConfig config, Visit visit) : config_(config), m_(like), v_(like) {
    visit([](const std::string&, Matrix& x) { x.setZero(); }, m_);
    visit([](const std::string&, Matrix& x) { x.setZero(); }, v_);
  }

  template <class Visit>
  void step(P& params, P& grads, Visit visit) {
    ++t_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    const AdamConfig c = config_;
    visit(
        [&](const std::string& name, Matrix& p, Matrix& g, Matrix& m, Matrix& v) {
          if (g.rows() != p.rows() || g.cols() != p.cols()) throw RuntimeFailure("gradient shape mismatch for " + name);
          m = c.beta1 * m + (1.0 - c.beta1) * g;
          v = c.beta2 * v + (1.0 - c.beta2) * g.cwiseProduct(g);
          p.array() -= c.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + c.epsilon);
        },
        params, grads, m_, v_);
  }

  long steps() const { return t_; }

 private:
  AdamConfig config_;
  P m_, v_;
  long t_ = 0;
};

}  // namespace lakescout

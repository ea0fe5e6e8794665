// AdamW over named parameter arrays. Works on any module's parameters via
// the ParamRef visitor list; decay is decoupled and skipped for arrays
// flagged as non-decayed (biases, embedding tables).
#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "csg/common.hpp"

namespace csg {

struct ParamRef {
  std::string name;
  Eigen::MatrixXd* mat = nullptr;
  bool decay = true;
};

struct AdamWHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct OptimizerState {
  long step = 0;
  std::vector<Eigen::MatrixXd> m, v;

  static OptimizerState init(const std::vector<ParamRef>& params) {
    OptimizerState st;
    st.m.reserve(params.size());
    st.v.reserve(params.size());
    for (const auto& p : params) {
      st.m.push_back(Eigen::MatrixXd::Zero(p.mat->rows(), p.mat->cols()));
      st.v.push_back(Eigen::MatrixXd::Zero(p.mat->rows(), p.mat->cols()));
    }
    return st;
  }
};

/// Bias-corrected moment update with decoupled multiplicative weight decay.
/// grads must be aligned with params (same visitor order).
inline void adamw_step(const std::vector<ParamRef>& params, const std::vector<ParamRef>& grads,
                       OptimizerState& state, const AdamWHyper& hyper) {
  require(params.size() == grads.size() && params.size() == state.m.size(),
          "adamw_step: parameter/gradient/state arity mismatch");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Eigen::MatrixXd& p = *params[i].mat;
    const Eigen::MatrixXd& g = *grads[i].mat;
    require(p.rows() == g.rows() && p.cols() == g.cols(), "adamw_step: shape mismatch at ",
            params[i].name);
    auto& m = state.m[i];
    auto& v = state.v[i];
    m = hyper.beta1 * m + (1.0 - hyper.beta1) * g;
    v = hyper.beta2 * v + (1.0 - hyper.beta2) * g.cwiseProduct(g);
    if (params[i].decay && hyper.weight_decay > 0.0) p *= (1.0 - hyper.lr * hyper.weight_decay);
    p.array() -= hyper.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + hyper.eps);
  }
}

inline double grad_norm(const std::vector<ParamRef>& grads) {
  double s = 0.0;
  for (const auto& g : grads) s += g.mat->squaredNorm();
  return std::sqrt(s);
}

}  // namespace csg

#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "icgan/tensor.hpp"

namespace icgan {

// Adam with bias correction. Moment buffers are sized on first use and must
// match the parameter list on every later call.
struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t t = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

inline void adam_step(AdamState& st, const std::vector<Tensor*>& params,
                      const std::vector<const Tensor*>& grads) {
  if (params.size() != grads.size())
    throw std::invalid_argument("adam_step: " + std::to_string(params.size()) +
                                " params vs " + std::to_string(grads.size()) +
                                " grads");
  if (st.m.empty()) {
    for (const Tensor* p : params) {
      st.m.push_back(Tensor::zeros(p->shape));
      st.v.push_back(Tensor::zeros(p->shape));
    }
  }
  if (st.m.size() != params.size())
    throw std::invalid_argument("adam_step: state holds " +
                                std::to_string(st.m.size()) + " slots, got " +
                                std::to_string(params.size()) + " params");
  st.t += 1;
  double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
  double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = *grads[i];
    if (!p.same_shape(g) || !p.same_shape(st.m[i]))
      throw std::invalid_argument("adam_step: shape mismatch at slot " +
                                  std::to_string(i) + ", param " + p.shape_str() +
                                  " grad " + g.shape_str());
    Tensor& m = st.m[i];
    Tensor& v = st.v[i];
    for (std::size_t j = 0; j < p.data.size(); ++j) {
      m.data[j] = st.beta1 * m.data[j] + (1.0 - st.beta1) * g.data[j];
      v.data[j] = st.beta2 * v.data[j] + (1.0 - st.beta2) * g.data[j] * g.data[j];
      double mhat = m.data[j] / bc1;
      double vhat = v.data[j] / bc2;
      p.data[j] -= st.lr * mhat / (std::sqrt(vhat) + st.eps);
    }
  }
}

}  // namespace icgan

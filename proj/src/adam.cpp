#include "xlrec/adam.hpp"

#include <cmath>

#include "xlrec/errors.hpp"

namespace xlrec {

AdamState AdamState::init(const std::vector<const Tensor*>& params) {
  AdamState s;
  s.first_moment.reserve(params.size());
  s.second_moment.reserve(params.size());
  for (const Tensor* p : params) {
    s.first_moment.push_back(Tensor::zeros_like(*p));
    s.second_moment.push_back(Tensor::zeros_like(*p));
  }
  return s;
}

void adam_step(const std::vector<Tensor*>& params,
               const std::vector<Tensor>& grads, AdamState& state, double lr) {
  if (lr < 0.0) throw ContractError("adam_step: negative learning rate");
  if (params.size() != grads.size() ||
      params.size() != state.first_moment.size())
    throw DimensionError("adam_step: parameter/gradient/state count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (!params[i]->same_shape(grads[i]) ||
        !params[i]->same_shape(state.first_moment[i]))
      throw DimensionError("adam_step: shape mismatch at tensor " +
                           std::to_string(i));

  state.step_count += 1;
  const double b1 = state.beta1, b2 = state.beta2;
  const double corr1 = 1.0 - std::pow(b1, static_cast<double>(state.step_count));
  const double corr2 = 1.0 - std::pow(b2, static_cast<double>(state.step_count));

  for (std::size_t i = 0; i < params.size(); ++i) {
    double* p = params[i]->data.data();
    const double* g = grads[i].data.data();
    double* m = state.first_moment[i].data.data();
    double* v = state.second_moment[i].data.data();
    const std::size_t n = params[i]->data.size();
    for (std::size_t k = 0; k < n; ++k) {
      m[k] = b1 * m[k] + (1.0 - b1) * g[k];
      v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
      const double mhat = m[k] / corr1;
      const double vhat = v[k] / corr2;
      p[k] -= lr * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  }
}

void clip_grad_norm(std::vector<Tensor>& grads, double max_norm) {
  if (max_norm <= 0.0) return;
  double sq = 0.0;
  for (const Tensor& g : grads)
    for (double x : g.data) sq += x * x;
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const double s = max_norm / norm;
  for (Tensor& g : grads)
    for (double& x : g.data) x *= s;
}

}  // namespace xlrec

#include "ppn/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace ppn {

void adam_step(TensorMap& params, const TensorMap& grads, AdamState& state, double lr) {
  if (!(lr > 0.0)) throw std::invalid_argument("adam_step: learning rate must be positive");

  for (const auto& [name, p] : params) {
    auto g = grads.find(name);
    if (g == grads.end()) throw std::invalid_argument("adam_step: no gradient for '" + name + "'");
    if (g->second.shape() != p.shape()) {
      throw std::invalid_argument("adam_step: gradient of '" + name + "' has shape " +
                                  shape_string(g->second.shape()) + ", parameter has " +
                                  shape_string(p.shape()));
    }
    for (const TensorMap* acc : {&state.first_moment, &state.second_moment}) {
      auto a = acc->find(name);
      if (a != acc->end() && a->second.shape() != p.shape()) {
        throw std::invalid_argument("adam_step: accumulator of '" + name + "' has shape " +
                                    shape_string(a->second.shape()));
      }
    }
  }

  const AdamConfig& c = state.config;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(c.beta1, t);
  const double bias2 = 1.0 - std::pow(c.beta2, t);

  for (auto& [name, p] : params) {
    const Tensor& g = grads.at(name);
    Tensor& m = state.first_moment.try_emplace(name, p.shape()).first->second;
    Tensor& v = state.second_moment.try_emplace(name, p.shape()).first->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i] + c.weight_decay * p[i];
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

void LrSchedule::validate() const {
  if (!(initial_lr > 0.0)) throw std::invalid_argument("initial_lr must be positive");
  if (!(decay_factor > 0.0 && decay_factor <= 1.0)) {
    throw std::invalid_argument("decay_factor must lie in (0, 1]");
  }
  if (decay_every == 0) throw std::invalid_argument("decay_every must be positive");
}

double learning_rate(std::uint64_t iteration, const LrSchedule& schedule) {
  if (iteration < schedule.decay_start) return schedule.initial_lr;
  const std::uint64_t decays = (iteration - schedule.decay_start) / schedule.decay_every + 1;
  return schedule.initial_lr * std::pow(schedule.decay_factor, static_cast<double>(decays));
}

}  // namespace ppn

#pragma once

#include <cstdint>

#include "ppn/tensor.hpp"

namespace ppn {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// L2 coefficient added to each gradient before the moment updates.
  double weight_decay = 0.0;
};

/// First/second moment accumulators keyed like the parameters they track.
struct AdamState {
  AdamConfig config;
  TensorMap first_moment;
  TensorMap second_moment;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update of every parameter in `params`. Each
/// parameter needs a gradient of identical shape; accumulators are created on
/// the first step. Throws std::invalid_argument on a missing gradient or any
/// shape mismatch, leaving params and state untouched.
void adam_step(TensorMap& params, const TensorMap& grads, AdamState& state, double lr);

/// Step-decay schedule: lr stays at initial_lr until decay_start, then is
/// multiplied by decay_factor at decay_start and every decay_every
/// iterations after it.
struct LrSchedule {
  double initial_lr = 1e-3;
  double decay_factor = 0.7;
  std::uint64_t decay_every = 15000;
  std::uint64_t decay_start = 10000;

  void validate() const;
};

double learning_rate(std::uint64_t iteration, const LrSchedule& schedule);

}  // namespace ppn

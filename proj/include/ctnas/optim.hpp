#pragma once

#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "ctnas/matrix.hpp"

namespace ctnas {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 5e-4;
};

struct AdamState {
  AdamConfig config;
  std::size_t step = 0;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;

  AdamState() = default;
  AdamState(AdamConfig cfg, std::span<const Matrix> params);
};

/// One Adam step with decoupled weight decay (param -= lr * wd * param).
/// Moment buffers are lazily shaped on the first call.
void adam_step(std::span<Matrix> params, std::span<const Matrix> grads, AdamState& state);

/// Xavier-uniform initialisation, bound sqrt(6 / (fan_in + fan_out)).
Matrix xavier_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);

/// Loss evaluated at the given parameters; fills `grads` (same shapes) with
/// the analytic gradient when non-null.
using LossFn = std::function<double(std::span<const Matrix> params, std::vector<Matrix>* grads)>;

/// Max over all parameter entries of
/// |analytic - central difference| / max(|analytic|, |central difference|, 1e-8).
double grad_check(const LossFn& loss_fn, std::span<const Matrix> params, double eps = 1e-5);

}  // namespace ctnas

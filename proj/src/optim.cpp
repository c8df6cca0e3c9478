#include "ctnas/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ctnas {

AdamState::AdamState(AdamConfig cfg, std::span<const Matrix> params) : config(cfg) {
  for (const Matrix& p : params) {
    first_moment.emplace_back(p.rows(), p.cols());
    second_moment.emplace_back(p.rows(), p.cols());
  }
}

void adam_step(std::span<Matrix> params, std::span<const Matrix> grads, AdamState& state) {
  if (params.size() != grads.size()) {
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " params vs " +
                     std::to_string(grads.size()) + " grads");
  }
  if (state.first_moment.empty()) state = AdamState(state.config, params);
  if (state.first_moment.size() != params.size()) {
    throw ShapeError("adam_step: optimizer state built for a different parameter list");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].same_shape(grads[i]) || !params[i].same_shape(state.first_moment[i])) {
      throw ShapeError("adam_step: shape mismatch at tensor " + std::to_string(i) + " " +
                       shape_str(params[i]) + " vs " + shape_str(grads[i]));
    }
  }

  const AdamConfig& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].data();
    auto g = grads[i].data();
    auto m = state.first_moment[i].data();
    auto v = state.second_moment[i].data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g[k];
      v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g[k] * g[k];
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      p[k] -= c.lr * (mhat / (std::sqrt(vhat) + c.eps) + c.weight_decay * p[k]);
    }
  }
}

Matrix xavier_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(fan_in, fan_out);
  for (double& v : m.data()) v = dist(rng);
  return m;
}

double grad_check(const LossFn& loss_fn, std::span<const Matrix> params, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("grad_check: eps must be positive");
  std::vector<Matrix> work(params.begin(), params.end());
  std::vector<Matrix> analytic;
  for (const Matrix& p : params) analytic.emplace_back(p.rows(), p.cols());
  const double base = loss_fn(work, &analytic);
  if (!std::isfinite(base)) throw std::domain_error("grad_check: non-finite loss");

  double worst = 0.0;
  for (std::size_t t = 0; t < work.size(); ++t) {
    auto data = work[t].data();
    for (std::size_t k = 0; k < data.size(); ++k) {
      const double orig = data[k];
      data[k] = orig + eps;
      const double up = loss_fn(work, nullptr);
      data[k] = orig - eps;
      const double down = loss_fn(work, nullptr);
      data[k] = orig;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw std::domain_error("grad_check: non-finite loss");
      }
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[t].data()[k];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace ctnas

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "centroid_reg/errors.hpp"
#include "centroid_reg/model.hpp"

namespace centroid_reg {

enum class OptimizerKind { sgd, adam };

inline std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }

inline OptimizerKind parse_optimizer(std::string_view s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  throw ValidationError("unknown optimizer '" + std::string(s) + "' (expected sgd or adam)");
}

struct OptimizerSettings {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
};

namespace detail {
inline void check_step_args(std::span<const double> params, std::span<const double> grads) {
  if (params.size() != grads.size()) {
    throw ShapeError("optimizer step: " + std::to_string(params.size()) + " parameters but " +
                     std::to_string(grads.size()) + " gradients");
  }
  for (double g : grads) {
    if (!std::isfinite(g)) throw ValidationError("optimizer step: non-finite gradient");
  }
}
}  // namespace detail

/// p <- p - lr * g
inline void sgd_step(std::span<double> params, std::span<const double> grads, double learning_rate) {
  detail::check_step_args(params, grads);
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= learning_rate * grads[i];
}

/// Adam with bias-corrected moments.
inline void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
                      const OptimizerSettings& s) {
  detail::check_step_args(params, grads);
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  } else if (state.m.size() != params.size()) {
    throw ShapeError("adam_step: optimizer state does not match the parameter block");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(s.beta1, t);
  const double c2 = 1.0 - std::pow(s.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = s.beta1 * state.m[i] + (1.0 - s.beta1) * g;
    state.v[i] = s.beta2 * state.v[i] + (1.0 - s.beta2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= s.learning_rate * m_hat / (std::sqrt(v_hat) + s.eps);
  }
}

/// Applies one optimizer update to all four parameter blocks of a model.
class ModelOptimizer {
 public:
  explicit ModelOptimizer(OptimizerSettings settings) : settings_(settings) {
    if (!(settings_.learning_rate > 0.0)) throw ValidationError("learning rate must be positive");
  }

  void step(RegularizedHeadModel& model, const Gradients& grads) {
    auto params = model.blocks();
    const auto g = grads.blocks();
    for (std::size_t b = 0; b < params.size(); ++b) {
      if (settings_.kind == OptimizerKind::sgd) {
        sgd_step(params[b], g[b], settings_.learning_rate);
      } else {
        adam_step(params[b], g[b], adam_[b], settings_);
      }
    }
  }

  const OptimizerSettings& settings() const noexcept { return settings_; }

 private:
  OptimizerSettings settings_;
  std::array<AdamState, 4> adam_{};
};

}  // namespace centroid_reg

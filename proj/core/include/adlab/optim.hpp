#pragma once

// First-order update rules over the policy's parameter tensors. Both rules
// descend: callers maximizing an objective pass the gradient of its negation.

#include <optional>
#include <string_view>

#include "adlab/policy.hpp"

namespace adlab {

enum class OptimizerKind { Sgd, Adam };

std::string_view to_string(OptimizerKind k) noexcept;
std::optional<OptimizerKind> parse_optimizer_kind(std::string_view text) noexcept;

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Sgd;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;  // throws InvalidConfig
};

class Optimizer {
 public:
  Optimizer(OptimizerConfig config, const PolicyParams& params);

  // Applies one update and bumps params.version.
  void step(PolicyParams& params, const Gradients& grads, double learning_rate);

  const OptimizerConfig& config() const noexcept { return config_; }

 private:
  OptimizerConfig config_;
  std::optional<ParamTensors> m_;
  std::optional<ParamTensors> v_;
  std::uint64_t t_ = 0;
};

}  // namespace adlab

#include "adlab/optim.hpp"

#include <cmath>

namespace adlab {

std::string_view to_string(OptimizerKind k) noexcept { return k == OptimizerKind::Sgd ? "sgd" : "adam"; }

std::optional<OptimizerKind> parse_optimizer_kind(std::string_view text) noexcept {
  if (text == "sgd") return OptimizerKind::Sgd;
  if (text == "adam") return OptimizerKind::Adam;
  return std::nullopt;
}

void OptimizerConfig::validate() const {
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw Error(Errc::InvalidConfig, "optimizer betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw Error(Errc::InvalidConfig, "optimizer eps must be positive");
}

Optimizer::Optimizer(OptimizerConfig config, const PolicyParams& params) : config_(config) {
  config_.validate();
  if (config_.kind == OptimizerKind::Adam) {
    m_ = ParamTensors::zeros(params.config);
    v_ = ParamTensors::zeros(params.config);
  }
}

void Optimizer::step(PolicyParams& params, const Gradients& grads, double learning_rate) {
  ++params.version;
  if (config_.kind == OptimizerKind::Sgd) {
    params.tensors.add_scaled(grads.tensors, -learning_rate);
    return;
  }
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  const double b1 = config_.beta1, b2 = config_.beta2, eps = config_.eps;

  // Walk the four tensor sets in lockstep; for_each order is fixed.
  std::vector<double*> p, m, v;
  std::vector<const double*> g;
  std::vector<std::size_t> n;
  params.tensors.for_each([&](const std::string&, auto& t) {
    p.push_back(t.data());
    n.push_back(static_cast<std::size_t>(t.size()));
  });
  m_->for_each([&](const std::string&, auto& t) { m.push_back(t.data()); });
  v_->for_each([&](const std::string&, auto& t) { v.push_back(t.data()); });
  grads.tensors.for_each([&](const std::string&, const auto& t) { g.push_back(t.data()); });

  for (std::size_t k = 0; k < p.size(); ++k) {
    for (std::size_t i = 0; i < n[k]; ++i) {
      const double gi = g[k][i];
      m[k][i] = b1 * m[k][i] + (1.0 - b1) * gi;
      v[k][i] = b2 * v[k][i] + (1.0 - b2) * gi * gi;
      p[k][i] -= learning_rate * (m[k][i] / c1) / (std::sqrt(v[k][i] / c2) + eps);
    }
  }
}

}  // namespace adlab

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>

#include "adlab/train.hpp"
#include "helpers.hpp"

namespace adlab::testing {

// Surrogate evaluated from scratch with min(), independent of the trainer.
inline double oracle_surrogate(const PolicyParams& params, const PolicyParams& ref, const ScoredGroup& g,
                               const GrpoConfig& cfg) {
  const double lo = 1.0 - cfg.clip_epsilon, hi = 1.0 + cfg.clip_epsilon;
  double total = 0.0;
  for (std::size_t i = 0; i < g.outputs.size(); ++i) {
    const auto cur = token_logprobs(params, g.prompt, g.outputs[i]);
    const auto rlp = token_logprobs(ref, g.prompt, g.outputs[i]);
    const double a = g.advantages[i];
    auto kl = [](double r, double c) { return std::exp(r - c) - (r - c) - 1.0; };
    if (cfg.ratio_level == RatioLevel::Token) {
      double s = 0.0;
      for (std::size_t t = 0; t < cur.size(); ++t) {
        const double rho = std::exp(cur[t] - g.old_logprobs[i][t]);
        s += std::min(rho * a, std::clamp(rho, lo, hi) * a) - cfg.kl_beta * kl(rlp[t], cur[t]);
      }
      total += s / static_cast<double>(cur.size());
    } else {
      const double c = std::accumulate(cur.begin(), cur.end(), 0.0);
      const double o = std::accumulate(g.old_logprobs[i].begin(), g.old_logprobs[i].end(), 0.0);
      const double r = std::accumulate(rlp.begin(), rlp.end(), 0.0);
      const double rho = std::exp(c - o);
      total += std::min(rho * a, std::clamp(rho, lo, hi) * a) - cfg.kl_beta * kl(r, c);
    }
  }
  return total / static_cast<double>(g.outputs.size());
}

inline ScoredGroup make_group(const PolicyParams& old_params, Rng& rng, std::size_t vocab) {
  ScoredGroup g;
  g.prompt = random_tokens(rng, 4, vocab);
  const std::vector<double> rewards = {1.75, 0.25, 1.0, 2.0};
  for (std::size_t len : {3, 5, 2, 4}) {
    g.outputs.push_back(random_tokens(rng, len, vocab));
    g.old_logprobs.push_back(token_logprobs(old_params, g.prompt, g.outputs.back()));
  }
  g.advantages = grpo_advantages(rewards);
  return g;
}

}  // namespace adlab::testing

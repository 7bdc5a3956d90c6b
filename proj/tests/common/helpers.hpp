#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "adlab/policy.hpp"
#include "adlab/rng.hpp"

namespace adlab::testing {

inline PolicyConfig tiny_config(std::size_t vocab = 24) {
  PolicyConfig c;
  c.vocab_size = vocab;
  c.context_len = 20;
  c.embed_dim = 8;
  c.num_layers = 2;
  c.num_heads = 2;
  c.seed = 11;
  return c;
}

// Non-reserved random tokens so sequences never contain EOS by accident.
inline TokenSeq random_tokens(Rng& rng, std::size_t n, std::size_t vocab) {
  TokenSeq out(n);
  for (auto& t : out) t = static_cast<TokenId>(rng.uniform_int(3, static_cast<std::int64_t>(vocab) - 1));
  return out;
}

// Every parameter entry perturbed by N(0, scale) so gains and biases are
// away from their special initial values.
inline void jitter(PolicyParams& p, std::uint64_t seed, double scale) {
  Rng rng(seed);
  p.tensors.for_each([&](const std::string&, auto& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] += scale * rng.normal();
  });
}

struct GradCheck {
  double max_rel = 0.0;
  std::string worst;
  std::size_t checked = 0;
};

// Central differences over every parameter entry against an analytic
// gradient. rel = |a - n| / max(|a|, |n|, floor).
inline GradCheck check_gradient(PolicyParams params, const Gradients& analytic,
                                const std::function<double(const PolicyParams&)>& f, double h = 1e-5,
                                double floor = 1e-6) {
  GradCheck out;
  std::vector<double*> p;
  std::vector<const double*> g;
  std::vector<std::size_t> n;
  std::vector<std::string> names;
  params.tensors.for_each([&](const std::string& name, auto& t) {
    p.push_back(t.data());
    n.push_back(static_cast<std::size_t>(t.size()));
    names.push_back(name);
  });
  analytic.tensors.for_each([&](const std::string&, const auto& t) { g.push_back(t.data()); });
  for (std::size_t k = 0; k < p.size(); ++k) {
    for (std::size_t i = 0; i < n[k]; ++i) {
      const double saved = p[k][i];
      p[k][i] = saved + h;
      const double up = f(params);
      p[k][i] = saved - h;
      const double down = f(params);
      p[k][i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = g[k][i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      if (rel > out.max_rel) {
        out.max_rel = rel;
        out.worst = names[k] + "[" + std::to_string(i) + "] analytic " + std::to_string(a) + " numeric " +
                    std::to_string(numeric);
      }
      ++out.checked;
    }
  }
  return out;
}

}  // namespace adlab::testing

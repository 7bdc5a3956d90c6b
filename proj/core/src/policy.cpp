#include <algorithm>
#include <cmath>
#include <limits>

#include "adlab/model.hpp"
#include "adlab/rng.hpp"
#include "model_ops.hpp"

namespace adlab {

void PolicyConfig::validate() const {
  auto fail = [](const std::string& why) { throw Error(Errc::InvalidConfig, why); };
  if (vocab_size == 0) fail("vocab_size must be positive");
  if (vocab_size > kMaxVocabSize) fail("vocab_size exceeds " + std::to_string(kMaxVocabSize));
  if (context_len == 0) fail("context_len must be positive");
  if (embed_dim == 0) fail("embed_dim must be positive");
  if (num_layers == 0) fail("num_layers must be positive");
  if (num_heads == 0) fail("num_heads must be positive");
  if (embed_dim % num_heads != 0) {
    fail("embed_dim " + std::to_string(embed_dim) + " is not divisible by num_heads " + std::to_string(num_heads));
  }
}

ParamTensors ParamTensors::zeros(const PolicyConfig& c) {
  const auto v = static_cast<Eigen::Index>(c.vocab_size);
  const auto d = static_cast<Eigen::Index>(c.embed_dim);
  const auto f = static_cast<Eigen::Index>(c.ffn_dim());
  ParamTensors t;
  t.tok_emb = Matrix::Zero(v, d);
  t.pos_emb = Matrix::Zero(static_cast<Eigen::Index>(c.context_len), d);
  t.layers.resize(c.num_layers);
  for (auto& l : t.layers) {
    l.ln1 = RowVector::Zero(d);
    l.wqkv = Matrix::Zero(d, 3 * d);
    l.bqkv = RowVector::Zero(3 * d);
    l.wo = Matrix::Zero(d, d);
    l.bo = RowVector::Zero(d);
    l.ln2 = RowVector::Zero(d);
    l.w1 = Matrix::Zero(d, f);
    l.b1 = RowVector::Zero(f);
    l.w2 = Matrix::Zero(f, d);
    l.b2 = RowVector::Zero(d);
  }
  t.lnf = RowVector::Zero(d);
  t.wout = Matrix::Zero(d, v);
  t.bout = RowVector::Zero(v);
  return t;
}

std::size_t ParamTensors::parameter_count() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const auto& t) { n += static_cast<std::size_t>(t.size()); });
  return n;
}

bool ParamTensors::all_finite() const {
  bool ok = true;
  for_each([&](const std::string&, const auto& t) { ok = ok && t.allFinite(); });
  return ok;
}

void ParamTensors::set_zero() {
  for_each([](const std::string&, auto& t) { t.setZero(); });
}

void ParamTensors::add_scaled(const ParamTensors& other, double scale) {
  std::vector<double*> mine;
  for_each([&](const std::string&, auto& t) { mine.push_back(t.data()); });
  std::size_t i = 0;
  other.for_each([&](const std::string&, const auto& t) {
    double* dst = mine[i++];
    const double* src = t.data();
    for (Eigen::Index k = 0; k < t.size(); ++k) dst[k] += scale * src[k];
  });
}

PolicyParams init_params(const PolicyConfig& config) {
  config.validate();
  PolicyParams p{config, ParamTensors::zeros(config), 0};
  Rng rng(mix_seed(config.seed, 0));
  const double scale = 1.0 / std::sqrt(static_cast<double>(config.embed_dim));
  p.tensors.for_each([&](const std::string& name, auto& t) {
    const bool is_gain = name.ends_with("ln1") || name.ends_with("ln2") || name == "lnf";
    const bool is_bias = name.ends_with("bqkv") || name.ends_with("bo") || name.ends_with("b1") ||
                         name.ends_with("b2") || name == "bout";
    if (is_gain) {
      t.setOnes();
    } else if (!is_bias) {
      for (Eigen::Index k = 0; k < t.size(); ++k) t.data()[k] = scale * rng.normal();
    }
  });
  return p;
}

std::vector<double> token_logprobs(const PolicyParams& params, const TokenSeq& prompt, const TokenSeq& output) {
  if (output.empty()) return {};
  const SequenceRef seq{prompt, output};
  const PackedBatch batch = pack_sequences({&seq, 1}, params.config);
  return forward(params, batch).logprobs;
}

double sequence_nll(const PolicyParams& params, const TokenSeq& prompt, const TokenSeq& output) {
  if (output.empty()) throw Error(Errc::EmptyOutput, "sequence_nll needs a non-empty output");
  const auto lp = token_logprobs(params, prompt, output);
  double sum = 0.0;
  for (double v : lp) sum += v;
  return -sum / static_cast<double>(lp.size());
}

std::pair<double, Gradients> nll_gradient(const PolicyParams& params, const TokenSeq& prompt,
                                          const TokenSeq& output) {
  if (output.empty()) throw Error(Errc::EmptyOutput, "nll_gradient needs a non-empty output");
  const SequenceRef seq{prompt, output};
  const PackedBatch batch = pack_sequences({&seq, 1}, params.config);
  const ForwardResult fwd = forward(params, batch);
  const double inv_len = 1.0 / static_cast<double>(output.size());
  double sum = 0.0;
  for (double v : fwd.logprobs) sum += v;
  const std::vector<double> coeff(output.size(), -inv_len);
  Gradients g = Gradients::zeros_like(params);
  backward(params, batch, fwd.cache, coeff, g);
  return {-sum * inv_len, std::move(g)};
}

Gradients weighted_logprob_gradient(const PolicyParams& params, const TokenSeq& prompt, const TokenSeq& output,
                                    double weight) {
  Gradients g = Gradients::zeros_like(params);
  if (output.empty()) throw Error(Errc::EmptyOutput, "weighted_logprob_gradient needs a non-empty output");
  const SequenceRef seq{prompt, output};
  const PackedBatch batch = pack_sequences({&seq, 1}, params.config);
  if (weight == 0.0) return g;
  const ForwardResult fwd = forward(params, batch);
  const std::vector<double> coeff(output.size(), weight);
  backward(params, batch, fwd.cache, coeff, g);
  return g;
}

namespace {

// Key/value rows for one decoding branch, per layer.
struct BranchCache {
  std::vector<Matrix> keys;
  std::vector<Matrix> values;
  std::size_t length = 0;
};

// Runs the prompt once, keeps each layer's prompt keys/values, and returns the
// next-token log-distribution at the last prompt position.
struct Prefill {
  std::vector<Matrix> keys;
  std::vector<Matrix> values;
  RowVector logprobs;
};

Prefill prefill(const PolicyParams& params, const TokenSeq& prompt) {
  const auto d = static_cast<Eigen::Index>(params.config.embed_dim);
  const auto p = static_cast<Eigen::Index>(prompt.size());
  PackedBatch batch;
  batch.tokens = prompt;
  for (Eigen::Index j = 0; j < p; ++j) {
    batch.positions.push_back(static_cast<int>(j));
    batch.branch_start.push_back(-1);
  }
  batch.prefix_len = static_cast<int>(p);
  batch.targets.push_back({static_cast<int>(p - 1), 0});
  batch.seq_offsets = {0, 1};
  ForwardResult fwd = forward(params, batch);

  Prefill out;
  for (const auto& lc : fwd.cache.layers) {
    out.keys.emplace_back(lc.qkv.middleCols(d, d));
    out.values.emplace_back(lc.qkv.rightCols(d));
  }
  out.logprobs = fwd.cache.probs.row(0).array().log();
  return out;
}

// Advances every listed branch by one token; returns next-token
// log-distributions (one row per branch). Mirrors forward() for new rows.
Matrix decode_step(const PolicyParams& params, const Prefill& pre, std::vector<BranchCache>& caches,
                   const std::vector<std::size_t>& active, const std::vector<TokenId>& tokens, int position) {
  const PolicyConfig& cfg = params.config;
  const ParamTensors& w = params.tensors;
  const auto n = static_cast<Eigen::Index>(active.size());
  const auto d = static_cast<Eigen::Index>(cfg.embed_dim);
  const auto hd = static_cast<Eigen::Index>(cfg.head_dim());
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  const Eigen::Index prompt_len = pre.keys.front().rows();

  Matrix x(n, d);
  for (Eigen::Index i = 0; i < n; ++i) x.row(i) = w.tok_emb.row(tokens[i]) + w.pos_emb.row(position);

  Matrix a, qkv, ctx, x_mid, m, u, z;
  Eigen::VectorXd inv;
  std::vector<double> scores(cfg.context_len + 1);
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    const LayerTensors& lw = w.layers[l];
    ops::rmsnorm_forward(x, lw.ln1, a, inv);
    qkv.noalias() = a * lw.wqkv;
    qkv.rowwise() += lw.bqkv;
    ctx.setZero(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
      BranchCache& bc = caches[active[i]];
      bc.keys[l].row(static_cast<Eigen::Index>(bc.length)) = qkv.row(i).segment(d, d);
      bc.values[l].row(static_cast<Eigen::Index>(bc.length)) = qkv.row(i).segment(2 * d, d);
      const Eigen::Index own = static_cast<Eigen::Index>(bc.length) + 1;
      for (std::size_t h = 0; h < cfg.num_heads; ++h) {
        const Eigen::Index off = static_cast<Eigen::Index>(h) * hd;
        const auto q = qkv.row(i).segment(off, hd);
        double mx = -std::numeric_limits<double>::infinity();
        Eigen::Index s = 0;
        for (Eigen::Index j = 0; j < prompt_len; ++j, ++s) {
          scores[s] = q.dot(pre.keys[l].row(j).segment(off, hd)) * scale;
          mx = std::max(mx, scores[s]);
        }
        for (Eigen::Index j = 0; j < own; ++j, ++s) {
          scores[s] = q.dot(bc.keys[l].row(j).segment(off, hd)) * scale;
          mx = std::max(mx, scores[s]);
        }
        double sum = 0.0;
        for (Eigen::Index k = 0; k < s; ++k) {
          scores[k] = std::exp(scores[k] - mx);
          sum += scores[k];
        }
        auto out = ctx.row(i).segment(off, hd);
        s = 0;
        for (Eigen::Index j = 0; j < prompt_len; ++j, ++s) out += (scores[s] / sum) * pre.values[l].row(j).segment(off, hd);
        for (Eigen::Index j = 0; j < own; ++j, ++s) out += (scores[s] / sum) * bc.values[l].row(j).segment(off, hd);
      }
    }
    x_mid = x;
    x_mid.noalias() += ctx * lw.wo;
    x_mid.rowwise() += lw.bo;
    ops::rmsnorm_forward(x_mid, lw.ln2, m, inv);
    u.noalias() = m * lw.w1;
    u.rowwise() += lw.b1;
    ops::gelu_forward(u, z);
    x = x_mid;
    x.noalias() += z * lw.w2;
    x.rowwise() += lw.b2;
  }
  for (auto idx : active) ++caches[idx].length;

  Matrix hf;
  ops::rmsnorm_forward(x, w.lnf, hf, inv);
  Matrix logits = hf * w.wout;
  logits.rowwise() += w.bout;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mx = logits.row(i).maxCoeff();
    const double lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
    logits.row(i).array() -= lse;
  }
  return logits;
}

TokenId choose_token(const RowVector& logprobs, double temperature, Rng& rng) {
  if (temperature <= 0.0) {
    Eigen::Index best = 0;
    logprobs.maxCoeff(&best);
    return static_cast<TokenId>(best);
  }
  const RowVector scaled = logprobs / temperature;
  const double mx = scaled.maxCoeff();
  const Eigen::ArrayXd weights = (scaled.array() - mx).exp().transpose();
  const double total = weights.sum();
  const double u = rng.uniform() * total;
  double acc = 0.0;
  for (Eigen::Index k = 0; k < weights.size(); ++k) {
    acc += weights(k);
    if (u < acc) return static_cast<TokenId>(k);
  }
  // u landed on the rounding slack above the last cumulative sum.
  for (Eigen::Index k = weights.size(); k-- > 0;) {
    if (weights(k) > 0.0) return static_cast<TokenId>(k);
  }
  return 0;
}

}  // namespace

std::vector<Rollout> sample_group(const PolicyParams& params, const TokenSeq& prompt, std::size_t group_size,
                                  const SampleOptions& opts) {
  const PolicyConfig& cfg = params.config;
  if (prompt.empty()) throw Error(Errc::EmptyPrompt, "cannot sample without a prompt");
  if (opts.max_new_tokens == 0) throw Error(Errc::InvalidConfig, "max_new_tokens must be positive");
  if (prompt.size() + opts.max_new_tokens > cfg.context_len) {
    throw Error(Errc::ContextOverflow, std::to_string(prompt.size()) + " prompt tokens + " +
                                           std::to_string(opts.max_new_tokens) + " new tokens exceed context " +
                                           std::to_string(cfg.context_len));
  }
  std::vector<Rollout> out(group_size);
  if (group_size == 0) return out;

  const Prefill pre = prefill(params, prompt);
  const auto d = static_cast<Eigen::Index>(cfg.embed_dim);
  std::vector<BranchCache> caches(group_size);
  std::vector<Rng> rngs;
  rngs.reserve(group_size);
  for (std::size_t i = 0; i < group_size; ++i) {
    out[i].prompt = prompt;
    caches[i].keys.assign(cfg.num_layers, Matrix(static_cast<Eigen::Index>(opts.max_new_tokens), d));
    caches[i].values.assign(cfg.num_layers, Matrix(static_cast<Eigen::Index>(opts.max_new_tokens), d));
    rngs.emplace_back(mix_seed(opts.seed, i));
  }

  std::vector<std::size_t> active;
  std::vector<TokenId> last;
  for (std::size_t i = 0; i < group_size; ++i) {
    const TokenId t = choose_token(pre.logprobs, opts.temperature, rngs[i]);
    out[i].output.push_back(t);
    out[i].old_logprobs.push_back(pre.logprobs(t));
    if (t != kEosId && opts.max_new_tokens > 1) {
      active.push_back(i);
      last.push_back(t);
    }
  }

  int position = static_cast<int>(prompt.size());
  while (!active.empty()) {
    const Matrix lp = decode_step(params, pre, caches, active, last, position);
    ++position;
    std::vector<std::size_t> still;
    std::vector<TokenId> next;
    for (std::size_t k = 0; k < active.size(); ++k) {
      const std::size_t i = active[k];
      const RowVector row = lp.row(static_cast<Eigen::Index>(k));
      const TokenId t = choose_token(row, opts.temperature, rngs[i]);
      out[i].output.push_back(t);
      out[i].old_logprobs.push_back(row(t));
      if (t != kEosId && out[i].output.size() < opts.max_new_tokens) {
        still.push_back(i);
        next.push_back(t);
      }
    }
    active = std::move(still);
    last = std::move(next);
  }
  return out;
}

Rollout greedy_decode(const PolicyParams& params, const TokenSeq& prompt, std::size_t max_new_tokens) {
  SampleOptions opts;
  opts.temperature = 0.0;
  opts.max_new_tokens = max_new_tokens;
  return std::move(sample_group(params, prompt, 1, opts).front());
}

}  // namespace adlab

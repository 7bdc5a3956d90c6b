#include "adlab/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "model_ops.hpp"

namespace adlab {

PackedBatch pack_sequences(std::span<const SequenceRef> seqs, const PolicyConfig& config) {
  PackedBatch b;
  b.seq_offsets.push_back(0);
  if (seqs.empty()) return b;

  // Input of sequence i is prompt ++ output[0 .. n-2]; the last output token
  // is only ever a target.
  auto input_at = [](const SequenceRef& s, std::size_t j) -> TokenId {
    return j < s.prompt.size() ? s.prompt[j] : s.output[j - s.prompt.size()];
  };
  std::size_t shared = std::numeric_limits<std::size_t>::max();
  for (const auto& s : seqs) {
    if (s.prompt.empty()) throw Error(Errc::EmptyPrompt, "prompt must contain at least one token");
    if (s.output.empty()) throw Error(Errc::EmptyOutput, "output must contain at least one token");
    if (s.prompt.size() + s.output.size() > config.context_len) {
      throw Error(Errc::ContextOverflow, std::to_string(s.prompt.size()) + " prompt + " +
                                             std::to_string(s.output.size()) + " output tokens exceed context " +
                                             std::to_string(config.context_len));
    }
    shared = std::min(shared, s.prompt.size() + s.output.size() - 1);
  }
  std::size_t prefix = 0;
  while (prefix < shared) {
    const TokenId t = input_at(seqs[0], prefix);
    bool same = true;
    for (const auto& s : seqs) same = same && input_at(s, prefix) == t;
    if (!same) break;
    ++prefix;
  }

  b.prefix_len = static_cast<int>(prefix);
  for (std::size_t j = 0; j < prefix; ++j) {
    b.tokens.push_back(input_at(seqs[0], j));
    b.positions.push_back(static_cast<int>(j));
    b.branch_start.push_back(-1);
  }
  for (const auto& s : seqs) {
    const int start = static_cast<int>(b.tokens.size());
    const std::size_t len = s.prompt.size() + s.output.size() - 1;
    for (std::size_t j = prefix; j < len; ++j) {
      b.tokens.push_back(input_at(s, j));
      b.positions.push_back(static_cast<int>(j));
      b.branch_start.push_back(start);
    }
    for (std::size_t t = 0; t < s.output.size(); ++t) {
      const std::size_t j = s.prompt.size() - 1 + t;
      const int row = j < prefix ? static_cast<int>(j) : start + static_cast<int>(j - prefix);
      b.targets.push_back({row, s.output[t]});
    }
    b.seq_offsets.push_back(b.targets.size());
  }
  return b;
}

namespace {

std::size_t visible_keys(const PackedBatch& b, std::size_t r) {
  const int start = b.branch_start[r];
  if (start < 0) return r + 1;
  return static_cast<std::size_t>(b.prefix_len) + (r - static_cast<std::size_t>(start) + 1);
}

// Calls f(key_row, slot) over the keys visible from row r in order.
template <class F>
void for_each_key(const PackedBatch& b, std::size_t r, F&& f) {
  const int start = b.branch_start[r];
  std::size_t slot = 0;
  if (start < 0) {
    for (std::size_t j = 0; j <= r; ++j) f(j, slot++);
    return;
  }
  for (std::size_t j = 0; j < static_cast<std::size_t>(b.prefix_len); ++j) f(j, slot++);
  for (std::size_t j = static_cast<std::size_t>(start); j <= r; ++j) f(j, slot++);
}

void attention_forward(const PackedBatch& b, const PolicyConfig& cfg, const Matrix& qkv,
                       const std::vector<std::size_t>& offsets, std::vector<double>& probs, Matrix& ctx) {
  const auto d = static_cast<Eigen::Index>(cfg.embed_dim);
  const auto hd = static_cast<Eigen::Index>(cfg.head_dim());
  const std::size_t heads = cfg.num_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  ctx.setZero(qkv.rows(), d);
  for (std::size_t r = 0; r < b.rows(); ++r) {
    const std::size_t nk = visible_keys(b, r);
    for (std::size_t h = 0; h < heads; ++h) {
      const double* q = qkv.row(static_cast<Eigen::Index>(r)).data() + h * hd;
      double* p = probs.data() + offsets[r] + h * nk;
      double mx = -std::numeric_limits<double>::infinity();
      for_each_key(b, r, [&](std::size_t j, std::size_t s) {
        const double* k = qkv.row(static_cast<Eigen::Index>(j)).data() + d + h * hd;
        double dot = 0.0;
        for (Eigen::Index i = 0; i < hd; ++i) dot += q[i] * k[i];
        p[s] = dot * scale;
        mx = std::max(mx, p[s]);
      });
      double sum = 0.0;
      for (std::size_t s = 0; s < nk; ++s) {
        p[s] = std::exp(p[s] - mx);
        sum += p[s];
      }
      const double inv = 1.0 / sum;
      for (std::size_t s = 0; s < nk; ++s) p[s] *= inv;
      double* out = ctx.row(static_cast<Eigen::Index>(r)).data() + h * hd;
      for_each_key(b, r, [&](std::size_t j, std::size_t s) {
        const double* v = qkv.row(static_cast<Eigen::Index>(j)).data() + 2 * d + h * hd;
        const double w = p[s];
        for (Eigen::Index i = 0; i < hd; ++i) out[i] += w * v[i];
      });
    }
  }
}

void attention_backward(const PackedBatch& b, const PolicyConfig& cfg, const Matrix& qkv,
                        const std::vector<std::size_t>& offsets, const std::vector<double>& probs,
                        const Matrix& dctx, Matrix& dqkv) {
  const auto d = static_cast<Eigen::Index>(cfg.embed_dim);
  const auto hd = static_cast<Eigen::Index>(cfg.head_dim());
  const std::size_t heads = cfg.num_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  dqkv.setZero(qkv.rows(), qkv.cols());
  std::vector<double> dp(cfg.context_len + 1);
  for (std::size_t r = 0; r < b.rows(); ++r) {
    const std::size_t nk = visible_keys(b, r);
    const auto ri = static_cast<Eigen::Index>(r);
    for (std::size_t h = 0; h < heads; ++h) {
      const double* p = probs.data() + offsets[r] + h * nk;
      const double* g = dctx.row(ri).data() + h * hd;
      double weighted = 0.0;
      for_each_key(b, r, [&](std::size_t j, std::size_t s) {
        const auto ji = static_cast<Eigen::Index>(j);
        const double* v = qkv.row(ji).data() + 2 * d + h * hd;
        double* dv = dqkv.row(ji).data() + 2 * d + h * hd;
        double dot = 0.0;
        for (Eigen::Index i = 0; i < hd; ++i) {
          dot += g[i] * v[i];
          dv[i] += p[s] * g[i];
        }
        dp[s] = dot;
        weighted += p[s] * dot;
      });
      const double* q = qkv.row(ri).data() + h * hd;
      double* dq = dqkv.row(ri).data() + h * hd;
      for_each_key(b, r, [&](std::size_t j, std::size_t s) {
        const auto ji = static_cast<Eigen::Index>(j);
        const double ds = p[s] * (dp[s] - weighted) * scale;
        const double* k = qkv.row(ji).data() + d + h * hd;
        double* dk = dqkv.row(ji).data() + d + h * hd;
        for (Eigen::Index i = 0; i < hd; ++i) {
          dq[i] += ds * k[i];
          dk[i] += ds * q[i];
        }
      });
    }
  }
}

}  // namespace

ForwardResult forward(const PolicyParams& params, const PackedBatch& batch) {
  const PolicyConfig& cfg = params.config;
  const ParamTensors& w = params.tensors;
  const auto n = static_cast<Eigen::Index>(batch.rows());
  const auto d = static_cast<Eigen::Index>(cfg.embed_dim);

  ForwardResult result;
  ForwardCache& cache = result.cache;

  cache.attn_offsets.resize(batch.rows());
  std::size_t total = 0;
  for (std::size_t r = 0; r < batch.rows(); ++r) {
    cache.attn_offsets[r] = total;
    total += visible_keys(batch, r) * cfg.num_heads;
  }

  Matrix x(n, d);
  for (Eigen::Index r = 0; r < n; ++r) {
    x.row(r) = w.tok_emb.row(batch.tokens[r]) + w.pos_emb.row(batch.positions[r]);
  }

  cache.layers.resize(cfg.num_layers);
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    const LayerTensors& lw = w.layers[l];
    LayerCache& lc = cache.layers[l];
    lc.x = std::move(x);
    ops::rmsnorm_forward(lc.x, lw.ln1, lc.a, lc.inv_rms1);
    lc.qkv.noalias() = lc.a * lw.wqkv;
    lc.qkv.rowwise() += lw.bqkv;
    lc.probs.resize(total);
    attention_forward(batch, cfg, lc.qkv, cache.attn_offsets, lc.probs, lc.ctx);
    lc.x_mid = lc.x;
    lc.x_mid.noalias() += lc.ctx * lw.wo;
    lc.x_mid.rowwise() += lw.bo;
    ops::rmsnorm_forward(lc.x_mid, lw.ln2, lc.m, lc.inv_rms2);
    lc.u.noalias() = lc.m * lw.w1;
    lc.u.rowwise() += lw.b1;
    ops::gelu_forward(lc.u, lc.z);
    x = lc.x_mid;
    x.noalias() += lc.z * lw.w2;
    x.rowwise() += lw.b2;
  }
  cache.x_final = std::move(x);
  ops::rmsnorm_forward(cache.x_final, w.lnf, cache.h_final, cache.inv_rmsf);

  std::unordered_map<int, int> slot_of_row;
  cache.target_slot.reserve(batch.targets.size());
  for (const auto& t : batch.targets) {
    auto [it, inserted] = slot_of_row.try_emplace(t.row, static_cast<int>(cache.logit_rows.size()));
    if (inserted) cache.logit_rows.push_back(t.row);
    cache.target_slot.push_back(it->second);
  }
  const auto m = static_cast<Eigen::Index>(cache.logit_rows.size());
  Matrix h_sel(m, d);
  for (Eigen::Index s = 0; s < m; ++s) h_sel.row(s) = cache.h_final.row(cache.logit_rows[s]);
  Matrix logits = h_sel * w.wout;
  logits.rowwise() += w.bout;

  cache.probs.resize(m, logits.cols());
  Eigen::VectorXd lse(m);
  for (Eigen::Index s = 0; s < m; ++s) {
    const double mx = logits.row(s).maxCoeff();
    const double sum = (logits.row(s).array() - mx).exp().sum();
    lse(s) = mx + std::log(sum);
    cache.probs.row(s) = (logits.row(s).array() - lse(s)).exp();
  }
  result.logprobs.resize(batch.targets.size());
  for (std::size_t t = 0; t < batch.targets.size(); ++t) {
    const int s = cache.target_slot[t];
    result.logprobs[t] = logits(s, batch.targets[t].token) - lse(s);
  }
  return result;
}

void backward(const PolicyParams& params, const PackedBatch& batch, const ForwardCache& cache,
              std::span<const double> coeff, Gradients& grads) {
  const PolicyConfig& cfg = params.config;
  const ParamTensors& w = params.tensors;
  ParamTensors& g = grads.tensors;
  const auto n = static_cast<Eigen::Index>(batch.rows());
  const auto d = static_cast<Eigen::Index>(cfg.embed_dim);
  const auto m = static_cast<Eigen::Index>(cache.logit_rows.size());
  if (coeff.size() != batch.targets.size()) {
    throw Error(Errc::ShapeMismatch, "one coefficient per target is required");
  }

  // d/dlogits of c * log softmax(logits)[y] = c * (onehot(y) - p).
  Eigen::VectorXd coeff_sum = Eigen::VectorXd::Zero(m);
  for (std::size_t t = 0; t < coeff.size(); ++t) coeff_sum(cache.target_slot[t]) += coeff[t];
  Matrix dlogits = -(cache.probs.array().colwise() * coeff_sum.array()).matrix();
  for (std::size_t t = 0; t < coeff.size(); ++t) dlogits(cache.target_slot[t], batch.targets[t].token) += coeff[t];

  Matrix h_sel(m, d);
  for (Eigen::Index s = 0; s < m; ++s) h_sel.row(s) = cache.h_final.row(cache.logit_rows[s]);
  g.wout.noalias() += h_sel.transpose() * dlogits;
  g.bout += dlogits.colwise().sum();
  const Matrix dh_sel = dlogits * w.wout.transpose();

  Matrix dh = Matrix::Zero(n, d);
  for (Eigen::Index s = 0; s < m; ++s) dh.row(cache.logit_rows[s]) += dh_sel.row(s);

  Matrix dx;
  ops::rmsnorm_backward(dh, cache.x_final, cache.inv_rmsf, w.lnf, dx, g.lnf);

  Matrix dz, du, dm, dxmid_norm, dctx, dqkv, da, dx_norm;
  for (std::size_t li = cfg.num_layers; li-- > 0;) {
    const LayerTensors& lw = w.layers[li];
    LayerTensors& lg = g.layers[li];
    const LayerCache& lc = cache.layers[li];

    lg.w2.noalias() += lc.z.transpose() * dx;
    lg.b2 += dx.colwise().sum();
    dz.noalias() = dx * lw.w2.transpose();
    ops::gelu_backward(lc.u, dz, du);
    lg.w1.noalias() += lc.m.transpose() * du;
    lg.b1 += du.colwise().sum();
    dm.noalias() = du * lw.w1.transpose();
    ops::rmsnorm_backward(dm, lc.x_mid, lc.inv_rms2, lw.ln2, dxmid_norm, lg.ln2);
    Matrix dxmid = dx + dxmid_norm;

    lg.wo.noalias() += lc.ctx.transpose() * dxmid;
    lg.bo += dxmid.colwise().sum();
    dctx.noalias() = dxmid * lw.wo.transpose();
    attention_backward(batch, cfg, lc.qkv, cache.attn_offsets, lc.probs, dctx, dqkv);
    lg.wqkv.noalias() += lc.a.transpose() * dqkv;
    lg.bqkv += dqkv.colwise().sum();
    da.noalias() = dqkv * lw.wqkv.transpose();
    ops::rmsnorm_backward(da, lc.x, lc.inv_rms1, lw.ln1, dx_norm, lg.ln1);
    dx = dxmid + dx_norm;
  }

  for (Eigen::Index r = 0; r < n; ++r) {
    g.tok_emb.row(batch.tokens[r]) += dx.row(r);
    g.pos_emb.row(batch.positions[r]) += dx.row(r);
  }
}

}  // namespace adlab

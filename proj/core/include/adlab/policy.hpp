#pragma once

// A small causal transformer over token sequences with exact per-token
// log-probabilities, hand-written reverse-mode gradients and seeded sampling.
//
// Architecture: token + learned position embeddings, num_layers pre-norm
// blocks (RMSNorm -> multi-head causal attention -> residual, RMSNorm -> GELU
// MLP of width 4*embed_dim -> residual), final RMSNorm and an untied output
// projection. Everything is 64-bit floating point.

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adlab/core.hpp"

namespace adlab {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::RowVectorXd;

struct PolicyConfig {
  std::size_t vocab_size = 0;
  std::size_t context_len = 128;
  std::size_t embed_dim = 64;
  std::size_t num_layers = 2;
  std::size_t num_heads = 4;
  std::uint64_t seed = 0;

  std::size_t ffn_dim() const noexcept { return 4 * embed_dim; }
  std::size_t head_dim() const noexcept { return embed_dim / num_heads; }
  void validate() const;  // throws InvalidConfig

  friend bool operator==(const PolicyConfig&, const PolicyConfig&) = default;
};

struct LayerTensors {
  RowVector ln1;
  Matrix wqkv;  // d x 3d, columns [q | k | v]
  RowVector bqkv;
  Matrix wo;  // d x d
  RowVector bo;
  RowVector ln2;
  Matrix w1;  // d x 4d
  RowVector b1;
  Matrix w2;  // 4d x d
  RowVector b2;
};

// Named parameter tensors. Iteration order (for_each) is the checkpoint order.
struct ParamTensors {
  Matrix tok_emb;  // V x d
  Matrix pos_emb;  // C x d
  std::vector<LayerTensors> layers;
  RowVector lnf;
  Matrix wout;  // d x V
  RowVector bout;

  static ParamTensors zeros(const PolicyConfig& config);

  // f(const std::string& name, Tensor& t) where Tensor is Matrix or RowVector.
  template <class F>
  void for_each(F&& f) {
    for_each_impl(*this, f);
  }
  template <class F>
  void for_each(F&& f) const {
    for_each_impl(*this, f);
  }

  std::size_t parameter_count() const;
  bool all_finite() const;
  void set_zero();
  // this += scale * other
  void add_scaled(const ParamTensors& other, double scale);

 private:
  template <class Self, class F>
  static void for_each_impl(Self& self, F& f) {
    f(std::string("tok_emb"), self.tok_emb);
    f(std::string("pos_emb"), self.pos_emb);
    for (std::size_t i = 0; i < self.layers.size(); ++i) {
      auto& l = self.layers[i];
      const std::string p = "layers." + std::to_string(i) + ".";
      f(p + "ln1", l.ln1);
      f(p + "attn.wqkv", l.wqkv);
      f(p + "attn.bqkv", l.bqkv);
      f(p + "attn.wo", l.wo);
      f(p + "attn.bo", l.bo);
      f(p + "ln2", l.ln2);
      f(p + "mlp.w1", l.w1);
      f(p + "mlp.b1", l.b1);
      f(p + "mlp.w2", l.w2);
      f(p + "mlp.b2", l.b2);
    }
    f(std::string("lnf"), self.lnf);
    f(std::string("wout"), self.wout);
    f(std::string("bout"), self.bout);
  }
};

struct PolicyParams {
  PolicyConfig config;
  ParamTensors tensors;
  std::uint64_t version = 0;
};

struct Gradients {
  ParamTensors tensors;

  static Gradients zeros_like(const PolicyParams& params) { return {ParamTensors::zeros(params.config)}; }
};

struct SampleOptions {
  double temperature = 1.0;  // 0 selects greedy argmax decoding
  std::size_t max_new_tokens = 48;
  std::uint64_t seed = 0;
};

// One sampled output together with its per-token log-probabilities under the
// parameters that generated it.
struct Rollout {
  TokenSeq prompt;
  TokenSeq output;
  std::vector<double> old_logprobs;
};

PolicyParams init_params(const PolicyConfig& config);

std::vector<double> token_logprobs(const PolicyParams& params, const TokenSeq& prompt, const TokenSeq& output);

// -(1/|o|) * sum of token log-probabilities.
double sequence_nll(const PolicyParams& params, const TokenSeq& prompt, const TokenSeq& output);

std::pair<double, Gradients> nll_gradient(const PolicyParams& params, const TokenSeq& prompt,
                                          const TokenSeq& output);

// Gradient of weight * sum_t log p(o_t | prompt, o_<t).
Gradients weighted_logprob_gradient(const PolicyParams& params, const TokenSeq& prompt, const TokenSeq& output,
                                    double weight);

// group_size independent ancestral samples; member i draws from a stream
// derived from (opts.seed, i). Each stops at EOS or max_new_tokens.
std::vector<Rollout> sample_group(const PolicyParams& params, const TokenSeq& prompt, std::size_t group_size,
                                  const SampleOptions& opts);

// Greedy single decode.
Rollout greedy_decode(const PolicyParams& params, const TokenSeq& prompt, std::size_t max_new_tokens);

struct LoadedCheckpoint {
  PolicyParams params;
  std::optional<std::vector<std::string>> vocab_tokens;
};

// JSON header line (config, version, tensor index with shapes and byte
// offsets, optional vocabulary) followed by little-endian float64 data.
void save_checkpoint(const std::filesystem::path& path, const PolicyParams& params, const Vocab* vocab = nullptr);
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace adlab

#pragma once

// Packed forward/backward passes over several sequences at once.
//
// Sequences are laid out as one shared prefix (their longest common input
// prefix) followed by one branch per sequence. A prefix row attends to prefix
// rows up to itself; a branch row attends to the whole prefix and to its own
// branch up to itself. A GRPO group (one prompt, G outputs) and an SFT batch
// (common system prompt) therefore compute shared rows once.

#include <span>
#include <vector>

#include "adlab/policy.hpp"

namespace adlab {

struct SequenceRef {
  std::span<const TokenId> prompt;
  std::span<const TokenId> output;
};

struct PackedBatch {
  struct Target {
    int row;
    TokenId token;
  };

  std::vector<TokenId> tokens;    // input token per row
  std::vector<int> positions;     // position index per row
  std::vector<int> branch_start;  // -1 for prefix rows, else first row of the branch
  int prefix_len = 0;
  std::vector<Target> targets;           // one per scored output token, grouped by sequence
  std::vector<std::size_t> seq_offsets;  // targets of sequence i: [seq_offsets[i], seq_offsets[i+1])

  std::size_t rows() const noexcept { return tokens.size(); }
  std::size_t sequences() const noexcept { return seq_offsets.empty() ? 0 : seq_offsets.size() - 1; }
};

// Throws EmptyPrompt, EmptyOutput or ContextOverflow.
PackedBatch pack_sequences(std::span<const SequenceRef> seqs, const PolicyConfig& config);

struct LayerCache {
  Matrix x;  // block input
  Eigen::VectorXd inv_rms1;
  Matrix a;  // normed input
  Matrix qkv;
  std::vector<double> probs;  // attention weights, ragged by row then head
  Matrix ctx;                 // concatenated head outputs
  Matrix x_mid;               // after the attention residual
  Eigen::VectorXd inv_rms2;
  Matrix m;
  Matrix u;  // MLP pre-activation
  Matrix z;  // gelu(u)
};

struct ForwardCache {
  std::vector<LayerCache> layers;
  Matrix x_final;
  Eigen::VectorXd inv_rmsf;
  Matrix h_final;
  std::vector<int> logit_rows;     // distinct rows that carry targets
  std::vector<int> target_slot;    // target -> index into logit_rows
  Matrix probs;                    // softmax over the vocabulary per logit row
  std::vector<std::size_t> attn_offsets;  // per row start into probs of each layer
};

struct ForwardResult {
  std::vector<double> logprobs;  // per target
  ForwardCache cache;
};

ForwardResult forward(const PolicyParams& params, const PackedBatch& batch);

// Accumulates into grads the gradient of sum_t coeff[t] * logprobs[t].
void backward(const PolicyParams& params, const PackedBatch& batch, const ForwardCache& cache,
              std::span<const double> coeff, Gradients& grads);

}  // namespace adlab

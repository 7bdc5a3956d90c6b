#pragma once

// Two-stage training: supervised fine-tuning on tagged targets, then
// group-relative policy optimization against the composite reward.

#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "adlab/judge.hpp"
#include "adlab/optim.hpp"
#include "adlab/policy.hpp"
#include "adlab/telemetry.hpp"

namespace adlab {

enum class RatioLevel { Token, Sequence };
enum class RewardMode { AD, Vanilla };

std::string_view to_string(RatioLevel r) noexcept;
std::string_view to_string(RewardMode m) noexcept;
std::optional<RatioLevel> parse_ratio_level(std::string_view text) noexcept;
std::optional<RewardMode> parse_reward_mode(std::string_view text) noexcept;

// [BOS] followed by the rendered prompt.
TokenSeq encode_prompt(const Vocab& vocab, const Sample& sample);
// The rendered SFT target followed by EOS.
TokenSeq encode_target(const Vocab& vocab, const Sample& sample);

struct SftConfig {
  std::size_t epochs = 24;
  double learning_rate = 1e-3;
  std::size_t batch_size = 16;
  OptimizerConfig optimizer{.kind = OptimizerKind::Adam};
  std::uint64_t seed = 0;

  void validate() const;
};

struct GrpoConfig {
  std::size_t group_size = 8;
  double clip_epsilon = 0.2;
  double kl_beta = 0.04;
  double learning_rate = 2e-4;
  RatioLevel ratio_level = RatioLevel::Token;
  RewardMode reward_mode = RewardMode::AD;
  RewardWeights weights;
  std::size_t steps = 300;
  std::size_t batch_prompts = 16;
  std::size_t max_new_tokens = 48;
  double temperature = 2.0;  // rollouts only; old log-probs stay at temperature 1
  OptimizerConfig optimizer{.kind = OptimizerKind::Adam};
  std::uint64_t seed = 0;

  void validate() const;
};

struct JudgeContext {
  JudgeKind kind = JudgeKind::Exact;
  const RemoteJudge* remote = nullptr;
};

struct TrainHooks {
  TelemetrySink telemetry;
  std::function<void(const PolicyParams&, std::uint64_t step)> checkpoint;
  std::size_t checkpoint_every = 0;  // 0 disables periodic checkpoints
};

// Loss before the update is reported in sft_loss. Throws Diverged when the
// update leaves a non-finite parameter.
StepStats sft_step(PolicyParams& params, std::span<const Sample> batch, const Vocab& vocab, Optimizer& optimizer,
                   double learning_rate);
// Plain gradient descent.
StepStats sft_step(PolicyParams& params, std::span<const Sample> batch, const Vocab& vocab, double learning_rate);

// Mean token NLL over the batch and its gradient.
std::pair<double, Gradients> sft_loss_gradient(const PolicyParams& params, std::span<const Sample> batch,
                                               const Vocab& vocab);

// Throws GroupTooSmall for fewer than two rewards.
std::vector<double> grpo_advantages(std::span<const double> rewards);

inline constexpr double kKlRatioCeiling = 1e6;

// u - log u - 1 with u = exp(ref - cur), u clamped at kKlRatioCeiling.
double kl_term(double ref_logprob, double cur_logprob, bool* clamped = nullptr);
// d kl_term / d cur_logprob.
double kl_term_grad(double ref_logprob, double cur_logprob);

RewardBreakdown score_output(std::string_view output_text, const Sample& sample, RewardMode mode,
                             const RewardWeights& weights, const JudgeContext& judge);

// One prompt's sampled group with fixed rewards, ready for the surrogate.
struct ScoredGroup {
  TokenSeq prompt;
  std::vector<TokenSeq> outputs;
  std::vector<std::vector<double>> old_logprobs;
  std::vector<double> advantages;
};

struct SurrogateResult {
  double objective = 0.0;  // weighted clipped surrogate minus beta * KL
  double kl_sum = 0.0;     // over scored units
  std::size_t units = 0;
  std::size_t clipped_units = 0;
  bool kl_clamped = false;
};

// Evaluates weight * J for one group and, when grads is given, accumulates
// weight * dJ/dtheta. Sequences are token-averaged at the Token level.
SurrogateResult grpo_surrogate(const PolicyParams& params, const PolicyParams& ref_params, const ScoredGroup& group,
                               const GrpoConfig& cfg, double weight, Gradients* grads);

// Samples, scores and applies one ascent update on the batch. step seeds the
// sampling streams.
StepStats grpo_step(PolicyParams& params, const PolicyParams& ref_params, std::span<const Sample> batch,
                    const GrpoConfig& cfg, const Vocab& vocab, const JudgeContext& judge, Optimizer& optimizer,
                    std::uint64_t step);

PolicyParams run_sft(PolicyParams params, std::span<const Sample> dataset, const SftConfig& cfg, const Vocab& vocab,
                     const TrainHooks& hooks = {});

PolicyParams run_rft(PolicyParams params, const PolicyParams& ref_params, std::span<const Sample> dataset,
                     const GrpoConfig& cfg, const Vocab& vocab, const JudgeContext& judge,
                     const TrainHooks& hooks = {});

}  // namespace adlab

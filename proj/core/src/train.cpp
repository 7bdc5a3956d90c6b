#include "adlab/train.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numeric>

#include "adlab/log.hpp"
#include "adlab/model.hpp"
#include "adlab/rng.hpp"
#include "adlab/tagfmt.hpp"

namespace adlab {

namespace {

constexpr double kStdFloor = 1e-8;

void check_finite(const PolicyParams& params, const char* stage) {
  if (!params.tensors.all_finite()) {
    throw Error(Errc::Diverged, std::string(stage) + " produced non-finite parameters at version " +
                                    std::to_string(params.version));
  }
}

void negate(Gradients& g) {
  g.tensors.for_each([](const std::string&, auto& t) { t = -t; });
}

}  // namespace

std::string_view to_string(RatioLevel r) noexcept { return r == RatioLevel::Token ? "token" : "sequence"; }
std::string_view to_string(RewardMode m) noexcept { return m == RewardMode::AD ? "ad" : "vanilla"; }

std::optional<RatioLevel> parse_ratio_level(std::string_view text) noexcept {
  if (text == "token") return RatioLevel::Token;
  if (text == "sequence") return RatioLevel::Sequence;
  return std::nullopt;
}

std::optional<RewardMode> parse_reward_mode(std::string_view text) noexcept {
  if (text == "ad") return RewardMode::AD;
  if (text == "vanilla") return RewardMode::Vanilla;
  return std::nullopt;
}

TokenSeq encode_prompt(const Vocab& vocab, const Sample& sample) {
  TokenSeq out{kBosId};
  const TokenSeq body = vocab.tokenize(render_prompt(sample));
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

TokenSeq encode_target(const Vocab& vocab, const Sample& sample) {
  TokenSeq out = vocab.tokenize(render_sft_target(sample));
  out.push_back(kEosId);
  return out;
}

void SftConfig::validate() const {
  if (batch_size == 0) throw Error(Errc::InvalidConfig, "sft batch_size must be positive");
  if (!(learning_rate > 0.0)) throw Error(Errc::InvalidConfig, "sft learning_rate must be positive");
  optimizer.validate();
}

void GrpoConfig::validate() const {
  auto bad = [](const std::string& m) { throw Error(Errc::InvalidConfig, m); };
  if (group_size < 2) bad("group_size must be >= 2");
  if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) bad("clip_epsilon must lie in (0, 1)");
  if (!(kl_beta >= 0.0)) bad("kl_beta must be >= 0");
  if (!(learning_rate > 0.0)) bad("learning_rate must be positive");
  if (batch_prompts == 0) bad("batch_prompts must be positive");
  if (max_new_tokens == 0) bad("max_new_tokens must be positive");
  if (!(temperature > 0.0)) bad("rollout temperature must be positive");
  weights.validate();
  optimizer.validate();
}

std::pair<double, Gradients> sft_loss_gradient(const PolicyParams& params, std::span<const Sample> batch,
                                               const Vocab& vocab) {
  if (batch.empty()) throw Error(Errc::InvalidConfig, "sft batch is empty");
  std::vector<TokenSeq> prompts, targets;
  prompts.reserve(batch.size());
  targets.reserve(batch.size());
  for (const auto& s : batch) {
    prompts.push_back(encode_prompt(vocab, s));
    targets.push_back(encode_target(vocab, s));
  }
  std::vector<SequenceRef> refs;
  for (std::size_t i = 0; i < batch.size(); ++i) refs.push_back({prompts[i], targets[i]});
  const PackedBatch packed = pack_sequences(refs, params.config);
  const ForwardResult fwd = forward(params, packed);

  const double inv_b = 1.0 / static_cast<double>(batch.size());
  std::vector<double> coeff(packed.targets.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const std::size_t lo = packed.seq_offsets[i], hi = packed.seq_offsets[i + 1];
    const double inv_n = 1.0 / static_cast<double>(hi - lo);
    double seq = 0.0;
    for (std::size_t t = lo; t < hi; ++t) {
      seq += fwd.logprobs[t];
      coeff[t] = -inv_n * inv_b;
    }
    loss -= seq * inv_n * inv_b;
  }
  Gradients grads = Gradients::zeros_like(params);
  backward(params, packed, fwd.cache, coeff, grads);
  return {loss, std::move(grads)};
}

StepStats sft_step(PolicyParams& params, std::span<const Sample> batch, const Vocab& vocab, Optimizer& optimizer,
                   double learning_rate) {
  auto [loss, grads] = sft_loss_gradient(params, batch, vocab);
  optimizer.step(params, grads, learning_rate);
  check_finite(params, "sft_step");
  StepStats stats;
  stats.sft_loss = loss;
  return stats;
}

StepStats sft_step(PolicyParams& params, std::span<const Sample> batch, const Vocab& vocab, double learning_rate) {
  Optimizer sgd(OptimizerConfig{}, params);
  return sft_step(params, batch, vocab, sgd, learning_rate);
}

std::vector<double> grpo_advantages(std::span<const double> rewards) {
  if (rewards.size() < 2) throw Error(Errc::GroupTooSmall, "a group needs at least two rewards");
  const double n = static_cast<double>(rewards.size());
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  // Corrected two-pass: the residual sum removes the rounding left in mean,
  // which would otherwise be amplified by 1/sd for tight groups.
  std::vector<double> dev(rewards.size());
  for (std::size_t i = 0; i < rewards.size(); ++i) dev[i] = rewards[i] - mean;
  const double residual = std::accumulate(dev.begin(), dev.end(), 0.0) / n;
  double var = 0.0;
  for (double& d : dev) {
    d -= residual;
    var += d * d;
  }
  const double sd = std::sqrt(var / n);
  if (sd < kStdFloor) return std::vector<double>(rewards.size(), 0.0);
  for (double& d : dev) d /= sd;
  return dev;
}

double kl_term(double ref_logprob, double cur_logprob, bool* clamped) {
  const double d = ref_logprob - cur_logprob;
  double u = std::exp(d);
  const bool over = !(u <= kKlRatioCeiling);
  if (over) u = kKlRatioCeiling;
  if (clamped) *clamped = over;
  return std::max(0.0, u - d - 1.0);
}

double kl_term_grad(double ref_logprob, double cur_logprob) {
  const double u = std::exp(ref_logprob - cur_logprob);
  if (!(u <= kKlRatioCeiling)) return 1.0;
  return 1.0 - u;
}

RewardBreakdown score_output(std::string_view output_text, const Sample& sample, RewardMode mode,
                             const RewardWeights& weights, const JudgeContext& judge) {
  const Difficulty branch = mode == RewardMode::Vanilla ? Difficulty::Complex : sample.difficulty;
  const FormatBreakdown fmt = format_reward(output_text, branch);
  const JudgeVerdict acc =
      accuracy_reward(output_text, sample.reference_answer, sample.question, judge.kind, judge.remote);
  return combine_reward(acc, fmt, weights);
}

SurrogateResult grpo_surrogate(const PolicyParams& params, const PolicyParams& ref_params, const ScoredGroup& group,
                               const GrpoConfig& cfg, double weight, Gradients* grads) {
  const std::size_t g = group.outputs.size();
  if (g != group.advantages.size() || g != group.old_logprobs.size()) {
    throw Error(Errc::ShapeMismatch, "scored group fields disagree in length");
  }
  std::vector<SequenceRef> refs;
  for (std::size_t i = 0; i < g; ++i) {
    if (group.old_logprobs[i].size() != group.outputs[i].size()) {
      throw Error(Errc::ShapeMismatch, "old_logprobs length differs from output length");
    }
    refs.push_back({group.prompt, group.outputs[i]});
  }
  const PackedBatch packed = pack_sequences(refs, params.config);
  const ForwardResult cur = forward(params, packed);
  const std::vector<double> ref = forward(ref_params, packed).logprobs;

  const double lo_clip = 1.0 - cfg.clip_epsilon, hi_clip = 1.0 + cfg.clip_epsilon;
  const double w_group = weight / static_cast<double>(g);
  std::vector<double> coeff(packed.targets.size(), 0.0);
  SurrogateResult res;

  // Surrogate value and d/d(logprob) of one unit with ratio rho.
  auto unit = [&](double rho, double adv, double& value, double& drho) {
    const double clipped = std::clamp(rho, lo_clip, hi_clip);
    const bool clip_active = (adv > 0.0 && rho > hi_clip) || (adv < 0.0 && rho < lo_clip);
    if (clip_active) {
      value = clipped * adv;
      drho = 0.0;
      ++res.clipped_units;
    } else {
      value = rho * adv;
      drho = rho * adv;
    }
    ++res.units;
  };

  for (std::size_t i = 0; i < g; ++i) {
    const std::size_t b = packed.seq_offsets[i], e = packed.seq_offsets[i + 1];
    const double adv = group.advantages[i];
    if (cfg.ratio_level == RatioLevel::Token) {
      const double w = w_group / static_cast<double>(e - b);
      for (std::size_t t = b; t < e; ++t) {
        const double lp = cur.logprobs[t];
        const double rho = std::exp(lp - group.old_logprobs[i][t - b]);
        double value = 0.0, drho = 0.0;
        unit(rho, adv, value, drho);
        bool clamped = false;
        const double kl = kl_term(ref[t], lp, &clamped);
        res.kl_clamped |= clamped;
        res.kl_sum += kl;
        res.objective += w * (value - cfg.kl_beta * kl);
        coeff[t] = w * (drho - cfg.kl_beta * kl_term_grad(ref[t], lp));
      }
    } else {
      double lp = 0.0, old = 0.0, rlp = 0.0;
      for (std::size_t t = b; t < e; ++t) {
        lp += cur.logprobs[t];
        old += group.old_logprobs[i][t - b];
        rlp += ref[t];
      }
      const double rho = std::exp(lp - old);
      double value = 0.0, drho = 0.0;
      unit(rho, adv, value, drho);
      bool clamped = false;
      const double kl = kl_term(rlp, lp, &clamped);
      res.kl_clamped |= clamped;
      res.kl_sum += kl;
      res.objective += w_group * (value - cfg.kl_beta * kl);
      const double c = w_group * (drho - cfg.kl_beta * kl_term_grad(rlp, lp));
      for (std::size_t t = b; t < e; ++t) coeff[t] = c;
    }
  }
  if (grads) backward(params, packed, cur.cache, coeff, *grads);
  return res;
}

StepStats grpo_step(PolicyParams& params, const PolicyParams& ref_params, std::span<const Sample> batch,
                    const GrpoConfig& cfg, const Vocab& vocab, const JudgeContext& judge, Optimizer& optimizer,
                    std::uint64_t step) {
  cfg.validate();
  if (batch.empty()) throw Error(Errc::InvalidConfig, "grpo batch is empty");

  StepStats stats;
  stats.step = step;
  Gradients grads = Gradients::zeros_like(params);
  const double weight = 1.0 / static_cast<double>(batch.size());
  double sum_total = 0.0, sum_fmt = 0.0, sum_acc = 0.0, kl_sum = 0.0;
  std::size_t units = 0, clipped = 0, scored = 0;

  // Sampling uses the parameters as they stand at the start of the step,
  // which serve as the old policy for every prompt in the batch.
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Sample& sample = batch[b];
    ScoredGroup group;
    group.prompt = encode_prompt(vocab, sample);
    SampleOptions opts;
    opts.temperature = cfg.temperature;
    opts.max_new_tokens = cfg.max_new_tokens;
    opts.seed = mix_seed(mix_seed(cfg.seed, step), b);
    std::vector<Rollout> rollouts = sample_group(params, group.prompt, cfg.group_size, opts);

    std::vector<RewardBreakdown> rewards(rollouts.size());
    auto score = [&](std::size_t i) {
      return score_output(vocab.detokenize(rollouts[i].output), sample, cfg.reward_mode, cfg.weights, judge);
    };
    if (judge.kind == JudgeKind::Remote) {
      std::vector<std::future<RewardBreakdown>> pending;
      for (std::size_t i = 0; i < rollouts.size(); ++i) pending.push_back(std::async(std::launch::async, score, i));
      for (std::size_t i = 0; i < rollouts.size(); ++i) rewards[i] = pending[i].get();
    } else {
      for (std::size_t i = 0; i < rollouts.size(); ++i) rewards[i] = score(i);
    }

    std::vector<double> totals;
    for (const auto& r : rewards) {
      totals.push_back(r.total);
      sum_total += r.total;
      sum_fmt += r.format.total;
      sum_acc += r.accuracy.score;
      ++scored;
      switch (r.accuracy.tier) {
        case JudgeTier::Remote: ++stats.remote_verdicts; break;
        case JudgeTier::Lexical: ++stats.lexical_verdicts; break;
        case JudgeTier::Exact: ++stats.exact_verdicts; break;
      }
    }
    group.advantages = grpo_advantages(totals);
    for (auto& r : rollouts) {
      group.outputs.push_back(std::move(r.output));
      group.old_logprobs.push_back(std::move(r.old_logprobs));
    }
    const SurrogateResult res = grpo_surrogate(params, ref_params, group, cfg, weight, &grads);
    kl_sum += res.kl_sum;
    units += res.units;
    clipped += res.clipped_units;
    stats.kl_clamped |= res.kl_clamped;
  }
  if (stats.kl_clamped) log::debug("KL ratio clamped at step " + std::to_string(step));

  negate(grads);
  optimizer.step(params, grads, cfg.learning_rate);
  check_finite(params, "grpo_step");

  const double n = static_cast<double>(scored);
  stats.mean_total_reward = sum_total / n;
  stats.mean_format_reward = sum_fmt / n;
  stats.mean_accuracy_reward = sum_acc / n;
  stats.mean_kl = units ? kl_sum / static_cast<double>(units) : 0.0;
  stats.clip_fraction = units ? static_cast<double>(clipped) / static_cast<double>(units) : 0.0;
  return stats;
}

PolicyParams run_sft(PolicyParams params, std::span<const Sample> dataset, const SftConfig& cfg, const Vocab& vocab,
                     const TrainHooks& hooks) {
  cfg.validate();
  if (cfg.epochs == 0) return params;
  if (dataset.empty()) throw Error(Errc::InvalidConfig, "sft dataset is empty");

  Optimizer optimizer(cfg.optimizer, params);
  std::vector<std::size_t> order(dataset.size());
  std::uint64_t step = 0;
  std::vector<Sample> batch;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(mix_seed(cfg.seed, epoch));
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      batch.clear();
      for (std::size_t k = start; k < std::min(order.size(), start + cfg.batch_size); ++k) {
        batch.push_back(dataset[order[k]]);
      }
      StepStats stats = sft_step(params, batch, vocab, optimizer, cfg.learning_rate);
      stats.step = step++;
      if (hooks.telemetry) hooks.telemetry(stats);
      if (hooks.checkpoint && hooks.checkpoint_every && step % hooks.checkpoint_every == 0) {
        hooks.checkpoint(params, step);
      }
    }
  }
  return params;
}

PolicyParams run_rft(PolicyParams params, const PolicyParams& ref_params, std::span<const Sample> dataset,
                     const GrpoConfig& cfg, const Vocab& vocab, const JudgeContext& judge, const TrainHooks& hooks) {
  cfg.validate();
  if (cfg.steps == 0) return params;
  if (dataset.empty()) throw Error(Errc::InvalidConfig, "rft dataset is empty");
  if (!(ref_params.config == params.config)) {
    throw Error(Errc::ShapeMismatch, "reference policy config differs from the trained policy");
  }

  Optimizer optimizer(cfg.optimizer, params);
  std::vector<std::size_t> order(dataset.size());
  std::size_t cursor = order.size();
  std::uint64_t pass = 0;
  std::vector<Sample> batch;
  for (std::uint64_t step = 0; step < cfg.steps; ++step) {
    batch.clear();
    while (batch.size() < std::min(cfg.batch_prompts, dataset.size())) {
      if (cursor == order.size()) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(mix_seed(cfg.seed ^ 0x5a5a5a5a5a5a5a5aULL, pass++));
        rng.shuffle(std::span<std::size_t>(order));
        cursor = 0;
      }
      batch.push_back(dataset[order[cursor++]]);
    }
    const StepStats stats = grpo_step(params, ref_params, batch, cfg, vocab, judge, optimizer, step);
    if (hooks.telemetry) hooks.telemetry(stats);
    if (hooks.checkpoint && hooks.checkpoint_every && (step + 1) % hooks.checkpoint_every == 0) {
      hooks.checkpoint(params, step + 1);
    }
  }
  return params;
}

}  // namespace adlab

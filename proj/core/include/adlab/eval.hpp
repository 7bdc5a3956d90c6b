#pragma once

// Minimum-loss answer ranking, behavior rates and evaluation reports.

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "adlab/policy.hpp"
#include "adlab/tagfmt.hpp"
#include "adlab/telemetry.hpp"

namespace adlab {

// Direct scores "<answer>c</answer>" right after the prompt. AfterReasoning
// first lets the model decode greedily up to its first <answer> tag and
// scores the candidate from there; without such a tag it falls back to
// Direct.
enum class RankingMode { Direct, AfterReasoning };
enum class CandidateLoss { TokenMean, TokenSum };

std::string_view to_string(RankingMode m) noexcept;
std::string_view to_string(CandidateLoss l) noexcept;
std::optional<RankingMode> parse_ranking_mode(std::string_view text) noexcept;
std::optional<CandidateLoss> parse_candidate_loss(std::string_view text) noexcept;

struct EvalOptions {
  std::size_t max_new_tokens = 48;
  RankingMode ranking = RankingMode::AfterReasoning;
  CandidateLoss candidate_loss = CandidateLoss::TokenMean;
};

// Index of the smaller loss; ties go to 0.
std::size_t choose_candidate(const std::array<double, 2>& losses) noexcept;

// Throws MissingCandidates.
std::array<double, 2> candidate_losses(const PolicyParams& params, const Vocab& vocab, const Sample& sample,
                                       const EvalOptions& opts = {});
std::size_t answer_ranking_predict(const PolicyParams& params, const Vocab& vocab, const Sample& sample,
                                   const EvalOptions& opts = {});

struct BehaviorRates {
  double thk_pct_basic = 0.0;
  double ans_pct_assum = 0.0;
};

// Throws EmptyClass naming the difficulty that has no outputs.
BehaviorRates behavior_rates(std::span<const std::pair<Sample, std::string>> outputs);

struct SampleResult {
  std::string id;
  Difficulty difficulty = Difficulty::Simple;
  std::optional<std::size_t> chosen_candidate;
  std::optional<bool> chose_reference;
  Behavior behavior = Behavior::Direct;
  double format_total = 0.0;
  double accuracy_score = 0.0;

  friend bool operator==(const SampleResult&, const SampleResult&) = default;
};

// Fractions are absent when their denominator is empty.
struct EvalReport {
  std::optional<double> acc_basic;
  std::optional<double> acc_assumptive;
  std::optional<double> thk_pct_basic;
  std::optional<double> ans_pct_assum;
  std::vector<SampleResult> per_sample;
  std::string fingerprint;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

EvalReport evaluate(const PolicyParams& params, const Vocab& vocab, std::span<const Sample> dataset,
                    const EvalOptions& opts = {});

void write_report(const EvalReport& report, const std::filesystem::path& path);
EvalReport read_report(const std::filesystem::path& path);
std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);

// First and last window means of a telemetry series.
struct CurveSummary {
  std::size_t steps = 0;
  std::optional<double> first_total, last_total;
  std::optional<double> first_format, last_format;
  bool total_rising = false;
  bool format_rising = false;
};

CurveSummary summarize_curve(std::span<const StepStats> stats, std::size_t window = 50);

}  // namespace adlab

#pragma once

// Semantic accuracy judging and reward combination.
//
// Two judge families are available: a deterministic exact-match judge with a
// three-level score, and a remote HTTP judge that silently falls back to a
// lexical cosine similarity whenever the remote verdict is unavailable or
// invalid.

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>

#include "adlab/tagfmt.hpp"

namespace adlab {

enum class JudgeTier { Remote, Lexical, Exact };
enum class JudgeKind { Exact, Remote };

std::string_view to_string(JudgeTier t) noexcept;
std::string_view to_string(JudgeKind k) noexcept;
std::optional<JudgeKind> parse_judge_kind(std::string_view text) noexcept;

struct JudgeVerdict {
  double score = 0.0;
  JudgeTier tier = JudgeTier::Exact;
  std::optional<std::string> rationale;
};

struct RewardWeights {
  double alpha = 1.0;     // semantic accuracy weight
  double beta_fmt = 1.0;  // format weight (distinct from the KL coefficient)

  void validate() const;  // throws InvalidConfig
};

struct RewardBreakdown {
  JudgeVerdict accuracy;
  FormatBreakdown format;
  double total = 0.0;
};

// Trim, collapse internal whitespace runs to one space, ASCII-lowercase.
std::string normalize_answer(std::string_view text);

// 1.0 on normalized equality; 0.5 when the reference tokens occur contiguously
// in the prediction with at most two extra prediction tokens; else 0.0.
JudgeVerdict exact_match_judge(std::string_view prediction, std::string_view reference);

// Cosine similarity of token-count vectors over normalized text, in [0, 1].
JudgeVerdict lexical_similarity_judge(std::string_view prediction, std::string_view reference);

struct RemoteJudgeConfig {
  std::string url;  // empty: no endpoint
  std::string api_key;
  int timeout_ms = 10000;
  bool fallback_enabled = true;
  int max_in_flight = 4;

  // Reads AD_JUDGE_URL, AD_JUDGE_API_KEY and AD_JUDGE_TIMEOUT_MS.
  static RemoteJudgeConfig from_env();
};

// Shareable across threads. Concurrent calls beyond max_in_flight block.
class RemoteJudge {
 public:
  explicit RemoteJudge(RemoteJudgeConfig config);
  ~RemoteJudge();
  RemoteJudge(const RemoteJudge&) = delete;
  RemoteJudge& operator=(const RemoteJudge&) = delete;

  const RemoteJudgeConfig& config() const noexcept { return config_; }

  JudgeVerdict judge(std::string_view prediction, std::string_view reference, std::string_view question) const;

  std::uint64_t remote_count() const noexcept { return remote_count_.load(); }
  std::uint64_t fallback_count() const noexcept { return fallback_count_.load(); }

 private:
  std::optional<JudgeVerdict> request(std::string_view prediction, std::string_view reference,
                                      std::string_view question) const;

  RemoteJudgeConfig config_;
  std::unique_ptr<std::counting_semaphore<>> in_flight_;
  mutable std::atomic<std::uint64_t> remote_count_{0};
  mutable std::atomic<std::uint64_t> fallback_count_{0};
};

JudgeVerdict remote_judge(const RemoteJudge& judge, std::string_view prediction, std::string_view reference,
                          std::string_view question);

// Uses the first <answer> span when present, else the whole output. A Remote
// kind without a judge instance throws ConfigMissing.
JudgeVerdict accuracy_reward(std::string_view output_text, std::string_view reference, std::string_view question,
                             JudgeKind kind, const RemoteJudge* remote = nullptr);

RewardBreakdown combine_reward(const JudgeVerdict& accuracy, const FormatBreakdown& format,
                               const RewardWeights& weights);

}  // namespace adlab

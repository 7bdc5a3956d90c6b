#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <vector>

#include "adlab/judge.hpp"

namespace adlab {

std::string_view to_string(JudgeTier t) noexcept {
  switch (t) {
    case JudgeTier::Remote: return "remote";
    case JudgeTier::Lexical: return "lexical";
    case JudgeTier::Exact: return "exact";
  }
  return "";
}

std::string_view to_string(JudgeKind k) noexcept { return k == JudgeKind::Exact ? "exact" : "remote"; }

std::optional<JudgeKind> parse_judge_kind(std::string_view text) noexcept {
  if (text == "exact") return JudgeKind::Exact;
  if (text == "remote") return JudgeKind::Remote;
  return std::nullopt;
}

void RewardWeights::validate() const {
  if (!(alpha >= 0.0) || !(beta_fmt >= 0.0) || !(alpha + beta_fmt > 0.0)) {
    throw Error(Errc::InvalidConfig, "reward weights must be non-negative with a positive sum");
  }
}

std::string normalize_answer(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

namespace {

std::vector<std::string_view> split_words(std::string_view normalized) {
  std::vector<std::string_view> words;
  std::size_t start = 0;
  while (start < normalized.size()) {
    auto end = normalized.find(' ', start);
    if (end == std::string_view::npos) end = normalized.size();
    words.push_back(normalized.substr(start, end - start));
    start = end + 1;
  }
  return words;
}

}  // namespace

JudgeVerdict exact_match_judge(std::string_view prediction, std::string_view reference) {
  const std::string pred = normalize_answer(prediction);
  const std::string ref = normalize_answer(reference);
  JudgeVerdict v{0.0, JudgeTier::Exact, std::nullopt};
  if (pred == ref) {
    v.score = 1.0;
    return v;
  }
  const auto pw = split_words(pred);
  const auto rw = split_words(ref);
  if (pw.size() >= rw.size() && pw.size() - rw.size() <= 2) {
    const auto hit = std::search(pw.begin(), pw.end(), rw.begin(), rw.end());
    if (hit != pw.end() || rw.empty()) v.score = 0.5;
  }
  return v;
}

JudgeVerdict lexical_similarity_judge(std::string_view prediction, std::string_view reference) {
  const std::string pred = normalize_answer(prediction);
  const std::string ref = normalize_answer(reference);
  JudgeVerdict v{0.0, JudgeTier::Lexical, std::nullopt};
  if (pred.empty() || ref.empty()) {
    v.score = (pred.empty() && ref.empty()) ? 1.0 : 0.0;
    return v;
  }
  std::map<std::string_view, std::pair<double, double>> counts;
  for (auto w : split_words(pred)) counts[w].first += 1.0;
  for (auto w : split_words(ref)) counts[w].second += 1.0;
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (const auto& [word, c] : counts) {
    dot += c.first * c.second;
    na += c.first * c.first;
    nb += c.second * c.second;
  }
  v.score = std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), 0.0, 1.0);
  return v;
}

JudgeVerdict accuracy_reward(std::string_view output_text, std::string_view reference, std::string_view question,
                             JudgeKind kind, const RemoteJudge* remote) {
  const TagParse tags = parse_tags(output_text);
  const std::string prediction = tags.answer_span ? *tags.answer_span : std::string(output_text);
  if (kind == JudgeKind::Exact) return exact_match_judge(prediction, reference);
  if (remote == nullptr) throw Error(Errc::ConfigMissing, "remote judge requested but no judge is configured");
  return remote_judge(*remote, prediction, reference, question);
}

RewardBreakdown combine_reward(const JudgeVerdict& accuracy, const FormatBreakdown& format,
                               const RewardWeights& weights) {
  RewardBreakdown r;
  r.accuracy = accuracy;
  r.format = format;
  r.total = weights.alpha * accuracy.score + weights.beta_fmt * format.total;
  return r;
}

}  // namespace adlab

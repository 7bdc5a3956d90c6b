#include "adlab/eval.hpp"

#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "adlab/judge.hpp"
#include "adlab/model.hpp"
#include "adlab/train.hpp"

namespace adlab {

using nlohmann::json;

namespace {

std::array<double, 2> losses_after(const PolicyParams& params, const Vocab& vocab, const Sample& sample,
                                   const TokenSeq& prompt, const EvalOptions& opts) {
  if (!sample.candidates) throw Error(Errc::MissingCandidates, "sample " + sample.id + " has no candidates");
  std::array<TokenSeq, 2> outs;
  for (std::size_t i = 0; i < 2; ++i) {
    outs[i] = vocab.tokenize(std::string(tokens::kAnswerOpen) + (*sample.candidates)[i] +
                             std::string(tokens::kAnswerClose));
  }
  const std::array<SequenceRef, 2> refs = {SequenceRef{prompt, outs[0]}, SequenceRef{prompt, outs[1]}};
  const PackedBatch packed = pack_sequences(refs, params.config);
  const std::vector<double> lp = forward(params, packed).logprobs;
  std::array<double, 2> losses{};
  for (std::size_t i = 0; i < 2; ++i) {
    double sum = 0.0;
    for (std::size_t t = packed.seq_offsets[i]; t < packed.seq_offsets[i + 1]; ++t) sum -= lp[t];
    const auto n = static_cast<double>(packed.seq_offsets[i + 1] - packed.seq_offsets[i]);
    losses[i] = opts.candidate_loss == CandidateLoss::TokenMean ? sum / n : sum;
  }
  return losses;
}

TokenSeq ranking_prompt(const PolicyParams& params, const Vocab& vocab, const TokenSeq& prompt,
                        const TokenSeq& greedy_output) {
  const auto it = std::find(greedy_output.begin(), greedy_output.end(), vocab.id(tokens::kAnswerOpen));
  if (it == greedy_output.end()) return prompt;
  TokenSeq out = prompt;
  out.insert(out.end(), greedy_output.begin(), it);
  // Leave room for the longest candidate.
  if (out.size() + 8 > params.config.context_len) return prompt;
  return out;
}

using ojson = nlohmann::ordered_json;

ojson opt_ordered(const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); }

std::optional<double> read_fraction(const json& j, const char* field) {
  if (!j.contains(field)) throw ParseError(0, "missing field", field);
  const json& v = j.at(field);
  if (v.is_null()) return std::nullopt;
  if (!v.is_number()) throw ParseError(0, "not a number", field);
  const double d = v.get<double>();
  if (d < 0.0 || d > 1.0) throw ParseError(0, "fraction outside [0, 1]", field);
  return d;
}

template <class T>
T read_field(const json& j, const char* field) {
  if (!j.contains(field)) throw ParseError(0, "missing field", field);
  try {
    return j.at(field).get<T>();
  } catch (const json::exception&) {
    throw ParseError(0, "wrong type", field);
  }
}

std::string fingerprint(const PolicyParams& params, const Vocab& vocab, std::span<const Sample> dataset,
                        const EvalOptions& opts) {
  std::string buf;
  const auto& c = params.config;
  buf += "policy " + std::to_string(c.vocab_size) + " " + std::to_string(c.context_len) + " " +
         std::to_string(c.embed_dim) + " " + std::to_string(c.num_layers) + " " + std::to_string(c.num_heads) +
         " " + std::to_string(c.seed) + " v" + std::to_string(params.version) + "\n";
  params.tensors.for_each([&](const std::string& name, const auto& t) {
    buf += name;
    buf.append(reinterpret_cast<const char*>(t.data()), static_cast<std::size_t>(t.size()) * sizeof(double));
  });
  for (const auto& tok : vocab.tokens()) buf += tok + '\x1f';
  buf += "eval " + std::to_string(opts.max_new_tokens) + " " + std::string(to_string(opts.ranking)) + " " +
         std::string(to_string(opts.candidate_loss)) + "\n";
  for (const auto& s : dataset) buf += s.id + '\x1f';
  return checksum_string(buf);
}

}  // namespace

std::string_view to_string(RankingMode m) noexcept {
  return m == RankingMode::Direct ? "direct" : "after_reasoning";
}
std::string_view to_string(CandidateLoss l) noexcept {
  return l == CandidateLoss::TokenMean ? "token_mean" : "token_sum";
}

std::optional<RankingMode> parse_ranking_mode(std::string_view text) noexcept {
  if (text == "direct") return RankingMode::Direct;
  if (text == "after_reasoning") return RankingMode::AfterReasoning;
  return std::nullopt;
}

std::optional<CandidateLoss> parse_candidate_loss(std::string_view text) noexcept {
  if (text == "token_mean") return CandidateLoss::TokenMean;
  if (text == "token_sum") return CandidateLoss::TokenSum;
  return std::nullopt;
}

std::size_t choose_candidate(const std::array<double, 2>& losses) noexcept { return losses[1] < losses[0] ? 1 : 0; }

std::array<double, 2> candidate_losses(const PolicyParams& params, const Vocab& vocab, const Sample& sample,
                                       const EvalOptions& opts) {
  if (!sample.candidates) throw Error(Errc::MissingCandidates, "sample " + sample.id + " has no candidates");
  const TokenSeq prompt = encode_prompt(vocab, sample);
  if (opts.ranking == RankingMode::Direct) return losses_after(params, vocab, sample, prompt, opts);
  const std::size_t room = params.config.context_len - std::min(params.config.context_len, prompt.size());
  const std::size_t budget = std::min(opts.max_new_tokens, room);
  const TokenSeq greedy = budget ? greedy_decode(params, prompt, budget).output : TokenSeq{};
  return losses_after(params, vocab, sample, ranking_prompt(params, vocab, prompt, greedy), opts);
}

std::size_t answer_ranking_predict(const PolicyParams& params, const Vocab& vocab, const Sample& sample,
                                   const EvalOptions& opts) {
  return choose_candidate(candidate_losses(params, vocab, sample, opts));
}

BehaviorRates behavior_rates(std::span<const std::pair<Sample, std::string>> outputs) {
  std::size_t simple = 0, complex = 0, thinking_simple = 0, direct_complex = 0;
  for (const auto& [sample, text] : outputs) {
    const Behavior b = classify_behavior(text);
    if (sample.difficulty == Difficulty::Simple) {
      ++simple;
      thinking_simple += b == Behavior::Thinking;
    } else {
      ++complex;
      direct_complex += b == Behavior::Direct;
    }
  }
  if (simple == 0) throw Error(Errc::EmptyClass, "no Simple outputs");
  if (complex == 0) throw Error(Errc::EmptyClass, "no Complex outputs");
  return {static_cast<double>(thinking_simple) / static_cast<double>(simple),
          static_cast<double>(direct_complex) / static_cast<double>(complex)};
}

EvalReport evaluate(const PolicyParams& params, const Vocab& vocab, std::span<const Sample> dataset,
                    const EvalOptions& opts) {
  if (dataset.empty()) throw Error(Errc::InvalidConfig, "evaluation dataset is empty");
  EvalReport report;
  std::size_t n[2] = {0, 0}, ranked[2] = {0, 0}, correct[2] = {0, 0}, flagged[2] = {0, 0};

  for (const Sample& s : dataset) {
    const TokenSeq prompt = encode_prompt(vocab, s);
    if (prompt.size() >= params.config.context_len) {
      throw Error(Errc::ContextOverflow, "prompt of " + s.id + " does not fit the context");
    }
    const std::size_t budget = std::min(opts.max_new_tokens, params.config.context_len - prompt.size());
    const TokenSeq output = greedy_decode(params, prompt, budget).output;
    const std::string text = vocab.detokenize(output);

    SampleResult r;
    r.id = s.id;
    r.difficulty = s.difficulty;
    r.behavior = classify_behavior(text);
    r.format_total = format_reward(text, s.difficulty).total;
    r.accuracy_score = accuracy_reward(text, s.reference_answer, s.question, JudgeKind::Exact).score;
    const int k = s.difficulty == Difficulty::Simple ? 0 : 1;
    ++n[k];
    flagged[k] += k == 0 ? r.behavior == Behavior::Thinking : r.behavior == Behavior::Direct;
    if (s.candidates) {
      const TokenSeq rank_prompt =
          opts.ranking == RankingMode::Direct ? prompt : ranking_prompt(params, vocab, prompt, output);
      const std::size_t chosen = choose_candidate(losses_after(params, vocab, s, rank_prompt, opts));
      r.chosen_candidate = chosen;
      r.chose_reference = (*s.candidates)[chosen] == s.reference_answer;
      ++ranked[k];
      correct[k] += *r.chose_reference;
    }
    report.per_sample.push_back(std::move(r));
  }
  auto frac = [](std::size_t a, std::size_t b) -> std::optional<double> {
    if (b == 0) return std::nullopt;
    return static_cast<double>(a) / static_cast<double>(b);
  };
  report.acc_basic = frac(correct[0], ranked[0]);
  report.acc_assumptive = frac(correct[1], ranked[1]);
  report.thk_pct_basic = frac(flagged[0], n[0]);
  report.ans_pct_assum = frac(flagged[1], n[1]);
  report.fingerprint = fingerprint(params, vocab, dataset, opts);
  return report;
}

std::string report_to_json(const EvalReport& report) {
  ojson samples = ojson::array();
  for (const auto& r : report.per_sample) {
    samples.push_back({{"id", r.id},
                       {"difficulty", to_string(r.difficulty)},
                       {"chosen_candidate", r.chosen_candidate ? ojson(*r.chosen_candidate) : ojson(nullptr)},
                       {"chose_reference", r.chose_reference ? ojson(*r.chose_reference) : ojson(nullptr)},
                       {"behavior", to_string(r.behavior)},
                       {"format_total", r.format_total},
                       {"accuracy_score", r.accuracy_score}});
  }
  const ojson j = {{"acc_basic", opt_ordered(report.acc_basic)},
                  {"acc_assumptive", opt_ordered(report.acc_assumptive)},
                  {"thk_pct_basic", opt_ordered(report.thk_pct_basic)},
                  {"ans_pct_assum", opt_ordered(report.ans_pct_assum)},
                  {"fingerprint", report.fingerprint},
                  {"per_sample", samples}};
  return j.dump(2) + "\n";
}

EvalReport report_from_json(const std::string& text) {
  const json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ParseError(0, "report is not a JSON object");
  EvalReport r;
  r.acc_basic = read_fraction(j, "acc_basic");
  r.acc_assumptive = read_fraction(j, "acc_assumptive");
  r.thk_pct_basic = read_fraction(j, "thk_pct_basic");
  r.ans_pct_assum = read_fraction(j, "ans_pct_assum");
  r.fingerprint = read_field<std::string>(j, "fingerprint");
  const json samples = read_field<json>(j, "per_sample");
  if (!samples.is_array()) throw ParseError(0, "not an array", "per_sample");
  for (const json& e : samples) {
    SampleResult s;
    s.id = read_field<std::string>(e, "id");
    const auto d = parse_difficulty(read_field<std::string>(e, "difficulty"));
    if (!d) throw ParseError(0, "unknown difficulty", "difficulty");
    s.difficulty = *d;
    const json chosen = read_field<json>(e, "chosen_candidate");
    if (!chosen.is_null()) s.chosen_candidate = chosen.get<std::size_t>();
    const json ref = read_field<json>(e, "chose_reference");
    if (!ref.is_null()) s.chose_reference = ref.get<bool>();
    const auto behavior = read_field<std::string>(e, "behavior");
    if (behavior != "thinking" && behavior != "direct") throw ParseError(0, "unknown behavior", "behavior");
    s.behavior = behavior == "thinking" ? Behavior::Thinking : Behavior::Direct;
    s.format_total = read_field<double>(e, "format_total");
    s.accuracy_score = read_field<double>(e, "accuracy_score");
    r.per_sample.push_back(std::move(s));
  }
  return r;
}

void write_report(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(Errc::IoError, "cannot write report " + path.string());
  os << report_to_json(report);
  os.flush();
  if (!os) throw Error(Errc::IoError, "failed writing report " + path.string());
}

EvalReport read_report(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::IoError, "cannot open report " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return report_from_json(ss.str());
}

CurveSummary summarize_curve(std::span<const StepStats> stats, std::size_t window) {
  CurveSummary out;
  out.steps = stats.size();
  if (stats.empty() || window == 0) return out;
  const std::size_t w = std::min(window, stats.size());
  auto mean = [&](std::size_t begin, auto field) -> std::optional<double> {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = begin; i < begin + w; ++i) {
      if (const auto& v = stats[i].*field) {
        sum += *v;
        ++count;
      }
    }
    if (count == 0) return std::nullopt;
    return sum / static_cast<double>(count);
  };
  const std::size_t tail = stats.size() - w;
  out.first_total = mean(0, &StepStats::mean_total_reward);
  out.last_total = mean(tail, &StepStats::mean_total_reward);
  out.first_format = mean(0, &StepStats::mean_format_reward);
  out.last_format = mean(tail, &StepStats::mean_format_reward);
  out.total_rising = out.first_total && out.last_total && *out.last_total > *out.first_total;
  out.format_rising = out.first_format && out.last_format && *out.last_format > *out.first_format;
  return out;
}

}  // namespace adlab

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "adlab/eval.hpp"
#include "adlab/taskgen.hpp"
#include "helpers.hpp"

using namespace adlab;

namespace {

struct Fixture {
  Vocab vocab = task_vocab(GeneratorConfig{});
  std::vector<Sample> data;
  PolicyParams params;

  Fixture() {
    GeneratorConfig g;
    g.n_simple = 12;
    g.n_complex = 12;
    g.seed = 61;
    data = gen_dataset(g);
    PolicyConfig c = adlab::testing::tiny_config(vocab.size());
    c.context_len = 128;
    c.embed_dim = 16;
    params = init_params(c);
    adlab::testing::jitter(params, 62, 0.3);
  }
};

Sample swapped(Sample s) {
  std::swap((*s.candidates)[0], (*s.candidates)[1]);
  return s;
}

std::pair<Sample, std::string> output(Difficulty d, std::string text) {
  Sample s;
  s.difficulty = d;
  return {s, std::move(text)};
}

}  // namespace

TEST_CASE("choose_candidate") {
  CHECK(choose_candidate({0.42, 1.73}) == 0);
  CHECK(choose_candidate({1.73, 0.42}) == 1);
  CHECK(choose_candidate({0.5, 0.5}) == 0);
}

TEST_CASE("direct candidate losses") {
  const Fixture f;
  const Sample& s = f.data[0];
  EvalOptions opts;
  opts.ranking = RankingMode::Direct;
  const auto losses = candidate_losses(f.params, f.vocab, s, opts);
  TokenSeq prompt{kBosId};
  for (TokenId t : f.vocab.tokenize(render_prompt(s))) prompt.push_back(t);
  for (std::size_t i = 0; i < 2; ++i) {
    const TokenSeq cand = f.vocab.tokenize("<answer>" + (*s.candidates)[i] + "</answer>");
    CHECK(losses[i] == doctest::Approx(sequence_nll(f.params, prompt, cand)).epsilon(1e-12));
  }
  opts.candidate_loss = CandidateLoss::TokenSum;
  const auto sums = candidate_losses(f.params, f.vocab, s, opts);
  CHECK(sums[0] == doctest::Approx(3.0 * losses[0]).epsilon(1e-12));

  Sample none = s;
  none.candidates.reset();
  try {
    answer_ranking_predict(f.params, f.vocab, none, opts);
    FAIL("expected MissingCandidates");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::MissingCandidates);
  }
}

TEST_CASE("ranking is invariant under candidate swap") {
  const Fixture f;
  for (RankingMode mode : {RankingMode::Direct, RankingMode::AfterReasoning}) {
    EvalOptions opts;
    opts.ranking = mode;
    for (const Sample& s : f.data) {
      const auto a = candidate_losses(f.params, f.vocab, s, opts);
      const auto b = candidate_losses(f.params, f.vocab, swapped(s), opts);
      CHECK(a[0] == b[1]);
      CHECK(a[1] == b[0]);
      if (a[0] != a[1]) {
        CHECK(answer_ranking_predict(f.params, f.vocab, s, opts) ==
              1 - answer_ranking_predict(f.params, f.vocab, swapped(s), opts));
      }
    }
  }
}

TEST_CASE("after-reasoning ranking falls back without an answer tag") {
  const Fixture f;
  EvalOptions direct, after;
  direct.ranking = RankingMode::Direct;
  after.ranking = RankingMode::AfterReasoning;
  std::size_t fallbacks = 0;
  for (const Sample& s : f.data) {
    TokenSeq prompt{kBosId};
    for (TokenId t : f.vocab.tokenize(render_prompt(s))) prompt.push_back(t);
    const Rollout r = greedy_decode(f.params, prompt, after.max_new_tokens);
    const bool tagged = std::find(r.output.begin(), r.output.end(), f.vocab.id("<answer>")) != r.output.end();
    if (!tagged) {
      ++fallbacks;
      CHECK(candidate_losses(f.params, f.vocab, s, after) == candidate_losses(f.params, f.vocab, s, direct));
    }
  }
  CHECK(fallbacks > 0);
}

TEST_CASE("behavior_rates") {
  std::vector<std::pair<Sample, std::string>> outs = {
      output(Difficulty::Simple, "<think>x</think><answer>1</answer>"), output(Difficulty::Simple, "<answer>1</answer>"),
      output(Difficulty::Simple, "1"), output(Difficulty::Simple, "<answer>2</answer>"),
      output(Difficulty::Complex, "<think>a</think><answer>3</answer>"), output(Difficulty::Complex, "<think>")};
  const BehaviorRates r = behavior_rates(outs);
  CHECK(r.thk_pct_basic == 0.25);
  CHECK(r.ans_pct_assum == 0.0);
  outs.push_back(output(Difficulty::Complex, "<answer>3</answer>"));
  CHECK(behavior_rates(outs).ans_pct_assum == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  outs.resize(4);
  try {
    behavior_rates(outs);
    FAIL("expected EmptyClass");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::EmptyClass);
    CHECK(std::string(e.what()).find("Complex") != std::string::npos);
  }
}

TEST_CASE("evaluate") {
  const Fixture f;
  const EvalReport a = evaluate(f.params, f.vocab, f.data);
  CHECK(a == evaluate(f.params, f.vocab, f.data));
  REQUIRE(a.per_sample.size() == f.data.size());
  std::size_t simple_thinking = 0, simple = 0, correct_b = 0;
  for (std::size_t i = 0; i < f.data.size(); ++i) {
    const SampleResult& r = a.per_sample[i];
    CHECK(r.id == f.data[i].id);
    REQUIRE(r.chosen_candidate.has_value());
    CHECK(*r.chose_reference == ((*f.data[i].candidates)[*r.chosen_candidate] == f.data[i].reference_answer));
    CHECK(r.format_total >= 0.0);
    CHECK(r.format_total <= 1.0);
    if (r.difficulty == Difficulty::Simple) {
      ++simple;
      simple_thinking += r.behavior == Behavior::Thinking;
      correct_b += *r.chose_reference;
    }
  }
  REQUIRE(a.thk_pct_basic.has_value());
  CHECK(*a.thk_pct_basic == static_cast<double>(simple_thinking) / static_cast<double>(simple));
  CHECK(*a.acc_basic == static_cast<double>(correct_b) / static_cast<double>(simple));
  CHECK(!a.fingerprint.empty());

  const std::vector<Sample> only_simple(f.data.begin(), f.data.begin() + 12);
  const EvalReport b = evaluate(f.params, f.vocab, only_simple);
  CHECK(b.acc_basic.has_value());
  CHECK_FALSE(b.acc_assumptive.has_value());
  CHECK_FALSE(b.ans_pct_assum.has_value());
}

TEST_CASE("report files") {
  EvalReport r;
  r.acc_basic = 0.1 + 0.2;
  r.thk_pct_basic = 1.0 / 3.0;
  r.fingerprint = "abc";
  SampleResult s;
  s.id = "s-0";
  s.chosen_candidate = 1;
  s.chose_reference = false;
  s.format_total = 0.875;
  s.accuracy_score = 0.5;
  r.per_sample.push_back(s);
  s.id = "c-0";
  s.difficulty = Difficulty::Complex;
  s.behavior = Behavior::Thinking;
  s.chosen_candidate.reset();
  s.chose_reference.reset();
  r.per_sample.push_back(s);
  CHECK(report_from_json(report_to_json(r)) == r);

  const auto path = std::filesystem::temp_directory_path() / "adlab_eval_report.json";
  write_report(r, path);
  CHECK(read_report(path) == r);
  std::string text;
  {
    std::ifstream is(path);
    text.assign(std::istreambuf_iterator<char>(is), {});
  }
  CHECK(text.find("0.30000000000000004") != std::string::npos);
  CHECK(text.find("\"acc_basic\"") < text.find("\"acc_assumptive\""));

  auto j = nlohmann::json::parse(text);
  j.erase("thk_pct_basic");
  try {
    report_from_json(j.dump());
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.field() == "thk_pct_basic");
  }
  CHECK_THROWS_AS(write_report(r, "/proc/adlab/none.json"), Error);
  CHECK_THROWS_AS(read_report("/nonexistent/adlab.json"), Error);
  std::filesystem::remove(path);
}

TEST_CASE("summarize_curve") {
  std::vector<StepStats> stats(120);
  for (std::size_t i = 0; i < stats.size(); ++i) {
    stats[i].step = i;
    stats[i].mean_total_reward = 0.01 * static_cast<double>(i);
    stats[i].mean_format_reward = 1.0 - 0.001 * static_cast<double>(i);
  }
  const CurveSummary s = summarize_curve(stats);
  CHECK(s.steps == 120);
  CHECK(*s.first_total == doctest::Approx(0.245));
  CHECK(*s.last_total == doctest::Approx(0.945));
  CHECK(s.total_rising);
  CHECK_FALSE(s.format_rising);

  std::vector<StepStats> flat(10);
  for (auto& x : flat) x.mean_total_reward = 1.0;
  CHECK_FALSE(summarize_curve(flat).total_rising);
  CHECK_FALSE(summarize_curve(flat).first_format.has_value());
  CHECK(summarize_curve({}).steps == 0);
}

#include <doctest.h>

#include "adlab/core.hpp"
#include "adlab/taskgen.hpp"

using namespace adlab;

namespace {

Vocab gen_vocab() { return task_vocab(GeneratorConfig{}); }

Sample simple_sample(std::string context, std::string question) {
  Sample s;
  s.id = "s-0";
  s.context = std::move(context);
  s.question = std::move(question);
  s.reference_answer = "5";
  return s;
}

}  // namespace

TEST_CASE("difficulty strings") {
  CHECK(to_string(Difficulty::Simple) == "simple");
  CHECK(to_string(Difficulty::Complex) == "complex");
  CHECK(parse_difficulty("complex") == Difficulty::Complex);
  CHECK_FALSE(parse_difficulty("Simple").has_value());
}

TEST_CASE("vocab layout") {
  const Vocab v = gen_vocab();
  CHECK(v.token(kBosId) == tokens::kBos);
  CHECK(v.token(kEosId) == tokens::kEos);
  CHECK(v.token(kPadId) == tokens::kPad);
  for (auto tag : {tokens::kThinkOpen, tokens::kThinkClose, tokens::kAnswerOpen, tokens::kAnswerClose}) {
    CHECK(v.find(tag).has_value());
  }
  CHECK(v.size() <= kMaxVocabSize);
  CHECK_THROWS_AS((Vocab{{"a", "b"}}), Error);
  std::vector<std::string> dup = v.tokens();
  dup.push_back("X");
  CHECK_THROWS_AS(Vocab{dup}, Error);
  CHECK(Vocab(v.tokens()) == v);
}

TEST_CASE("tokenize") {
  const Vocab v = gen_vocab();
  CHECK(v.tokenize("").empty());
  CHECK(v.tokenize("<answer>7</answer>") == TokenSeq{v.id("<answer>"), v.id("7"), v.id("</answer>")});
  CHECK(v.tokenize("X=5") == TokenSeq{v.id("X"), v.id("="), v.id("5")});
  // Longest match: "15" is one token, not "1" then "5".
  CHECK(v.tokenize("15") == TokenSeq{v.id("15")});
  try {
    v.tokenize("X=5#");
    FAIL("expected UnknownSymbol");
  } catch (const UnknownSymbolError& e) {
    CHECK(e.code() == Errc::UnknownSymbol);
    CHECK(e.position() == 3);
  }
}

TEST_CASE("detokenize") {
  const Vocab v = gen_vocab();
  CHECK(v.detokenize({}).empty());
  CHECK(v.detokenize({v.id("<think>")}) == "<think>");
  CHECK(v.detokenize({kBosId, v.id("X"), kEosId, kPadId}) == "X");
  CHECK_THROWS_AS(v.detokenize({static_cast<TokenId>(v.size())}), Error);
  CHECK_THROWS_AS(v.detokenize({-1}), Error);
}

TEST_CASE("tags never split") {
  const Vocab v = gen_vocab();
  const TokenSeq seq = v.tokenize("<think>X=1</think> <answer>1</answer>");
  CHECK(seq.front() == v.id("<think>"));
  CHECK(seq.back() == v.id("</answer>"));
  CHECK(std::count(seq.begin(), seq.end(), v.id("</think>")) == 1);
}

TEST_CASE("generated strings round-trip") {
  GeneratorConfig cfg;
  cfg.n_simple = 150;
  cfg.n_complex = 150;
  cfg.seed = 21;
  const Vocab v = task_vocab(cfg);
  for (const Sample& s : gen_dataset(cfg)) {
    for (const std::string& text : {render_prompt(s), render_sft_target(s), s.context, s.question}) {
      CHECK(v.detokenize(v.tokenize(text)) == text);
    }
  }
}

TEST_CASE("render_prompt") {
  const std::string p = render_prompt(simple_sample("X=5", "What is X?"));
  const std::string tail = "User: X=5 What is X?. Assistant: ";
  REQUIRE(p.size() > tail.size());
  CHECK(p.substr(p.size() - tail.size()) == tail);
  CHECK(p.rfind("A conversation between User and Assistant.", 0) == 0);

  const std::string empty = render_prompt(simple_sample("", "What is X?"));
  const std::string empty_tail = "User: What is X?. Assistant: ";
  CHECK(empty.substr(empty.size() - empty_tail.size()) == empty_tail);

  const std::string q = render_prompt(simple_sample("X=5", "What is Y?"));
  REQUIRE(q.size() == p.size());
  std::size_t diffs = 0, first = std::string::npos;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] != q[i]) {
      ++diffs;
      if (first == std::string::npos) first = i;
    }
  }
  CHECK(diffs == 1);
  CHECK(first == p.size() - std::string("?. Assistant: ").size() - 1);
}

TEST_CASE("render_sft_target") {
  Sample s = simple_sample("X=5", "What is X?");
  CHECK(render_sft_target(s) == "<answer>5</answer>");
  s.difficulty = Difficulty::Complex;
  s.reference_answer = "7";
  s.reasoning = "X=5; Y=X+2; Y=7";
  CHECK(render_sft_target(s) == "<think>X=5; Y=X+2; Y=7</think> <answer>7</answer>");
  s.reasoning.reset();
  try {
    render_sft_target(s);
    FAIL("expected MissingReasoning");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::MissingReasoning);
  }
}

TEST_CASE("sample JSON") {
  Sample s = simple_sample("X=5; Y=2", "What is X?");
  s.candidates = std::array<std::string, 2>{"5", "9"};
  const std::string line = sample_to_json(s);
  CHECK(line.find('\n') == std::string::npos);
  CHECK(line.find("\"reasoning\":null") != std::string::npos);
  CHECK(sample_from_json(line, 1) == s);

  s.difficulty = Difficulty::Complex;
  s.reasoning = "X=5";
  s.candidates.reset();
  CHECK(sample_from_json(sample_to_json(s), 1) == s);

  try {
    sample_from_json(R"({"id":"a","context":"","question":"q","difficulty":"hard","reference_answer":"1",
                        "reasoning":null,"candidates":null})",
                     7);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 7);
    CHECK(e.field() == "difficulty");
  }
  CHECK_THROWS_AS(sample_from_json("{not json", 2), ParseError);
  // Candidates must contain the reference answer.
  CHECK_THROWS_AS(sample_from_json(R"({"id":"a","context":"","question":"q","difficulty":"simple",
                                      "reference_answer":"1","reasoning":null,"candidates":["2","3"]})",
                                   1),
                  ParseError);
}

TEST_CASE("checksum") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(checksum_string("a") == "fnv1a64:af63dc4c8601ec8c");
}

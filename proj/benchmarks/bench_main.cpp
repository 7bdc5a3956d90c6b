#include <benchmark/benchmark.h>

#include "adlab/policy.hpp"
#include "adlab/tagfmt.hpp"
#include "adlab/taskgen.hpp"
#include "adlab/train.hpp"

namespace {

using namespace adlab;

struct Setup {
  Vocab vocab = task_vocab(GeneratorConfig{});
  std::vector<Sample> data;
  PolicyParams params;

  Setup() {
    GeneratorConfig g;
    g.n_simple = 8;
    g.n_complex = 8;
    g.seed = 3;
    data = gen_dataset(g);
    PolicyConfig c;
    c.vocab_size = vocab.size();
    params = init_params(c);
  }
};

const Setup& setup() {
  static const Setup s;
  return s;
}

void BM_Tokenize(benchmark::State& state) {
  const auto& s = setup();
  const std::string prompt = render_prompt(s.data.back());
  for (auto _ : state) benchmark::DoNotOptimize(s.vocab.tokenize(prompt));
}
BENCHMARK(BM_Tokenize);

void BM_FormatReward(benchmark::State& state) {
  const std::string text = "<think>X=5; Y=X+2; Y=7</think> <answer>7</answer>";
  for (auto _ : state) benchmark::DoNotOptimize(format_reward(text, Difficulty::Complex));
}
BENCHMARK(BM_FormatReward);

void BM_SequenceNll(benchmark::State& state) {
  const auto& s = setup();
  const TokenSeq prompt = encode_prompt(s.vocab, s.data.back());
  const TokenSeq target = encode_target(s.vocab, s.data.back());
  for (auto _ : state) benchmark::DoNotOptimize(sequence_nll(s.params, prompt, target));
}
BENCHMARK(BM_SequenceNll);

void BM_NllGradient(benchmark::State& state) {
  const auto& s = setup();
  const TokenSeq prompt = encode_prompt(s.vocab, s.data.back());
  const TokenSeq target = encode_target(s.vocab, s.data.back());
  for (auto _ : state) benchmark::DoNotOptimize(nll_gradient(s.params, prompt, target));
}
BENCHMARK(BM_NllGradient);

void BM_SftLossGradient(benchmark::State& state) {
  const auto& s = setup();
  for (auto _ : state) benchmark::DoNotOptimize(sft_loss_gradient(s.params, s.data, s.vocab));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(s.data.size()));
}
BENCHMARK(BM_SftLossGradient)->Unit(benchmark::kMillisecond);

void BM_GreedyDecode(benchmark::State& state) {
  const auto& s = setup();
  const TokenSeq prompt = encode_prompt(s.vocab, s.data.front());
  for (auto _ : state) benchmark::DoNotOptimize(greedy_decode(s.params, prompt, 32));
}
BENCHMARK(BM_GreedyDecode)->Unit(benchmark::kMillisecond);

void BM_SampleGroup(benchmark::State& state) {
  const auto& s = setup();
  const TokenSeq prompt = encode_prompt(s.vocab, s.data.back());
  SampleOptions opts;
  opts.max_new_tokens = 32;
  for (auto _ : state) benchmark::DoNotOptimize(sample_group(s.params, prompt, static_cast<std::size_t>(state.range(0)), opts));
}
BENCHMARK(BM_SampleGroup)->Arg(2)->Arg(8)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();

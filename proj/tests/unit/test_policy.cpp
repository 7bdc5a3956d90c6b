#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "adlab/model.hpp"
#include "helpers.hpp"

using namespace adlab;
using adlab::testing::check_gradient;
using adlab::testing::jitter;
using adlab::testing::random_tokens;
using adlab::testing::tiny_config;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("adlab_policy_" + name);
}

}  // namespace

TEST_CASE("config validation") {
  PolicyConfig c = tiny_config();
  CHECK_NOTHROW(c.validate());
  c.num_heads = 3;
  CHECK_THROWS_AS(c.validate(), Error);
  c = tiny_config();
  c.vocab_size = kMaxVocabSize + 1;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("init is deterministic per seed") {
  const PolicyParams a = init_params(tiny_config());
  const PolicyParams b = init_params(tiny_config());
  CHECK(a.tensors.tok_emb == b.tensors.tok_emb);
  CHECK(a.tensors.layers[1].w2 == b.tensors.layers[1].w2);
  CHECK(a.tensors.lnf.isOnes());
  CHECK(a.tensors.bout.isZero());
  PolicyConfig other = tiny_config();
  other.seed = 12;
  CHECK_FALSE(init_params(other).tensors.tok_emb == a.tensors.tok_emb);
  CHECK(a.version == 0);
}

TEST_CASE("packing rejects bad sequences") {
  const PolicyConfig c = tiny_config();
  const TokenSeq p{0, 5, 6}, o{7, 8}, empty;
  const TokenSeq long_out(20, 9);
  {
    const SequenceRef s[] = {{empty, o}};
    CHECK_THROWS_AS(pack_sequences(s, c), Error);
  }
  {
    const SequenceRef s[] = {{p, empty}};
    CHECK_THROWS_AS(pack_sequences(s, c), Error);
  }
  {
    const SequenceRef s[] = {{p, long_out}};
    try {
      pack_sequences(s, c);
      FAIL("expected overflow");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::ContextOverflow);
    }
  }
}

TEST_CASE("packed log-probs equal per-sequence log-probs") {
  Rng rng(3);
  PolicyParams params = init_params(tiny_config());
  jitter(params, 4, 0.1);
  const TokenSeq prompt = random_tokens(rng, 6, 24);
  std::vector<TokenSeq> outs;
  for (std::size_t len : {1, 4, 7, 3}) outs.push_back(random_tokens(rng, len, 24));
  outs[3] = TokenSeq(outs[2].begin(), outs[2].begin() + 3);  // longer shared prefix for two branches
  std::vector<SequenceRef> refs;
  for (const auto& o : outs) refs.push_back({prompt, o});
  const PackedBatch packed = pack_sequences(refs, params.config);
  CHECK(packed.prefix_len >= static_cast<int>(prompt.size()));
  const auto lp = forward(params, packed).logprobs;
  for (std::size_t i = 0; i < outs.size(); ++i) {
    const auto single = token_logprobs(params, prompt, outs[i]);
    REQUIRE(single.size() == packed.seq_offsets[i + 1] - packed.seq_offsets[i]);
    for (std::size_t t = 0; t < single.size(); ++t) {
      CHECK(lp[packed.seq_offsets[i] + t] == doctest::Approx(single[t]).epsilon(1e-12));
    }
  }
}

TEST_CASE("next-token distribution sums to one") {
  Rng rng(5);
  PolicyParams params = init_params(tiny_config());
  jitter(params, 6, 0.2);
  const TokenSeq prompt = random_tokens(rng, 9, 24);
  double total = 0.0;
  for (TokenId v = 0; v < 24; ++v) total += std::exp(token_logprobs(params, prompt, {v})[0]);
  CHECK(std::abs(total - 1.0) <= 1e-12);
}

TEST_CASE("weighted log-prob gradient matches finite differences") {
  Rng rng(7);
  PolicyParams params = init_params(tiny_config());
  jitter(params, 8, 0.1);
  const TokenSeq prompt = random_tokens(rng, 5, 24);
  std::vector<TokenSeq> outs = {random_tokens(rng, 4, 24), random_tokens(rng, 6, 24), random_tokens(rng, 2, 24)};
  std::vector<SequenceRef> refs;
  for (const auto& o : outs) refs.push_back({prompt, o});
  const PackedBatch packed = pack_sequences(refs, params.config);
  std::vector<double> coeff(packed.targets.size());
  // Token-normalized like the training losses, which keeps |f| near 1.
  for (auto& c : coeff) c = rng.normal() / static_cast<double>(coeff.size());

  const auto objective = [&](const PolicyParams& p) {
    const auto lp = forward(p, packed).logprobs;
    double s = 0.0;
    for (std::size_t t = 0; t < lp.size(); ++t) s += coeff[t] * lp[t];
    return s;
  };
  Gradients g = Gradients::zeros_like(params);
  const auto fwd = forward(params, packed);
  backward(params, packed, fwd.cache, coeff, g);
  const auto res = check_gradient(params, g, objective);
  INFO(res.worst);
  CHECK(res.checked == params.tensors.parameter_count());
  CHECK(res.max_rel <= 1e-4);
}

TEST_CASE("sequence NLL gradient matches finite differences") {
  Rng rng(9);
  PolicyParams params = init_params(tiny_config());
  jitter(params, 10, 0.1);
  const TokenSeq prompt = random_tokens(rng, 7, 24);
  const TokenSeq output = random_tokens(rng, 5, 24);
  const auto [loss, g] = nll_gradient(params, prompt, output);
  CHECK(loss == doctest::Approx(sequence_nll(params, prompt, output)).epsilon(1e-12));
  const auto res =
      check_gradient(params, g, [&](const PolicyParams& p) { return sequence_nll(p, prompt, output); });
  INFO(res.worst);
  CHECK(res.max_rel <= 1e-4);
}

TEST_CASE("sampled log-probs match a full forward pass") {
  Rng rng(13);
  PolicyConfig c = tiny_config();
  c.context_len = 24;
  PolicyParams params = init_params(c);
  jitter(params, 14, 0.3);
  const TokenSeq prompt = random_tokens(rng, 6, 24);
  SampleOptions opts;
  opts.max_new_tokens = 12;
  opts.seed = 99;
  const auto group = sample_group(params, prompt, 5, opts);
  REQUIRE(group.size() == 5);
  for (const auto& r : group) {
    REQUIRE(!r.output.empty());
    CHECK(r.output.size() <= 12);
    CHECK(r.old_logprobs.size() == r.output.size());
    for (std::size_t t = 0; t + 1 < r.output.size(); ++t) CHECK(r.output[t] != kEosId);
    const auto lp = token_logprobs(params, prompt, r.output);
    for (std::size_t t = 0; t < lp.size(); ++t) CHECK(r.old_logprobs[t] == doctest::Approx(lp[t]).epsilon(1e-9));
  }
  const auto again = sample_group(params, prompt, 5, opts);
  for (std::size_t i = 0; i < 5; ++i) CHECK(again[i].output == group[i].output);

  opts.max_new_tokens = 19;
  CHECK_THROWS_AS(sample_group(params, prompt, 2, opts), Error);
}

TEST_CASE("greedy decoding follows the argmax") {
  Rng rng(15);
  PolicyParams params = init_params(tiny_config());
  jitter(params, 16, 0.3);
  const TokenSeq prompt = random_tokens(rng, 4, 24);
  const Rollout r = greedy_decode(params, prompt, 6);
  TokenSeq ctx = prompt;
  for (TokenId tok : r.output) {
    TokenId best = 0;
    double best_lp = -1e300;
    for (TokenId v = 0; v < 24; ++v) {
      const double lp = token_logprobs(params, ctx, {v})[0];
      if (lp > best_lp) {
        best_lp = lp;
        best = v;
      }
    }
    CHECK(tok == best);
    ctx.push_back(tok);
  }
}

TEST_CASE("checkpoint round trip") {
  PolicyParams params = init_params(tiny_config());
  jitter(params, 17, 0.05);
  params.version = 42;
  const Vocab vocab = Vocab::with_symbols({"a", "b"});
  const auto path = temp_file("roundtrip.ckpt");
  save_checkpoint(path, params, &vocab);
  const LoadedCheckpoint loaded = load_checkpoint(path);
  CHECK(loaded.params.config == params.config);
  CHECK(loaded.params.version == 42);
  REQUIRE(loaded.vocab_tokens);
  CHECK(*loaded.vocab_tokens == vocab.tokens());
  bool same = true;
  std::vector<const double*> a;
  params.tensors.for_each([&](const std::string&, const auto& t) { a.push_back(t.data()); });
  std::size_t k = 0;
  loaded.params.tensors.for_each([&](const std::string&, const auto& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) same &= t.data()[i] == a[k][i];
    ++k;
  });
  CHECK(same);

  const auto copy = temp_file("roundtrip2.ckpt");
  save_checkpoint(copy, loaded.params, &vocab);
  std::ifstream f1(path, std::ios::binary), f2(copy, std::ios::binary);
  const std::string b1((std::istreambuf_iterator<char>(f1)), {}), b2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(b1 == b2);

  // Truncate the tensor data.
  std::filesystem::resize_file(copy, b1.size() - 16);
  try {
    load_checkpoint(copy);
    FAIL("expected IoError");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::IoError);
  }
  CHECK_THROWS_AS(load_checkpoint(temp_file("missing.ckpt")), Error);
  std::filesystem::remove(path);
  std::filesystem::remove(copy);
}

TEST_CASE("checkpoint shape mismatch is reported") {
  PolicyParams params = init_params(tiny_config());
  const auto path = temp_file("shape.ckpt");
  save_checkpoint(path, params);
  std::ifstream is(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(is)), {});
  is.close();
  const auto pos = bytes.find("\"shape\":[24,8]");
  REQUIRE(pos != std::string::npos);
  bytes.replace(pos, 14, "\"shape\":[8,24]");
  std::ofstream(path, std::ios::binary) << bytes;
  try {
    load_checkpoint(path);
    FAIL("expected ShapeMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::ShapeMismatch);
  }
  std::filesystem::remove(path);
}

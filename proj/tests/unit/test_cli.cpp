#include <doctest.h>
#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "adlab/cli/commands.hpp"
#include "adlab/cli/report.hpp"

using namespace adlab;
using namespace adlab::cli;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("adlab_cli_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

RunConfig small_config(const fs::path& root) {
  const std::string text = R"({
    "seed": 3,
    "generator": {"n_simple": 10, "n_complex": 10},
    "policy": {"context_len": 128, "embed_dim": 8, "num_layers": 1, "num_heads": 2},
    "sft": {"epochs": 1, "batch_size": 5},
    "rft": {"steps": 2, "batch_prompts": 2, "group_size": 2, "max_new_tokens": 6}
  })";
  return run_config_from_json(text, root);
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

}  // namespace

TEST_CASE("run config parsing") {
  const RunConfig d = run_config_from_json("{}");
  CHECK(d.seed == 7);
  CHECK(d.generator.n_simple == 2000);
  CHECK(d.generator.seed == 7);
  CHECK(d.policy.seed != d.sft.seed);
  CHECK(d.rft.reward_mode == RewardMode::AD);
  CHECK(d.judge_kind == JudgeKind::Exact);

  const RunConfig c = run_config_from_json(
      R"({"seed": 11, "rft": {"reward_mode": "vanilla", "ratio_level": "sequence", "optimizer": "sgd"},
          "judge_kind": "remote", "paths": {"data_dir": "d", "checkpoint_dir": "/abs/ck"}})",
      "/base");
  CHECK(c.generator.seed == 11);
  CHECK(c.rft.reward_mode == RewardMode::Vanilla);
  CHECK(c.rft.ratio_level == RatioLevel::Sequence);
  CHECK(c.rft.optimizer.kind == OptimizerKind::Sgd);
  CHECK(c.judge_kind == JudgeKind::Remote);
  CHECK(c.paths.data_dir == fs::path("/base/d"));
  CHECK(c.paths.checkpoint_dir == fs::path("/abs/ck"));
  CHECK(c.paths.telemetry_dir == fs::path("/base/telemetry"));

  const RunConfig again = run_config_from_json(run_config_to_json(c));
  CHECK(again.rft.reward_mode == c.rft.reward_mode);
  CHECK(again.paths.data_dir == c.paths.data_dir);
  CHECK(again.sft.learning_rate == c.sft.learning_rate);

  for (const char* bad : {R"({"sft": {"epoch": 3}})", R"({"rft": {"reward_mode": "other"}})",
                          R"({"policy": {"embed_dim": 10, "num_heads": 4}})", R"({"rft": {"group_size": 1}})",
                          R"({"generator": {"max_hops": 9}})", R"({"unknown": 1})", "[1, 2]", "{"}) {
    CAPTURE(bad);
    CHECK_THROWS_AS(run_config_from_json(bad), Error);
  }
  CHECK_THROWS_AS(load_run_config("/nonexistent/config.json"), Error);
}

TEST_CASE("exit codes") {
  CHECK(exit_code_for(Error(Errc::InvalidConfig, "")) == kExitConfig);
  CHECK(exit_code_for(Error(Errc::IoError, "")) == kExitIo);
  CHECK(exit_code_for(ParseError(1, "")) == kExitIo);
  CHECK(exit_code_for(Error(Errc::Diverged, "")) == kExitDiverged);
  CHECK(exit_code_for(Error(Errc::ConfigMissing, "")) == kExitJudgeConfig);
  std::ostringstream err;
  CHECK(guarded(err, []() -> int { throw std::runtime_error("boom"); }) == kExitFailure);
  CHECK(err.str().find("boom") != std::string::npos);
}

TEST_CASE("gen-data") {
  TempDir dir("gen");
  RunConfig cfg = small_config(dir.path);
  std::ostringstream os, err;
  const fs::path a = dir.path / "a.jsonl", b = dir.path / "sub" / "b.jsonl";
  REQUIRE(cmd_gen_data(cfg, a, os, err) == kExitOk);
  REQUIRE(cmd_gen_data(cfg, b, os, err) == kExitOk);
  CHECK(os.str().find("simple=10 complex=10") != std::string::npos);
  CHECK(slurp(a) == slurp(b));
  CHECK(fs::exists(adlab::metadata_path(a)));
  const auto meta = nlohmann::json::parse(slurp(adlab::metadata_path(a)));
  CHECK(meta.at("checksum") == adlab::file_checksum(a));

  cfg.generator.n_simple = 0;
  REQUIRE(cmd_gen_data(cfg, a, os, err) == kExitOk);
  for (const auto& s : adlab::load_dataset(a)) CHECK(s.difficulty == Difficulty::Complex);
  CHECK(cmd_gen_data(cfg, "/proc/adlab/x.jsonl", os, err) == kExitIo);
}

TEST_CASE("sft, rft and eval commands") {
  TempDir dir("train");
  RunConfig cfg = small_config(dir.path);
  std::ostringstream os, err;
  REQUIRE(cmd_gen_data(cfg, default_train_data(cfg), os, err) == kExitOk);

  SUBCASE("sft") {
    const SftPaths paths = default_sft_paths(cfg);
    REQUIRE(cmd_sft(cfg, paths, os, err) == kExitOk);
    CHECK(os.str().find("final_loss=") != std::string::npos);
    const LoadedCheckpoint ck = load_checkpoint(paths.checkpoint);
    CHECK(ck.params.version == 4);
    CHECK(adlab::read_telemetry(paths.telemetry).size() == 4);
    const std::string first = slurp(paths.checkpoint);
    REQUIRE(cmd_sft(cfg, paths, os, err) == kExitOk);
    CHECK(slurp(paths.checkpoint) == first);

    cfg.sft.epochs = 0;
    REQUIRE(cmd_sft(cfg, paths, os, err) == kExitOk);
    PolicyConfig pc = cfg.policy;
    pc.vocab_size = adlab::task_vocab(cfg.generator).size();
    const PolicyParams init = init_params(pc);
    const LoadedCheckpoint zero = load_checkpoint(paths.checkpoint);
    CHECK(zero.params.version == 0);
    CHECK(zero.params.tensors.tok_emb == init.tensors.tok_emb);
    CHECK(zero.params.tensors.wout == init.tensors.wout);
  }
  SUBCASE("rft and eval") {
    REQUIRE(cmd_sft(cfg, default_sft_paths(cfg), os, err) == kExitOk);
    RftPaths paths = default_rft_paths(cfg);
    REQUIRE(cmd_rft(cfg, paths, os, err) == kExitOk);
    CHECK(fs::exists(dir.path / "checkpoints" / "rft_ad.ckpt"));
    CHECK(adlab::read_telemetry(dir.path / "telemetry" / "rft_ad.csv").size() == 2);
    CHECK(os.str().find("exact=8") != std::string::npos);

    cfg.rft.reward_mode = RewardMode::Vanilla;
    RftPaths scratch = default_rft_paths(cfg);
    scratch.init.reset();
    REQUIRE(cmd_rft(cfg, scratch, os, err) == kExitOk);
    CHECK(fs::exists(dir.path / "checkpoints" / "rft_vanilla.ckpt"));

    paths.init = dir.path / "checkpoints" / "missing.ckpt";
    CHECK(cmd_rft(cfg, paths, os, err) == kExitIo);

    ::unsetenv("AD_JUDGE_URL");
    cfg.judge_kind = JudgeKind::Remote;
    CHECK(cmd_rft(cfg, default_rft_paths(cfg), os, err) == kExitJudgeConfig);
    ::setenv("AD_JUDGE_URL", "not a url", 1);
    CHECK(cmd_rft(cfg, default_rft_paths(cfg), os, err) == kExitJudgeConfig);
    ::unsetenv("AD_JUDGE_URL");

    const fs::path report = dir.path / "out" / "report.json";
    std::ostringstream eval_out;
    REQUIRE(cmd_eval(cfg, paths.checkpoint, default_train_data(cfg), report, {}, eval_out, err) == kExitOk);
    CHECK(eval_out.str().find("acc_b=") != std::string::npos);
    CHECK(eval_out.str().find("thk_pct_basic=") != std::string::npos);
    CHECK(read_report(report).per_sample.size() == 20);
    CHECK(cmd_eval(cfg, paths.checkpoint, default_train_data(cfg), "/proc/adlab/r.json", {}, os, err) == kExitIo);
    CHECK(cmd_eval(cfg, paths.checkpoint, dir.path / "none.jsonl", report, {}, os, err) == kExitIo);
  }
  SUBCASE("lock file blocks a concurrent writer") {
    const fs::path ck_dir = dir.path / "checkpoints";
    fs::create_directories(ck_dir);
    const int fd = ::open((ck_dir / ".adlab.lock").c_str(), O_CREAT | O_RDWR, 0644);
    REQUIRE(fd >= 0);
    REQUIRE(::flock(fd, LOCK_EX | LOCK_NB) == 0);
    CHECK(cmd_sft(cfg, default_sft_paths(cfg), os, err) == kExitIo);
    CHECK(err.str().find("another process") != std::string::npos);
    ::flock(fd, LOCK_UN);
    ::close(fd);
    CHECK(cmd_sft(cfg, default_sft_paths(cfg), os, err) == kExitOk);
  }
  SUBCASE("malformed dataset") {
    std::ofstream(default_train_data(cfg), std::ios::trunc) << "{\n";
    CHECK(cmd_sft(cfg, default_sft_paths(cfg), os, err) == kExitIo);
  }
}

TEST_CASE("report command") {
  TempDir dir("report");
  const fs::path tel = dir.path / "telemetry";
  fs::create_directories(tel);
  std::ostringstream os, err;
  CHECK(cmd_report(tel, dir.path / "s.json", os, err) == kExitConfig);
  CHECK(cmd_report(dir.path / "absent", dir.path / "s.json", os, err) == kExitIo);

  for (const char* name : {"rft_ad.csv", "rft_vanilla.csv"}) {
    adlab::CsvTelemetry csv(tel / name);
    for (std::uint64_t i = 0; i < 120; ++i) {
      StepStats s;
      s.step = i;
      s.mean_total_reward = 0.5 + 0.01 * static_cast<double>(i);
      s.mean_format_reward = 0.25 + 0.005 * static_cast<double>(i);
      s.clip_fraction = 0.0;
      csv.write(s);
    }
  }
  { adlab::CsvTelemetry empty(tel / "sft.csv"); }
  REQUIRE(cmd_report(tel, dir.path / "out" / "summary.json", os, err) == kExitOk);
  const auto j = nlohmann::json::parse(slurp(dir.path / "out" / "summary.json"));
  REQUIRE(j.at("runs").size() == 2);
  CHECK(j.at("runs")[0].at("name") == "rft_ad");
  CHECK(j.at("runs")[0].at("total_rising") == true);
  CHECK(j.at("runs")[0].at("format_rising") == true);
  CHECK(j.at("runs")[0].at("clip_fraction").size() == 3);
  const std::string svg = slurp(dir.path / "out" / "summary.svg");
  std::size_t lines = 0;
  for (std::size_t p = 0; (p = svg.find("<polyline", p)) != std::string::npos; ++p) ++lines;
  CHECK(lines == 4);
  CHECK(svg.find("rft_vanilla") != std::string::npos);
  CHECK(os.str().find("rising") != std::string::npos);
}

TEST_CASE("svg escapes run names") {
  RunCurve r{"a<b", {}};
  StepStats s;
  s.mean_total_reward = 1.0;
  r.stats.push_back(s);
  const std::string svg = render_reward_svg({r});
  CHECK(svg.find("a&lt;b") != std::string::npos);
  CHECK(svg.rfind("<svg", 0) == 0);
}

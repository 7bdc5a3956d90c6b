#include <CLI11.hpp>
#include <iostream>

#include "adlab/cli/commands.hpp"
#include "adlab/log.hpp"

using namespace adlab;
using namespace adlab::cli;

int main(int argc, char** argv) {
  CLI::App app{"Active deduction lab: data generation, SFT, GRPO fine-tuning, evaluation and reports"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string log_level;
  app.add_option("-c,--config", config_path, "JSON run config (defaults apply when omitted)");
  app.add_option("--seed", seed, "override the global seed");
  app.add_option("--log-level", log_level, "debug|info|warn|error|off")
      ->check(CLI::IsMember({"debug", "info", "warn", "error", "off"}));

  auto* gen = app.add_subcommand("gen-data", "generate a dataset and its metadata sidecar");
  std::string gen_out;
  gen->add_option("-o,--out", gen_out, "output JSONL (default <data_dir>/train.jsonl)");

  auto* sft = app.add_subcommand("sft", "supervised fine-tuning from initialization");
  std::string sft_data, sft_out, sft_tel;
  std::optional<std::size_t> sft_epochs;
  sft->add_option("--data", sft_data, "training JSONL");
  sft->add_option("-o,--out", sft_out, "output checkpoint");
  sft->add_option("--telemetry", sft_tel, "telemetry CSV");
  sft->add_option("--epochs", sft_epochs, "override sft.epochs");

  auto* rft = app.add_subcommand("rft", "GRPO reinforcement fine-tuning");
  std::string rft_data, rft_init, rft_out, rft_tel, reward_mode, judge;
  bool from_scratch = false;
  std::optional<std::size_t> steps;
  rft->add_option("--data", rft_data, "training JSONL");
  auto* init_opt = rft->add_option("--init", rft_init, "starting checkpoint (default <checkpoint_dir>/sft.ckpt)");
  rft->add_flag("--from-scratch", from_scratch, "start from initialization")->excludes(init_opt);
  rft->add_option("--reward-mode", reward_mode, "ad|vanilla")->check(CLI::IsMember({"ad", "vanilla"}));
  rft->add_option("--judge", judge, "exact|remote")->check(CLI::IsMember({"exact", "remote"}));
  rft->add_option("--steps", steps, "override rft.steps");
  rft->add_option("-o,--out", rft_out, "output checkpoint");
  rft->add_option("--telemetry", rft_tel, "telemetry CSV");

  auto* ev = app.add_subcommand("eval", "answer ranking and behavior rates on a dataset");
  std::string ev_ckpt, ev_data, ev_report, ranking;
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint to evaluate")->required();
  ev->add_option("--data", ev_data, "held-out JSONL")->required();
  ev->add_option("--report", ev_report, "output report JSON")->required();
  ev->add_option("--ranking", ranking, "after_reasoning|direct")
      ->check(CLI::IsMember({"after_reasoning", "direct"}));

  auto* rep = app.add_subcommand("report", "reward curve summary JSON and SVG chart");
  std::string rep_dir, rep_out;
  rep->add_option("--telemetry-dir", rep_dir, "directory of telemetry CSVs (default from config)");
  rep->add_option("-o,--out", rep_out, "summary JSON; the chart goes next to it")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  if (!log_level.empty()) {
    const log::Level levels[] = {log::Level::Debug, log::Level::Info, log::Level::Warn, log::Level::Error,
                                 log::Level::Off};
    const char* names[] = {"debug", "info", "warn", "error", "off"};
    for (int i = 0; i < 5; ++i) {
      if (log_level == names[i]) log::set_threshold(levels[i]);
    }
  }

  RunConfig cfg;
  const int loaded = guarded(std::cerr, [&] {
    if (!config_path.empty()) cfg = load_run_config(config_path);
    if (seed) cfg.seed = *seed;
    if (sft_epochs) cfg.sft.epochs = *sft_epochs;
    if (steps) cfg.rft.steps = *steps;
    if (!reward_mode.empty()) cfg.rft.reward_mode = *parse_reward_mode(reward_mode);
    if (!judge.empty()) cfg.judge_kind = *parse_judge_kind(judge);
    cfg.propagate_seed();
    cfg.validate();
    return kExitOk;
  });
  if (loaded != kExitOk) return loaded;

  if (*gen) {
    const std::filesystem::path out = gen_out.empty() ? default_train_data(cfg) : std::filesystem::path(gen_out);
    return cmd_gen_data(cfg, out, std::cout, std::cerr);
  }
  if (*sft) {
    SftPaths p = default_sft_paths(cfg);
    if (!sft_data.empty()) p.data = sft_data;
    if (!sft_out.empty()) p.checkpoint = sft_out;
    if (!sft_tel.empty()) p.telemetry = sft_tel;
    return cmd_sft(cfg, p, std::cout, std::cerr);
  }
  if (*rft) {
    RftPaths p = default_rft_paths(cfg);
    if (!rft_data.empty()) p.data = rft_data;
    if (from_scratch) p.init.reset();
    if (!rft_init.empty()) p.init = rft_init;
    if (!rft_out.empty()) p.checkpoint = rft_out;
    if (!rft_tel.empty()) p.telemetry = rft_tel;
    return cmd_rft(cfg, p, std::cout, std::cerr);
  }
  if (*ev) {
    EvalOptions opts;
    if (!ranking.empty()) opts.ranking = *parse_ranking_mode(ranking);
    return cmd_eval(cfg, ev_ckpt, ev_data, ev_report, opts, std::cout, std::cerr);
  }
  return cmd_report(rep_dir.empty() ? cfg.paths.telemetry_dir : std::filesystem::path(rep_dir), rep_out, std::cout,
                    std::cerr);
}

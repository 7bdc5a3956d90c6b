#pragma once

// The five CLI commands. Each returns a process exit status and never throws.

#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>

#include "adlab/cli/run_config.hpp"
#include "adlab/error.hpp"
#include "adlab/eval.hpp"

namespace adlab::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,  // anything outside the documented contract
  kExitConfig = 2,
  kExitIo = 3,
  kExitDiverged = 4,
  kExitJudgeConfig = 5,
};

int exit_code_for(const Error& e) noexcept;

// Runs body, mapping library errors onto exit codes and reporting them on err.
int guarded(std::ostream& err, const std::function<int()>& body);

std::filesystem::path default_train_data(const RunConfig& cfg);
std::filesystem::path default_sft_checkpoint(const RunConfig& cfg);
std::filesystem::path default_rft_checkpoint(const RunConfig& cfg, RewardMode mode);

int cmd_gen_data(const RunConfig& cfg, const std::filesystem::path& out, std::ostream& os, std::ostream& err);

struct SftPaths {
  std::filesystem::path data;
  std::filesystem::path checkpoint;
  std::filesystem::path telemetry;
};
SftPaths default_sft_paths(const RunConfig& cfg);
int cmd_sft(const RunConfig& cfg, const SftPaths& paths, std::ostream& os, std::ostream& err);

struct RftPaths {
  std::filesystem::path data;
  std::optional<std::filesystem::path> init;  // absent: start from initialization
  std::filesystem::path checkpoint;
  std::filesystem::path telemetry;
};
// cfg.rft.reward_mode selects the output names.
RftPaths default_rft_paths(const RunConfig& cfg);
int cmd_rft(const RunConfig& cfg, const RftPaths& paths, std::ostream& os, std::ostream& err);

int cmd_eval(const RunConfig& cfg, const std::filesystem::path& checkpoint, const std::filesystem::path& dataset,
             const std::filesystem::path& report, const EvalOptions& opts, std::ostream& os, std::ostream& err);

// Writes the summary JSON to out and the chart next to it with an .svg
// extension.
int cmd_report(const std::filesystem::path& telemetry_dir, const std::filesystem::path& out, std::ostream& os,
               std::ostream& err);

}  // namespace adlab::cli

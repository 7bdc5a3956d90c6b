#pragma once

// The single JSON run configuration shared by every command.

#include <cstdint>
#include <filesystem>
#include <string>

#include "adlab/judge.hpp"
#include "adlab/policy.hpp"
#include "adlab/taskgen.hpp"
#include "adlab/train.hpp"

namespace adlab::cli {

struct RunPaths {
  std::filesystem::path data_dir = "data";
  std::filesystem::path checkpoint_dir = "checkpoints";
  std::filesystem::path telemetry_dir = "telemetry";
};

struct RunConfig {
  std::uint64_t seed = 7;
  GeneratorConfig generator{.n_simple = 2000, .n_complex = 2000};
  PolicyConfig policy;  // vocab_size is taken from the task vocabulary
  SftConfig sft;
  GrpoConfig rft;
  JudgeKind judge_kind = JudgeKind::Exact;
  RunPaths paths;

  // Copies the global seed into every seeded component, one derived stream
  // each. The generator takes the global seed unchanged.
  void propagate_seed();
  void validate() const;  // throws InvalidConfig
};

// Unknown keys are rejected. Relative paths resolve against base_dir.
// Throws InvalidConfig.
RunConfig run_config_from_json(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);
std::string run_config_to_json(const RunConfig& cfg);

}  // namespace adlab::cli

#pragma once

// Deterministic synthetic deduction tasks.
//
// Simple samples ask for one variable's value from a fact context. Complex
// samples embed a chain of hypothetical updates ("If Y were X+2 and Z were
// Y-1, what would Z be?") that shadow the stated facts; the reasoning path
// evaluates the chain left to right with results clamped to the value range.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "adlab/core.hpp"
#include "adlab/rng.hpp"

namespace adlab {

struct GeneratorConfig {
  std::size_t n_simple = 0;
  std::size_t n_complex = 0;
  int max_hops = 3;   // reasoning steps in a complex chain, including the lookup
  int value_min = 0;
  int value_max = 20;
  int num_vars = 4;   // names drawn from X, Y, Z, W, U, V, P, Q
  int max_offset = 3; // chain updates are +k or -k with 1 <= k <= max_offset
  std::uint64_t seed = 0;

  void validate() const;  // throws InvalidConfig

  friend bool operator==(const GeneratorConfig&, const GeneratorConfig&) = default;
};

Sample gen_simple(Rng& rng, const GeneratorConfig& cfg);

// hops in [2, cfg.max_hops], else InvalidHops.
Sample gen_complex(Rng& rng, const GeneratorConfig& cfg, int hops);

// ids "s-{i}" then "c-{i}"; no duplicate (context, question) pairs.
std::vector<Sample> gen_dataset(const GeneratorConfig& cfg);

// Every string the generator can emit tokenizes under this vocabulary.
Vocab task_vocab(const GeneratorConfig& cfg);

void save_dataset(const std::vector<Sample>& samples, const std::filesystem::path& path);
std::vector<Sample> load_dataset(const std::filesystem::path& path);

// Sidecar "<dataset>.meta.json" with the generator config and the checksum of
// the dataset file bytes.
std::filesystem::path metadata_path(const std::filesystem::path& dataset);
void write_dataset_metadata(const std::filesystem::path& dataset, const GeneratorConfig& cfg);
std::string file_checksum(const std::filesystem::path& path);  // "fnv1a64:<hex>"

std::string generator_config_to_json(const GeneratorConfig& cfg);
GeneratorConfig generator_config_from_json(const std::string& text);

}  // namespace adlab

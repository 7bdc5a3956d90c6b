#pragma once

// Per-step training statistics and their CSV form.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace adlab {

struct StepStats {
  std::uint64_t step = 0;
  std::optional<double> mean_total_reward;
  std::optional<double> mean_format_reward;
  std::optional<double> mean_accuracy_reward;
  std::optional<double> mean_kl;
  std::optional<double> clip_fraction;
  std::optional<double> sft_loss;

  // Not part of the CSV.
  std::uint64_t remote_verdicts = 0;
  std::uint64_t lexical_verdicts = 0;
  std::uint64_t exact_verdicts = 0;
  bool kl_clamped = false;
};

using TelemetrySink = std::function<void(const StepStats&)>;

inline constexpr const char* kTelemetryHeader =
    "step,mean_total_reward,mean_format_reward,mean_accuracy_reward,mean_kl,clip_fraction,sft_loss";

std::string telemetry_row(const StepStats& stats);

// Writes the header on open and one flushed row per step.
class CsvTelemetry {
 public:
  explicit CsvTelemetry(const std::filesystem::path& path);

  void write(const StepStats& stats);
  TelemetrySink sink() {
    return [this](const StepStats& s) { write(s); };
  }

 private:
  std::filesystem::path path_;
  std::ofstream os_;
};

// Throws ParseError on malformed rows and IoError when unreadable.
std::vector<StepStats> read_telemetry(const std::filesystem::path& path);

}  // namespace adlab

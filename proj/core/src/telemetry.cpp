#include "adlab/telemetry.hpp"

#include <array>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "adlab/error.hpp"

namespace adlab {

namespace {

std::string cell(const std::optional<double>& v) {
  if (!v) return {};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", *v);
  return buf;
}

std::optional<double> parse_cell(const std::string& text, std::size_t line, const char* field) {
  if (text.empty()) return std::nullopt;
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(text.c_str(), &end);
  if (end != text.c_str() + text.size() || errno == ERANGE) throw ParseError(line, "not a number", field);
  return v;
}

}  // namespace

std::string telemetry_row(const StepStats& s) {
  std::string row = std::to_string(s.step);
  for (const auto* v : {&s.mean_total_reward, &s.mean_format_reward, &s.mean_accuracy_reward, &s.mean_kl,
                        &s.clip_fraction, &s.sft_loss}) {
    row += ',';
    row += cell(*v);
  }
  return row;
}

CsvTelemetry::CsvTelemetry(const std::filesystem::path& path)
    : path_(path), os_(path, std::ios::binary | std::ios::trunc) {
  if (!os_) throw Error(Errc::IoError, "cannot open telemetry file " + path.string());
  os_ << kTelemetryHeader << '\n';
  os_.flush();
}

void CsvTelemetry::write(const StepStats& stats) {
  os_ << telemetry_row(stats) << '\n';
  os_.flush();
  if (!os_) throw Error(Errc::IoError, "failed writing telemetry to " + path_.string());
}

std::vector<StepStats> read_telemetry(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::IoError, "cannot open telemetry file " + path.string());
  std::string line;
  if (!std::getline(is, line) || line != kTelemetryHeader) throw ParseError(1, "missing telemetry header");

  static constexpr std::array<const char*, 7> kFields = {
      "step", "mean_total_reward", "mean_format_reward", "mean_accuracy_reward", "mean_kl", "clip_fraction",
      "sft_loss"};
  std::vector<StepStats> out;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (cells.size() != kFields.size()) throw ParseError(line_no, "expected 7 columns");

    StepStats s;
    const auto step = parse_cell(cells[0], line_no, kFields[0]);
    if (!step || *step < 0) throw ParseError(line_no, "missing step", kFields[0]);
    s.step = static_cast<std::uint64_t>(*step);
    s.mean_total_reward = parse_cell(cells[1], line_no, kFields[1]);
    s.mean_format_reward = parse_cell(cells[2], line_no, kFields[2]);
    s.mean_accuracy_reward = parse_cell(cells[3], line_no, kFields[3]);
    s.mean_kl = parse_cell(cells[4], line_no, kFields[4]);
    s.clip_fraction = parse_cell(cells[5], line_no, kFields[5]);
    s.sft_loss = parse_cell(cells[6], line_no, kFields[6]);
    out.push_back(s);
  }
  return out;
}

}  // namespace adlab

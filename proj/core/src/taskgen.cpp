#include "adlab/taskgen.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <unordered_set>

#include "adlab/error.hpp"

namespace adlab {

namespace {

constexpr std::array<const char*, 8> kVarNames = {"X", "Y", "Z", "W", "U", "V", "P", "Q"};
constexpr int kMaxCollisions = 1000;
constexpr int kOverrideOdds = 4;  // one chain in four starts with a constant override

int clamp_value(const GeneratorConfig& cfg, long v) {
  return static_cast<int>(std::clamp<long>(v, cfg.value_min, cfg.value_max));
}

struct Link {
  int offset;  // signed, never zero
  int value;   // clamped result
};

std::string offset_text(int k) { return (k > 0 ? "+" : "-") + std::to_string(k > 0 ? k : -k); }

// Draws a chain of hops-1 updates starting from start.
std::vector<Link> draw_links(Rng& rng, const GeneratorConfig& cfg, int start, int hops) {
  std::vector<Link> links;
  int cur = start;
  for (int i = 1; i < hops; ++i) {
    int k = static_cast<int>(rng.uniform_int(1, cfg.max_offset));
    if (rng.uniform_int(0, 1) == 0) k = -k;
    cur = clamp_value(cfg, static_cast<long>(cur) + k);
    links.push_back({k, cur});
  }
  return links;
}

int draw_value(Rng& rng, const GeneratorConfig& cfg) {
  return static_cast<int>(rng.uniform_int(cfg.value_min, cfg.value_max));
}

struct Facts {
  std::vector<int> values;  // by variable index
  std::string context;
};

Facts draw_facts(Rng& rng, const GeneratorConfig& cfg) {
  Facts f;
  f.values.resize(static_cast<std::size_t>(cfg.num_vars));
  for (auto& v : f.values) v = draw_value(rng, cfg);
  // Facts are listed in name order: one surface form per context shape.
  for (std::size_t i = 0; i < f.values.size(); ++i) {
    if (i) f.context += "; ";
    f.context += std::string(kVarNames[i]) + "=" + std::to_string(f.values[i]);
  }
  return f;
}

std::array<std::string, 2> place_candidates(Rng& rng, int truth, int distractor) {
  if (rng.uniform_int(0, 1) == 0) return {std::to_string(truth), std::to_string(distractor)};
  return {std::to_string(distractor), std::to_string(truth)};
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

void GeneratorConfig::validate() const {
  auto bad = [](const std::string& m) { throw Error(Errc::InvalidConfig, m); };
  if (max_hops < 2) bad("max_hops must be >= 2");
  if (num_vars < 2 || num_vars > static_cast<int>(kVarNames.size())) bad("num_vars must be in [2, 8]");
  if (max_hops > num_vars) bad("max_hops must not exceed num_vars");
  if (value_min >= value_max) bad("value_range must contain at least two values");
  if (max_offset < 1) bad("max_offset must be >= 1");
}

Sample gen_simple(Rng& rng, const GeneratorConfig& cfg) {
  Facts f = draw_facts(rng, cfg);
  const auto q = static_cast<std::size_t>(rng.uniform_int(0, cfg.num_vars - 1));
  const int truth = f.values[q];
  // Uniform over the other values, so truth and distractor are exchangeable.
  int distractor = static_cast<int>(rng.uniform_int(cfg.value_min, cfg.value_max - 1));
  if (distractor >= truth) ++distractor;

  Sample s;
  s.context = std::move(f.context);
  s.question = std::string("What is ") + kVarNames[q] + "?";
  s.difficulty = Difficulty::Simple;
  s.reference_answer = std::to_string(truth);
  s.candidates = place_candidates(rng, truth, distractor);
  return s;
}

Sample gen_complex(Rng& rng, const GeneratorConfig& cfg, int hops) {
  if (hops < 2 || hops > cfg.max_hops) {
    throw Error(Errc::InvalidHops, "hops must be in [2, " + std::to_string(cfg.max_hops) + "], got " +
                                       std::to_string(hops));
  }
  Facts f = draw_facts(rng, cfg);

  std::vector<int> vars(static_cast<std::size_t>(cfg.num_vars));
  for (std::size_t i = 0; i < vars.size(); ++i) vars[i] = static_cast<int>(i);
  rng.shuffle(std::span<int>(vars));
  vars.resize(static_cast<std::size_t>(hops));
  auto name = [&](std::size_t i) { return std::string(kVarNames[static_cast<std::size_t>(vars[i])]); };

  const bool override_start = rng.uniform_int(0, kOverrideOdds - 1) == 0;
  int start = f.values[static_cast<std::size_t>(vars[0])];
  if (override_start) {
    int c = static_cast<int>(rng.uniform_int(cfg.value_min, cfg.value_max - 1));
    if (c >= start) ++c;
    start = c;
  }
  const auto links = draw_links(rng, cfg, start, hops);
  const int truth = links.back().value;

  // The distractor is the answer of an independent chain of the same shape,
  // so it follows the same marginal as the truth.
  int distractor = truth;
  while (distractor == truth) {
    distractor = draw_links(rng, cfg, draw_value(rng, cfg), hops).back().value;
  }

  std::vector<std::string> premises;
  if (override_start) premises.push_back(name(0) + " were " + std::to_string(start));
  std::string reasoning = name(0) + "=" + std::to_string(start);
  for (std::size_t i = 0; i < links.size(); ++i) {
    const std::string expr = name(i) + offset_text(links[i].offset);
    premises.push_back(name(i + 1) + " were " + expr);
    reasoning += "; " + name(i + 1) + "=" + expr + "=" + std::to_string(links[i].value);
  }
  std::string question = "If ";
  for (std::size_t i = 0; i < premises.size(); ++i) {
    if (i) question += " and ";
    question += premises[i];
  }
  question += ", what would " + name(links.size()) + " be?";

  Sample s;
  s.context = std::move(f.context);
  s.question = std::move(question);
  s.difficulty = Difficulty::Complex;
  s.reference_answer = std::to_string(truth);
  s.reasoning = std::move(reasoning);
  s.candidates = place_candidates(rng, truth, distractor);
  return s;
}

std::vector<Sample> gen_dataset(const GeneratorConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  std::vector<Sample> out;
  out.reserve(cfg.n_simple + cfg.n_complex);
  std::unordered_set<std::string> seen;

  auto emit = [&](auto&& make, const std::string& prefix, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) {
      int collisions = 0;
      for (;;) {
        Sample s = make();
        if (seen.insert(s.context + '\n' + s.question).second) {
          s.id = prefix + std::to_string(i);
          out.push_back(std::move(s));
          break;
        }
        if (++collisions >= kMaxCollisions) {
          throw Error(Errc::GenerationExhausted,
                      "no fresh " + prefix + " sample after " + std::to_string(kMaxCollisions) + " collisions");
        }
      }
    }
  };
  emit([&] { return gen_simple(rng, cfg); }, "s-", cfg.n_simple);
  emit([&] { return gen_complex(rng, cfg, static_cast<int>(rng.uniform_int(2, cfg.max_hops))); }, "c-",
       cfg.n_complex);
  return out;
}

Vocab task_vocab(const GeneratorConfig& cfg) {
  cfg.validate();
  std::vector<std::string> symbols;
  for (int i = 0; i < cfg.num_vars; ++i) symbols.emplace_back(kVarNames[static_cast<std::size_t>(i)]);
  const int max_abs = std::max({std::abs(cfg.value_min), std::abs(cfg.value_max), cfg.max_offset});
  for (int v = 0; v <= max_abs; ++v) symbols.push_back(std::to_string(v));
  for (const char* piece : {"=", "; ", "+", "-", " ", "?", "What is ", "If ", " were ", " and ", ", what would ",
                            " be?"}) {
    symbols.emplace_back(piece);
  }
  return Vocab::with_symbols(symbols);
}

void save_dataset(const std::vector<Sample>& samples, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(Errc::IoError, "cannot open dataset for writing: " + path.string());
  for (const auto& s : samples) os << sample_to_json(s) << '\n';
  os.flush();
  if (!os) throw Error(Errc::IoError, "failed writing dataset: " + path.string());
}

std::vector<Sample> load_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::IoError, "cannot open dataset: " + path.string());
  std::vector<Sample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') throw ParseError(line_no, "CR line ending");
    if (line.empty()) throw ParseError(line_no, "empty line");
    out.push_back(sample_from_json(line, line_no));
  }
  if (is.bad()) throw Error(Errc::IoError, "failed reading dataset: " + path.string());
  return out;
}

std::filesystem::path metadata_path(const std::filesystem::path& dataset) {
  return std::filesystem::path(dataset.string() + ".meta.json");
}

std::string file_checksum(const std::filesystem::path& path) {
  return checksum_string(read_file(path));
}

void write_dataset_metadata(const std::filesystem::path& dataset, const GeneratorConfig& cfg) {
  nlohmann::ordered_json meta = {{"generator", nlohmann::json::parse(generator_config_to_json(cfg))},
                                 {"checksum", file_checksum(dataset)}};
  std::ofstream os(metadata_path(dataset), std::ios::binary | std::ios::trunc);
  if (!os) throw Error(Errc::IoError, "cannot write " + metadata_path(dataset).string());
  os << meta.dump(2) << '\n';
}

std::string generator_config_to_json(const GeneratorConfig& cfg) {
  nlohmann::ordered_json j = {{"n_simple", cfg.n_simple},    {"n_complex", cfg.n_complex},
                              {"max_hops", cfg.max_hops},    {"value_range", {cfg.value_min, cfg.value_max}},
                              {"num_vars", cfg.num_vars},    {"max_offset", cfg.max_offset},
                              {"seed", cfg.seed}};
  return j.dump();
}

GeneratorConfig generator_config_from_json(const std::string& text) {
  GeneratorConfig cfg;
  try {
    const auto j = nlohmann::json::parse(text);
    cfg.n_simple = j.value("n_simple", cfg.n_simple);
    cfg.n_complex = j.value("n_complex", cfg.n_complex);
    cfg.max_hops = j.value("max_hops", cfg.max_hops);
    if (j.contains("value_range")) {
      const auto r = j.at("value_range").get<std::array<int, 2>>();
      cfg.value_min = r[0];
      cfg.value_max = r[1];
    }
    cfg.num_vars = j.value("num_vars", cfg.num_vars);
    cfg.max_offset = j.value("max_offset", cfg.max_offset);
    cfg.seed = j.value("seed", cfg.seed);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidConfig, std::string("bad generator config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

}  // namespace adlab

#include "adlab/cli/run_config.hpp"

#include <fstream>
#include <initializer_list>
#include <json.hpp>
#include <sstream>

#include "adlab/error.hpp"
#include "adlab/rng.hpp"

namespace adlab::cli {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

[[noreturn]] void bad(const std::string& m) { throw Error(Errc::InvalidConfig, m); }

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) bad(where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok |= key == a;
    if (!ok) bad("unknown key '" + key + "' in " + where);
  }
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

template <class Enum, class Parse>
void read_enum(const json& j, const char* key, Enum& out, Parse parse) {
  if (!j.contains(key)) return;
  const auto text = j.at(key).get<std::string>();
  const auto v = parse(text);
  if (!v) bad(std::string("bad value '") + text + "' for " + key);
  out = *v;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::filesystem::path& p) {
  return p.is_absolute() || base.empty() ? p : base / p;
}

}  // namespace

void RunConfig::propagate_seed() {
  generator.seed = seed;
  policy.seed = mix_seed(seed, 1);
  sft.seed = mix_seed(seed, 2);
  rft.seed = mix_seed(seed, 3);
}

void RunConfig::validate() const {
  generator.validate();
  sft.validate();
  rft.validate();
  if (policy.context_len == 0 || policy.embed_dim == 0 || policy.num_layers == 0 || policy.num_heads == 0 ||
      policy.embed_dim % policy.num_heads != 0) {
    bad("policy dimensions must be positive with embed_dim divisible by num_heads");
  }
  if (paths.data_dir.empty() || paths.checkpoint_dir.empty() || paths.telemetry_dir.empty()) {
    bad("paths must not be empty");
  }
}

RunConfig run_config_from_json(const std::string& text, const std::filesystem::path& base_dir) {
  RunConfig cfg;
  try {
    const json j = json::parse(text);
    check_keys(j, "config", {"seed", "generator", "policy", "sft", "rft", "judge_kind", "paths"});
    read(j, "seed", cfg.seed);
    if (j.contains("generator")) {
      const auto& g = j.at("generator");
      check_keys(g, "generator", {"n_simple", "n_complex", "max_hops", "value_range", "num_vars", "max_offset"});
      cfg.generator = generator_config_from_json(g.dump());
    }
    if (j.contains("policy")) {
      const auto& p = j.at("policy");
      check_keys(p, "policy", {"context_len", "embed_dim", "num_layers", "num_heads"});
      read(p, "context_len", cfg.policy.context_len);
      read(p, "embed_dim", cfg.policy.embed_dim);
      read(p, "num_layers", cfg.policy.num_layers);
      read(p, "num_heads", cfg.policy.num_heads);
    }
    if (j.contains("sft")) {
      const auto& s = j.at("sft");
      check_keys(s, "sft", {"epochs", "learning_rate", "batch_size", "optimizer"});
      read(s, "epochs", cfg.sft.epochs);
      read(s, "learning_rate", cfg.sft.learning_rate);
      read(s, "batch_size", cfg.sft.batch_size);
      read_enum(s, "optimizer", cfg.sft.optimizer.kind, parse_optimizer_kind);
    }
    if (j.contains("rft")) {
      const auto& r = j.at("rft");
      check_keys(r, "rft",
                 {"group_size", "clip_epsilon", "kl_beta", "learning_rate", "ratio_level", "reward_mode", "alpha",
                  "beta_fmt", "steps", "batch_prompts", "max_new_tokens", "temperature", "optimizer"});
      auto& g = cfg.rft;
      read(r, "group_size", g.group_size);
      read(r, "clip_epsilon", g.clip_epsilon);
      read(r, "kl_beta", g.kl_beta);
      read(r, "learning_rate", g.learning_rate);
      read_enum(r, "ratio_level", g.ratio_level, parse_ratio_level);
      read_enum(r, "reward_mode", g.reward_mode, parse_reward_mode);
      read(r, "alpha", g.weights.alpha);
      read(r, "beta_fmt", g.weights.beta_fmt);
      read(r, "steps", g.steps);
      read(r, "batch_prompts", g.batch_prompts);
      read(r, "max_new_tokens", g.max_new_tokens);
      read(r, "temperature", g.temperature);
      read_enum(r, "optimizer", g.optimizer.kind, parse_optimizer_kind);
    }
    read_enum(j, "judge_kind", cfg.judge_kind, parse_judge_kind);
    if (j.contains("paths")) {
      const auto& p = j.at("paths");
      check_keys(p, "paths", {"data_dir", "checkpoint_dir", "telemetry_dir"});
      auto path_field = [&](const char* key, std::filesystem::path& out) {
        if (p.contains(key)) out = p.at(key).get<std::string>();
      };
      path_field("data_dir", cfg.paths.data_dir);
      path_field("checkpoint_dir", cfg.paths.checkpoint_dir);
      path_field("telemetry_dir", cfg.paths.telemetry_dir);
    }
  } catch (const json::exception& e) {
    bad(std::string("bad run config: ") + e.what());
  }
  cfg.paths.data_dir = resolve(base_dir, cfg.paths.data_dir);
  cfg.paths.checkpoint_dir = resolve(base_dir, cfg.paths.checkpoint_dir);
  cfg.paths.telemetry_dir = resolve(base_dir, cfg.paths.telemetry_dir);
  cfg.propagate_seed();
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::IoError, "cannot open config " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return run_config_from_json(ss.str(), path.parent_path());
}

std::string run_config_to_json(const RunConfig& cfg) {
  const auto& r = cfg.rft;
  ordered_json j = {
      {"seed", cfg.seed},
      {"generator",
       {{"n_simple", cfg.generator.n_simple},
        {"n_complex", cfg.generator.n_complex},
        {"max_hops", cfg.generator.max_hops},
        {"value_range", {cfg.generator.value_min, cfg.generator.value_max}},
        {"num_vars", cfg.generator.num_vars},
        {"max_offset", cfg.generator.max_offset}}},
      {"policy",
       {{"context_len", cfg.policy.context_len},
        {"embed_dim", cfg.policy.embed_dim},
        {"num_layers", cfg.policy.num_layers},
        {"num_heads", cfg.policy.num_heads}}},
      {"sft",
       {{"epochs", cfg.sft.epochs},
        {"learning_rate", cfg.sft.learning_rate},
        {"batch_size", cfg.sft.batch_size},
        {"optimizer", to_string(cfg.sft.optimizer.kind)}}},
      {"rft",
       {{"group_size", r.group_size},
        {"clip_epsilon", r.clip_epsilon},
        {"kl_beta", r.kl_beta},
        {"learning_rate", r.learning_rate},
        {"ratio_level", to_string(r.ratio_level)},
        {"reward_mode", to_string(r.reward_mode)},
        {"alpha", r.weights.alpha},
        {"beta_fmt", r.weights.beta_fmt},
        {"steps", r.steps},
        {"batch_prompts", r.batch_prompts},
        {"max_new_tokens", r.max_new_tokens},
        {"temperature", r.temperature},
        {"optimizer", to_string(r.optimizer.kind)}}},
      {"judge_kind", to_string(cfg.judge_kind)},
      {"paths",
       {{"data_dir", cfg.paths.data_dir.string()},
        {"checkpoint_dir", cfg.paths.checkpoint_dir.string()},
        {"telemetry_dir", cfg.paths.telemetry_dir.string()}}},
  };
  return j.dump(2);
}

}  // namespace adlab::cli

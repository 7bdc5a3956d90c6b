#include "adlab/cli/commands.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <memory>

#include "adlab/cli/report.hpp"
#include "adlab/log.hpp"
#include "adlab/taskgen.hpp"

namespace adlab::cli {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kProgressEvery = 50;

// Exclusive advisory lock on <dir>/.adlab.lock for the life of the object.
class DirLock {
 public:
  explicit DirLock(const fs::path& dir) {
    const fs::path path = dir / ".adlab.lock";
    fd_ = ::open(path.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644);
    if (fd_ < 0) throw Error(Errc::IoError, "cannot open lock file " + path.string());
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
      ::close(fd_);
      throw Error(Errc::IoError, "another process is writing to " + dir.string());
    }
  }
  ~DirLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  int fd_ = -1;
};

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error(Errc::IoError, "cannot create directory " + dir.string());
}

void ensure_parent(const fs::path& file) {
  if (file.has_parent_path()) ensure_dir(file.parent_path());
}

std::string fixed(std::optional<double> v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *v);
  return buf;
}

// The checkpoint's own vocabulary when it carries one, else the task vocabulary.
Vocab checkpoint_vocab(const LoadedCheckpoint& ck, const RunConfig& cfg) {
  Vocab v = ck.vocab_tokens ? Vocab(*ck.vocab_tokens) : task_vocab(cfg.generator);
  if (v.size() != ck.params.config.vocab_size) {
    throw Error(Errc::InvalidConfig, "checkpoint vocab_size " + std::to_string(ck.params.config.vocab_size) +
                                         " does not match vocabulary of " + std::to_string(v.size()));
  }
  return v;
}

LoadedCheckpoint load_existing(const fs::path& path) {
  if (!fs::exists(path)) throw Error(Errc::IoError, "checkpoint not found: " + path.string());
  return load_checkpoint(path);
}

std::vector<Sample> load_existing_dataset(const fs::path& path) {
  if (!fs::exists(path)) throw Error(Errc::IoError, "dataset not found: " + path.string());
  return load_dataset(path);
}

// Judge setup failures are reported separately from other config errors.
struct JudgeSetupError : Error {
  using Error::Error;
};

std::unique_ptr<RemoteJudge> make_remote_judge() {
  RemoteJudgeConfig rc;
  try {
    rc = RemoteJudgeConfig::from_env();
  } catch (const Error& e) {
    throw JudgeSetupError(e.code(), e.what());
  }
  if (rc.url.empty()) throw JudgeSetupError(Errc::ConfigMissing, "judge kind remote requires AD_JUDGE_URL");
  try {
    return std::make_unique<RemoteJudge>(rc);
  } catch (const Error& e) {
    throw JudgeSetupError(e.code(), e.what());
  }
}

}  // namespace

int exit_code_for(const Error& e) noexcept {
  if (dynamic_cast<const JudgeSetupError*>(&e)) return kExitJudgeConfig;
  switch (e.code()) {
    case Errc::IoError:
    case Errc::ParseError:
    case Errc::ShapeMismatch:
      return kExitIo;
    case Errc::Diverged:
      return kExitDiverged;
    case Errc::ConfigMissing:
      return kExitJudgeConfig;
    default:
      return kExitConfig;
  }
}

int guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

fs::path default_train_data(const RunConfig& cfg) { return cfg.paths.data_dir / "train.jsonl"; }
fs::path default_sft_checkpoint(const RunConfig& cfg) { return cfg.paths.checkpoint_dir / "sft.ckpt"; }
fs::path default_rft_checkpoint(const RunConfig& cfg, RewardMode mode) {
  return cfg.paths.checkpoint_dir / ("rft_" + std::string(to_string(mode)) + ".ckpt");
}

int cmd_gen_data(const RunConfig& cfg, const fs::path& out, std::ostream& os, std::ostream& err) {
  return guarded(err, [&] {
    cfg.validate();
    const auto samples = gen_dataset(cfg.generator);
    ensure_parent(out);
    save_dataset(samples, out);
    write_dataset_metadata(out, cfg.generator);
    const auto n_simple = static_cast<std::size_t>(std::count_if(
        samples.begin(), samples.end(), [](const Sample& s) { return s.difficulty == Difficulty::Simple; }));
    os << "wrote " << out.string() << ": simple=" << n_simple << " complex=" << samples.size() - n_simple
       << " checksum=" << file_checksum(out) << '\n';
    return kExitOk;
  });
}

SftPaths default_sft_paths(const RunConfig& cfg) {
  return {default_train_data(cfg), default_sft_checkpoint(cfg), cfg.paths.telemetry_dir / "sft.csv"};
}

int cmd_sft(const RunConfig& cfg, const SftPaths& paths, std::ostream& os, std::ostream& err) {
  return guarded(err, [&] {
    cfg.validate();
    const auto data = load_existing_dataset(paths.data);
    const Vocab vocab = task_vocab(cfg.generator);
    PolicyConfig pc = cfg.policy;
    pc.vocab_size = vocab.size();

    ensure_parent(paths.checkpoint);
    ensure_parent(paths.telemetry);
    DirLock lock(paths.checkpoint.has_parent_path() ? paths.checkpoint.parent_path() : fs::path("."));
    CsvTelemetry csv(paths.telemetry);
    std::optional<double> last_loss;
    TrainHooks hooks;
    hooks.telemetry = [&](const StepStats& s) {
      csv.write(s);
      last_loss = s.sft_loss;
      if (s.step % kProgressEvery == 0) log::info("sft step " + std::to_string(s.step) + " loss " + fixed(s.sft_loss));
    };
    const PolicyParams trained = run_sft(init_params(pc), data, cfg.sft, vocab, hooks);
    save_checkpoint(paths.checkpoint, trained, &vocab);
    os << "sft done: steps=" << trained.version << " final_loss=" << fixed(last_loss)
       << " checkpoint=" << paths.checkpoint.string() << '\n';
    return kExitOk;
  });
}

RftPaths default_rft_paths(const RunConfig& cfg) {
  const std::string mode(to_string(cfg.rft.reward_mode));
  return {default_train_data(cfg), default_sft_checkpoint(cfg), default_rft_checkpoint(cfg, cfg.rft.reward_mode),
          cfg.paths.telemetry_dir / ("rft_" + mode + ".csv")};
}

int cmd_rft(const RunConfig& cfg, const RftPaths& paths, std::ostream& os, std::ostream& err) {
  return guarded(err, [&] {
    cfg.validate();
    std::unique_ptr<RemoteJudge> remote;
    if (cfg.judge_kind == JudgeKind::Remote) remote = make_remote_judge();
    const auto data = load_existing_dataset(paths.data);

    PolicyParams start;
    Vocab vocab = task_vocab(cfg.generator);
    if (paths.init) {
      LoadedCheckpoint ck = load_existing(*paths.init);
      vocab = checkpoint_vocab(ck, cfg);
      start = std::move(ck.params);
    } else {
      PolicyConfig pc = cfg.policy;
      pc.vocab_size = vocab.size();
      start = init_params(pc);
    }

    ensure_parent(paths.checkpoint);
    ensure_parent(paths.telemetry);
    DirLock lock(paths.checkpoint.has_parent_path() ? paths.checkpoint.parent_path() : fs::path("."));
    CsvTelemetry csv(paths.telemetry);
    std::uint64_t remote_n = 0, lexical_n = 0, exact_n = 0;
    TrainHooks hooks;
    hooks.telemetry = [&](const StepStats& s) {
      csv.write(s);
      remote_n += s.remote_verdicts;
      lexical_n += s.lexical_verdicts;
      exact_n += s.exact_verdicts;
      if (s.step % kProgressEvery == 0) {
        log::info("rft step " + std::to_string(s.step) + " reward " + fixed(s.mean_total_reward) + " format " +
                  fixed(s.mean_format_reward) + " kl " + fixed(s.mean_kl));
      }
    };
    const JudgeContext judge{cfg.judge_kind, remote.get()};
    const PolicyParams ref = start;
    const PolicyParams trained = run_rft(std::move(start), ref, data, cfg.rft, vocab, judge, hooks);
    save_checkpoint(paths.checkpoint, trained, &vocab);
    os << "rft done: mode=" << to_string(cfg.rft.reward_mode) << " steps=" << cfg.rft.steps
       << " verdicts remote=" << remote_n << " lexical=" << lexical_n << " exact=" << exact_n
       << " checkpoint=" << paths.checkpoint.string() << '\n';
    return kExitOk;
  });
}

int cmd_eval(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& dataset, const fs::path& report,
             const EvalOptions& opts, std::ostream& os, std::ostream& err) {
  return guarded(err, [&] {
    const LoadedCheckpoint ck = load_existing(checkpoint);
    const Vocab vocab = checkpoint_vocab(ck, cfg);
    const auto data = load_existing_dataset(dataset);
    const EvalReport r = evaluate(ck.params, vocab, data, opts);
    ensure_parent(report);
    write_report(r, report);
    os << "acc_b=" << fixed(r.acc_basic) << " acc_a=" << fixed(r.acc_assumptive)
       << " thk_pct_basic=" << fixed(r.thk_pct_basic) << " ans_pct_assum=" << fixed(r.ans_pct_assum) << '\n';
    return kExitOk;
  });
}

int cmd_report(const fs::path& telemetry_dir, const fs::path& out, std::ostream& os, std::ostream& err) {
  return guarded(err, [&] {
    if (!fs::is_directory(telemetry_dir)) throw Error(Errc::IoError, "no telemetry directory " + telemetry_dir.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(telemetry_dir)) {
      if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<RunCurve> runs;
    for (const auto& f : files) {
      auto stats = read_telemetry(f);
      if (!stats.empty()) runs.push_back({f.stem().string(), std::move(stats)});
    }
    if (runs.empty()) throw Error(Errc::InvalidConfig, "no telemetry rows in " + telemetry_dir.string());

    ensure_parent(out);
    fs::path svg = out;
    svg.replace_extension(".svg");
    for (const auto& [path, text] : {std::pair{out, report_summary_json(runs)}, std::pair{svg, render_reward_svg(runs)}}) {
      std::ofstream f(path, std::ios::binary | std::ios::trunc);
      f << text;
      if (text.back() != '\n') f << '\n';
      if (!f.flush()) throw Error(Errc::IoError, "cannot write " + path.string());
    }
    for (const auto& r : runs) {
      const CurveSummary s = summarize_curve(r.stats, kReportWindow);
      os << r.name << ": steps=" << s.steps << " total " << fixed(s.first_total) << " -> " << fixed(s.last_total)
         << (s.total_rising ? " rising" : "") << ", format " << fixed(s.first_format) << " -> "
         << fixed(s.last_format) << (s.format_rising ? " rising" : "") << '\n';
    }
    os << "wrote " << out.string() << " and " << svg.string() << '\n';
    return kExitOk;
  });
}

}  // namespace adlab::cli

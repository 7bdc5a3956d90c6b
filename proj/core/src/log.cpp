#include "adlab/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>

namespace adlab::log {

namespace {

Level from_env() noexcept {
  const char* raw = std::getenv("ADLAB_LOG_LEVEL");
  if (!raw) return Level::Info;
  const std::string v(raw);
  if (v == "debug") return Level::Debug;
  if (v == "warn") return Level::Warn;
  if (v == "error") return Level::Error;
  if (v == "off") return Level::Off;
  return Level::Info;
}

std::atomic<Level>& current() {
  static std::atomic<Level> level{from_env()};
  return level;
}

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

const char* tag(Level level) {
  switch (level) {
    case Level::Debug: return "debug";
    case Level::Info: return "info";
    case Level::Warn: return "warn";
    case Level::Error: return "error";
    case Level::Off: break;
  }
  return "";
}

}  // namespace

Level threshold() noexcept { return current().load(); }
void set_threshold(Level level) noexcept { current().store(level); }

void write(Level level, std::string_view message) {
  if (level < threshold() || level == Level::Off) return;
  std::lock_guard lock(sink_mutex());
  std::clog << "[adlab " << tag(level) << "] " << message << '\n';
}

}  // namespace adlab::log

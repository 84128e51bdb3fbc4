#include "maml/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>

namespace maml {

namespace {

LogLevel parse_level(const char* env) {
  if (env == nullptr) return LogLevel::kInfo;
  const std::string v(env);
  if (v == "error" || v == "0") return LogLevel::kError;
  if (v == "warn" || v == "1") return LogLevel::kWarn;
  if (v == "debug" || v == "3") return LogLevel::kDebug;
  return LogLevel::kInfo;
}

std::atomic<int>& level_storage() {
  static std::atomic<int> level{static_cast<int>(parse_level(std::getenv("MAML_LOG_LEVEL")))};
  return level;
}

}  // namespace

LogLevel log_level() { return static_cast<LogLevel>(level_storage().load()); }

void set_log_level(LogLevel level) { level_storage().store(static_cast<int>(level)); }

void log_line(LogLevel level, std::string_view message) {
  if (static_cast<int>(level) > level_storage().load()) return;
  static std::mutex mu;
  std::lock_guard lock(mu);
  static constexpr const char* kTags[] = {"error: ", "warning: ", "", "debug: "};
  std::cerr << kTags[static_cast<int>(level)] << message << '\n';
}

}  // namespace maml

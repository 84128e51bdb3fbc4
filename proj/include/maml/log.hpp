#pragma once

#include <string_view>

namespace maml {

enum class LogLevel { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

// Read once from MAML_LOG_LEVEL (error, warn, info, debug or 0-3); defaults
// to info.
LogLevel log_level();
void set_log_level(LogLevel level);

void log_line(LogLevel level, std::string_view message);
inline void log_error(std::string_view m) { log_line(LogLevel::kError, m); }
inline void log_warn(std::string_view m) { log_line(LogLevel::kWarn, m); }
inline void log_info(std::string_view m) { log_line(LogLevel::kInfo, m); }
inline void log_debug(std::string_view m) { log_line(LogLevel::kDebug, m); }

}  // namespace maml

#pragma once

#include <iostream>
#include <sstream>
#include <string_view>

namespace pbgan {

enum class LogLevel { debug = 0, info = 1, warn = 2, error = 3, off = 4 };

inline LogLevel& log_threshold() {
  static LogLevel level = LogLevel::warn;
  return level;
}

template <typename... Args>
void log(LogLevel level, Args&&... args) {
  if (level < log_threshold()) return;
  static constexpr std::string_view tags[] = {"debug", "info", "warn", "error"};
  std::ostringstream os;
  os << "[pbgan " << tags[static_cast<int>(level)] << "] ";
  (os << ... << args);
  std::cerr << os.str() << '\n';
}

template <typename... Args>
void log_info(Args&&... args) {
  log(LogLevel::info, std::forward<Args>(args)...);
}

}  // namespace pbgan

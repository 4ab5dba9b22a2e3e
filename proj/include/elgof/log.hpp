#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <string>
#include <utility>

namespace elgof {

enum class LogLevel { debug, info, warning, error };

namespace detail {

struct LogState {
  std::mutex mutex;
  LogLevel threshold = LogLevel::warning;
  std::function<void(LogLevel, const std::string&)> sink;
};

inline LogState& log_state() {
  static LogState state;
  return state;
}

inline const char* level_name(LogLevel level) {
  switch (level) {
    case LogLevel::debug: return "debug";
    case LogLevel::info: return "info";
    case LogLevel::warning: return "warning";
    case LogLevel::error: return "error";
  }
  return "?";
}

}  // namespace detail

/// Replace the default stderr sink. Pass an empty function to restore it.
inline void set_log_sink(std::function<void(LogLevel, const std::string&)> sink) {
  auto& s = detail::log_state();
  std::lock_guard lock(s.mutex);
  s.sink = std::move(sink);
}

inline void set_log_level(LogLevel threshold) {
  auto& s = detail::log_state();
  std::lock_guard lock(s.mutex);
  s.threshold = threshold;
}

inline void log(LogLevel level, const std::string& message) {
  auto& s = detail::log_state();
  std::lock_guard lock(s.mutex);
  if (level < s.threshold) return;
  if (s.sink) {
    s.sink(level, message);
  } else {
    std::cerr << "elgof " << detail::level_name(level) << ": " << message << '\n';
  }
}

inline void log_warning(const std::string& message) { log(LogLevel::warning, message); }
inline void log_info(const std::string& message) { log(LogLevel::info, message); }

}  // namespace elgof

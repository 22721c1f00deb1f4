#pragma once

#include <iostream>
#include <mutex>
#include <sstream>
#include <string>

namespace mgwave {

enum class LogLevel { quiet = 0, warn = 1, info = 2, debug = 3 };

inline LogLevel& log_level() {
    static LogLevel level = LogLevel::warn;
    return level;
}

inline void log(LogLevel level, const std::string& msg) {
    if (static_cast<int>(level) > static_cast<int>(log_level())) return;
    static std::mutex mu;
    std::lock_guard<std::mutex> lock(mu);
    const char* tag = level == LogLevel::warn ? "warn" : level == LogLevel::info ? "info" : "debug";
    std::clog << "[" << tag << "] " << msg << '\n';
}

} // namespace mgwave

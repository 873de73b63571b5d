#pragma once

// Structured logging. JSON lines follow {ts, level, phase, stage, msg, fields}.

#include <iosfwd>
#include <mutex>
#include <string>
#include <string_view>

#include <json.hpp>

namespace lcsynth {

enum class LogLevel { debug, info, warn, error };
enum class LogFormat { text, json };

std::string_view level_name(LogLevel level);

class Logger {
public:
    Logger();

    void configure(LogFormat format, LogLevel min_level, std::ostream* sink);
    LogFormat format() const noexcept { return format_; }

    /// stage < 0 is emitted as null.
    void log(LogLevel level, std::string_view phase, int stage, std::string_view msg,
             const nlohmann::json& fields = nlohmann::json::object());

private:
    std::mutex mu_;
    LogFormat format_ = LogFormat::text;
    LogLevel min_level_ = LogLevel::warn;
    std::ostream* sink_;
};

/// Process-wide logger; silent (warn and above) until the CLI configures it.
Logger& logger();

inline void log_info(std::string_view phase, int stage, std::string_view msg,
                     const nlohmann::json& fields = nlohmann::json::object()) {
    logger().log(LogLevel::info, phase, stage, msg, fields);
}

inline void log_warn(std::string_view phase, int stage, std::string_view msg,
                     const nlohmann::json& fields = nlohmann::json::object()) {
    logger().log(LogLevel::warn, phase, stage, msg, fields);
}

/// ISO-8601 UTC with milliseconds.
std::string utc_timestamp();

}  // namespace lcsynth

#include "lcsynth/log.hpp"

#include <chrono>
#include <ctime>
#include <iostream>

namespace lcsynth {

std::string_view level_name(LogLevel level) {
    switch (level) {
        case LogLevel::debug: return "debug";
        case LogLevel::info: return "info";
        case LogLevel::warn: return "warn";
        case LogLevel::error: return "error";
    }
    return "info";
}

std::string utc_timestamp() {
    using namespace std::chrono;
    const auto now = system_clock::now();
    const std::time_t secs = system_clock::to_time_t(now);
    const auto ms = duration_cast<milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[40];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%S", &tm);
    char out[48];
    std::snprintf(out, sizeof(out), "%s.%03dZ", buf, static_cast<int>(ms));
    return out;
}

Logger::Logger() : sink_(&std::cerr) {}

void Logger::configure(LogFormat format, LogLevel min_level, std::ostream* sink) {
    std::lock_guard<std::mutex> lock(mu_);
    format_ = format;
    min_level_ = min_level;
    sink_ = sink;
}

void Logger::log(LogLevel level, std::string_view phase, int stage, std::string_view msg,
                 const nlohmann::json& fields) {
    std::lock_guard<std::mutex> lock(mu_);
    if (level < min_level_ || !sink_) return;
    if (format_ == LogFormat::json) {
        nlohmann::json rec;
        rec["ts"] = utc_timestamp();
        rec["level"] = level_name(level);
        rec["phase"] = phase;
        rec["stage"] = stage < 0 ? nlohmann::json(nullptr) : nlohmann::json(stage);
        rec["msg"] = msg;
        rec["fields"] = fields;
        *sink_ << rec.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
    } else {
        *sink_ << utc_timestamp() << ' ' << level_name(level) << ' ' << phase;
        if (stage >= 0) *sink_ << " stage=" << stage;
        *sink_ << ' ' << msg;
        if (!fields.empty()) *sink_ << ' ' << fields.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
        *sink_ << '\n';
    }
    sink_->flush();
}

Logger& logger() {
    static Logger instance;
    return instance;
}

}  // namespace lcsynth

#pragma once

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>

namespace rrchan {

/// Process-wide channel mode. Read once from the environment before the
/// first channel operation and immutable afterwards.
enum class rr_mode : std::uint8_t { noop, record, replay };

/// What to do when a replayed execution diverges from its log.
enum class desync_policy : std::uint8_t { error_out, keep_going };

inline const char* rr_mode_name(rr_mode m) {
    switch (m) {
        case rr_mode::noop: return "noop";
        case rr_mode::record: return "record";
        case rr_mode::replay: return "replay";
    }
    return "?";
}

struct config {
    rr_mode mode = rr_mode::noop;
    desync_policy policy = desync_policy::keep_going;
    std::string record_file = "rr.log";
    std::chrono::milliseconds desync_timeout{1000};
    bool trace_ops = false;  // debug: emit one rr-op: line per replay decision
};

// Environment variables (all optional):
//   RR_CHANNEL_MODE       noop | record | replay          (default noop)
//   RR_RECORD_FILE        log path                        (default rr.log)
//   RR_DESYNC_MODE        error | keep_going              (default keep_going)
//   RR_DESYNC_TIMEOUT_MS  positive integer                (default 1000)
//   RR_OP_TRACE           1 to trace replay decisions
inline config load_env_config() {
    config cfg;
    if (const char* v = std::getenv("RR_CHANNEL_MODE")) {
        std::string s = v;
        if (s == "noop") cfg.mode = rr_mode::noop;
        else if (s == "record") cfg.mode = rr_mode::record;
        else if (s == "replay") cfg.mode = rr_mode::replay;
        else std::fprintf(stderr, "rr-warning: unknown RR_CHANNEL_MODE '%s', using noop\n", v);
    }
    if (const char* v = std::getenv("RR_RECORD_FILE")) cfg.record_file = v;
    if (const char* v = std::getenv("RR_DESYNC_MODE")) {
        std::string s = v;
        if (s == "error") cfg.policy = desync_policy::error_out;
        else if (s == "keep_going") cfg.policy = desync_policy::keep_going;
        else std::fprintf(stderr, "rr-warning: unknown RR_DESYNC_MODE '%s', using keep_going\n", v);
    }
    if (const char* v = std::getenv("RR_DESYNC_TIMEOUT_MS")) {
        char* end = nullptr;
        long ms = std::strtol(v, &end, 10);
        if (end && *end == '\0' && ms > 0)
            cfg.desync_timeout = std::chrono::milliseconds(ms);
        else
            std::fprintf(stderr, "rr-warning: invalid RR_DESYNC_TIMEOUT_MS '%s', using %lld\n", v,
                         static_cast<long long>(cfg.desync_timeout.count()));
    }
    if (const char* v = std::getenv("RR_OP_TRACE")) cfg.trace_ops = (std::string(v) == "1");
    return cfg;
}

// Exit statuses used when the library must terminate the process itself.
inline constexpr int exit_code_desync = 76;    // divergence under error_out policy
inline constexpr int exit_code_bad_log = 74;   // replay log missing or unreadable

}  // namespace rrchan

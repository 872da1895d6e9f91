#pragma once

#include <cstdlib>
#include <memory>
#include <string>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

namespace cmaf {

/// Library logger on stderr. Level from CMAF_LOG_LEVEL (trace, debug, info,
/// warn, error, off); default warn.
inline spdlog::logger& log() {
    static std::shared_ptr<spdlog::logger> logger = [] {
        auto l = spdlog::stderr_color_mt("cmaf");
        const char* env = std::getenv("CMAF_LOG_LEVEL");
        l->set_level(env ? spdlog::level::from_str(env) : spdlog::level::warn);
        return l;
    }();
    return *logger;
}

} // namespace cmaf

#include "rz/common.hpp"

#include <cstdlib>
#include <string>

#include <spdlog/sinks/stdout_sinks.h>

#include "rz/log.hpp"

namespace rz {

std::size_t thread_count() {
    if (const char* env = std::getenv("RZ_THREADS"); env != nullptr && *env != '\0') {
        try {
            const long parsed = std::stol(env);
            if (parsed >= 1) {
                return static_cast<std::size_t>(parsed);
            }
        } catch (const std::exception&) {
        }
    }
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

std::shared_ptr<spdlog::logger> log() {
    static const std::shared_ptr<spdlog::logger> instance = [] {
        auto logger = spdlog::stderr_logger_mt("rz");
        logger->set_pattern("level=%l %v");
        return logger;
    }();
    return instance;
}

}  // namespace rz

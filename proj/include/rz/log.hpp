#pragma once

#include <memory>

#include <spdlog/spdlog.h>

namespace rz {

/// Shared stderr logger. Messages are written as space separated key=value
/// pairs, e.g. `stage=fpca event=cap_applied k=3`.
std::shared_ptr<spdlog::logger> log();

}  // namespace rz

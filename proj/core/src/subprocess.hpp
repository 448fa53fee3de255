#pragma once

#include <chrono>
#include <string>
#include <vector>

namespace leaflet::detail {

struct ProcessResult {
    int exit_code = -1;
    bool timed_out = false;
    std::string out;
    std::string err;
};

/// Spawns `argv[0]` (searched on PATH) and captures stdout and stderr.
/// The child is killed once `timeout` elapses. Throws EngineNotFound when the
/// executable cannot be started.
ProcessResult run_process(const std::vector<std::string>& argv, std::chrono::milliseconds timeout);

}  // namespace leaflet::detail

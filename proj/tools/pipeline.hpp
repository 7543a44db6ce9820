#pragma once

#include <string>

namespace cli {

// Runs the experiment pipeline described by the JSON config at config_path.
// output_override, when non-empty, replaces the config's output directory;
// jobs_override > 0 replaces the config's worker count (the GRIDPURE_JOBS
// environment variable wins over both). Returns a process exit code.
int run_pipeline(const std::string& config_path, const std::string& output_override, int jobs_override);

}  // namespace cli

#pragma once

#include <cstdio>
#include <filesystem>
#include <string>

namespace knowdit::detail {

struct CommandResult {
    int exit_code = -1;
    std::string output;  // stdout and stderr interleaved
};

// Runs a shell command in the given directory, capturing both streams.
inline CommandResult run_command(const std::filesystem::path& cwd, const std::string& command) {
    std::string full = "cd '" + cwd.string() + "' && " + command + " 2>&1";
    CommandResult result;
    FILE* pipe = popen(full.c_str(), "r");
    if (!pipe) return result;
    char buf[4096];
    std::size_t n;
    while ((n = fread(buf, 1, sizeof(buf), pipe)) > 0) {
        result.output.append(buf, n);
    }
    int status = pclose(pipe);
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return result;
}

}  // namespace knowdit::detail

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "knowdit/llm.hpp"

namespace knowdit {

// Runtime configuration. Precedence: flags > env vars > config file >
// defaults. The mock flags are independent; provider and executor can be
// mocked separately.
struct Config {
    std::string reasoning_model = "gpt-5.1";
    std::string synthesis_model = "gpt-5-mini";
    double reasoning_input_cost = 1.25e-6;   // USD per token
    double reasoning_output_cost = 1.0e-5;
    double synthesis_input_cost = 2.5e-7;
    double synthesis_output_cost = 2.0e-6;
    std::size_t chunk_units = 32000;
    int fuzz_timeout_seconds = 300;
    int max_repair_attempts = 5;
    int regeneration_cap = 2;
    double budget_default_usd = 100.0;
    std::filesystem::path workspace_root = "knowdit-workspace";
    std::string api_base = "https://api.openai.com";
    std::string api_key;
    std::string mock_provider_script;   // path; empty = live provider
    std::string mock_executor_store;    // path; empty = real toolchain
    std::uint64_t seed = 0;

    // Throws PreconditionViolation when a numeric field is non-positive.
    void validate() const;

    std::map<Role, ModelRole> model_roles() const;
};

// Reads a flat key = value document ('#' comments, blank lines allowed).
// Unknown keys are rejected.
Config load_config_file(const std::filesystem::path& path, Config base);

// Applies KNOWDIT_* environment variables on top of the base config.
Config apply_env(Config base);

// Full CLI entry point. Returns 0 on success, 1 on user error, 2 on
// internal error.
int run_cli(const std::vector<std::string>& args);

}  // namespace knowdit

#include "knowdit/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "knowdit/errors.hpp"

namespace knowdit {

namespace {

std::string trim(const std::string& s) {
    std::size_t begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return {};
    std::size_t end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        double parsed = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return parsed;
    } catch (const std::exception&) {
        throw Error("config key " + key + ": expected a number, got \"" + value + "\"");
    }
}

long parse_long(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        long parsed = std::stol(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return parsed;
    } catch (const std::exception&) {
        throw Error("config key " + key + ": expected an integer, got \"" + value + "\"");
    }
}

void apply_key(Config& config, const std::string& key, const std::string& value) {
    if (key == "reasoning_model") {
        config.reasoning_model = value;
    } else if (key == "synthesis_model") {
        config.synthesis_model = value;
    } else if (key == "reasoning_input_cost") {
        config.reasoning_input_cost = parse_double(key, value);
    } else if (key == "reasoning_output_cost") {
        config.reasoning_output_cost = parse_double(key, value);
    } else if (key == "synthesis_input_cost") {
        config.synthesis_input_cost = parse_double(key, value);
    } else if (key == "synthesis_output_cost") {
        config.synthesis_output_cost = parse_double(key, value);
    } else if (key == "chunk_units") {
        config.chunk_units = static_cast<std::size_t>(parse_long(key, value));
    } else if (key == "fuzz_timeout_seconds") {
        config.fuzz_timeout_seconds = static_cast<int>(parse_long(key, value));
    } else if (key == "max_repair_attempts") {
        config.max_repair_attempts = static_cast<int>(parse_long(key, value));
    } else if (key == "regeneration_cap") {
        config.regeneration_cap = static_cast<int>(parse_long(key, value));
    } else if (key == "budget_usd") {
        config.budget_default_usd = parse_double(key, value);
    } else if (key == "workspace_root") {
        config.workspace_root = value;
    } else if (key == "api_base") {
        config.api_base = value;
    } else if (key == "api_key") {
        config.api_key = value;
    } else if (key == "mock_provider_script") {
        config.mock_provider_script = value;
    } else if (key == "mock_executor_store") {
        config.mock_executor_store = value;
    } else if (key == "seed") {
        config.seed = static_cast<std::uint64_t>(parse_long(key, value));
    } else {
        throw Error("unknown config key: " + key);
    }
}

}  // namespace

void Config::validate() const {
    auto require_positive = [](const char* name, double value) {
        if (value <= 0) {
            throw PreconditionViolation(std::string(name) + " must be positive");
        }
    };
    require_positive("reasoning_input_cost", reasoning_input_cost);
    require_positive("reasoning_output_cost", reasoning_output_cost);
    require_positive("synthesis_input_cost", synthesis_input_cost);
    require_positive("synthesis_output_cost", synthesis_output_cost);
    require_positive("chunk_units", static_cast<double>(chunk_units));
    require_positive("fuzz_timeout_seconds", fuzz_timeout_seconds);
    require_positive("max_repair_attempts", max_repair_attempts);
    if (regeneration_cap < 0) {
        throw PreconditionViolation("regeneration_cap must be >= 0");
    }
    require_positive("budget_usd", budget_default_usd);
}

std::map<Role, ModelRole> Config::model_roles() const {
    return {
        {Role::Reasoning,
         ModelRole{Role::Reasoning, reasoning_model, reasoning_input_cost,
                   reasoning_output_cost}},
        {Role::Synthesis,
         ModelRole{Role::Synthesis, synthesis_model, synthesis_input_cost,
                   synthesis_output_cost}},
    };
}

Config load_config_file(const std::filesystem::path& path, Config base) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config file: " + path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        std::size_t eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw Error("config file " + path.string() + " line " + std::to_string(lineno) +
                        ": expected key = value");
        }
        apply_key(base, trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
    }
    return base;
}

Config apply_env(Config base) {
    auto get = [](const char* name) -> std::optional<std::string> {
        const char* value = std::getenv(name);
        if (value == nullptr) return std::nullopt;
        return std::string(value);
    };
    if (auto v = get("KNOWDIT_API_KEY")) base.api_key = *v;
    if (auto v = get("KNOWDIT_BASE_URL")) base.api_base = *v;
    if (auto v = get("KNOWDIT_WORKSPACE")) base.workspace_root = *v;
    if (auto v = get("KNOWDIT_REASONING_MODEL")) base.reasoning_model = *v;
    if (auto v = get("KNOWDIT_SYNTHESIS_MODEL")) base.synthesis_model = *v;
    if (auto v = get("KNOWDIT_BUDGET")) base.budget_default_usd = parse_double("KNOWDIT_BUDGET", *v);
    if (auto v = get("KNOWDIT_MOCK_SCRIPT")) base.mock_provider_script = *v;
    if (auto v = get("KNOWDIT_MOCK_EXECUTOR_STORE")) base.mock_executor_store = *v;
    if (auto v = get("KNOWDIT_SEED")) {
        base.seed = static_cast<std::uint64_t>(parse_long("KNOWDIT_SEED", *v));
    }
    return base;
}

}  // namespace knowdit

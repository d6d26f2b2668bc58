#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "knowdit/harness.hpp"

namespace knowdit {

struct FileCoverage {
    std::set<int> covered_lines;
    int instrumentable_lines = 0;  // covered is always a subset
};

struct CoverageMap {
    std::map<std::string, FileCoverage> files;  // path -> lines
    std::string semantic_tag;                   // attribution

    double ratio() const;  // in [0, 1]; 0 for an empty map

    nlohmann::json to_json() const;
    static CoverageMap from_json(const nlohmann::json& doc);
};

struct CallRecord {
    std::string caller;
    std::string callee;
    std::string function;
    std::string arguments;
    std::string outcome;
};

struct StateChange {
    std::string contract;
    std::string variable;
    std::string before;
    std::string after;
};

struct Violation {
    std::string oracle_id;  // matches an oracle tag in the harness
    std::vector<CallRecord> trace;
    std::vector<StateChange> state_diff;

    nlohmann::json to_json() const;
    static Violation from_json(const nlohmann::json& doc);
};

struct FuzzOutcome {
    CoverageMap coverage;  // always present on a completed run
    std::optional<Violation> violation;
    double wall_time_seconds = 0.0;
    std::string run_id;

    nlohmann::json to_json() const;
    static FuzzOutcome from_json(const nlohmann::json& doc);
};

// Proportional-share vault accounting: when total assets are positive,
// minted shares are floor(deposit * total_shares / total_assets); the
// bootstrap deposit mints shares 1:1, which is the vulnerable seed behavior.
struct ProportionalShareFixture {
    std::int64_t total_shares = 0;  // S
    std::int64_t total_assets = 0;  // A

    std::int64_t shares_for_deposit(std::int64_t amount) const;
    void deposit(std::int64_t amount, std::int64_t& minted_out);
    void donate(std::int64_t amount);  // direct transfer, no shares minted
};

// Parses lcov tracefile text (SF/DA/LF/LH records) into exact per-file line
// sets. Throws ParseError with the offending line number.
CoverageMap parse_coverage(const std::string& lcov_text);

// Unions covered sets; ratios are monotone non-decreasing. Throws
// AttributionMismatch when the semantic tags differ.
CoverageMap merge_coverage(const CoverageMap& old_map, const CoverageMap& new_map);

class FuzzExecutor {
public:
    virtual ~FuzzExecutor() = default;
    // Runs the compiled harness for the timeout, harvesting coverage and, on
    // an oracle failure, the execution trace and state changes.
    virtual FuzzOutcome run(const CompiledHarness& compiled, int timeout_seconds,
                            std::uint64_t seed) = 0;
};

// Drives `forge test` (invariant mode) and `forge coverage` as external
// processes in the harness workspace.
class ForgeExecutor : public FuzzExecutor {
public:
    FuzzOutcome run(const CompiledHarness& compiled, int timeout_seconds,
                    std::uint64_t seed) override;
};

// Record/replay store keyed by harness content hash; identical run ids yield
// byte-identical outcomes, letting the full loop run without the toolchain.
class ReplayExecutor : public FuzzExecutor {
public:
    explicit ReplayExecutor(const std::filesystem::path& store_path);
    FuzzOutcome run(const CompiledHarness& compiled, int timeout_seconds,
                    std::uint64_t seed) override;

    static void record(const std::filesystem::path& store_path, const std::string& harness_hash,
                       const FuzzOutcome& outcome);

private:
    std::map<std::string, nlohmann::json> recorded_;  // hash -> outcome
};

}  // namespace knowdit

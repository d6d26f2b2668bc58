#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "knowdit/audit_spec.hpp"
#include "knowdit/corpus.hpp"
#include "knowdit/llm.hpp"

namespace knowdit {

struct HarnessFile {
    std::string path;  // relative, placed under the workspace test/ directory
    std::string content;
};

// Generated Foundry test source: a setUp that deploys and funds, one
// require-statement oracle per pre/post-vuln invariant (tagged
// "// oracle: <invariant-id>"), and thin handler wrappers.
struct HarnessSource {
    std::vector<HarnessFile> files;
    std::string entry_contract;
    std::vector<std::string> handler_names;

    std::string combined_text() const;
    std::string content_hash() const;  // keys the record/replay executor
};

struct RepairAttempt {
    int attempt = 0;
    std::string diagnostics;
    std::string patch_summary;
};

struct CompileResult {
    bool ok = false;
    std::string diagnostics;
    std::string artifact_ref;
};

class CompilerToolchain {
public:
    virtual ~CompilerToolchain() = default;
    virtual CompileResult compile(const std::filesystem::path& workspace) = 0;
};

// Runs `forge build` in the workspace and captures its streams.
class ForgeToolchain : public CompilerToolchain {
public:
    CompileResult compile(const std::filesystem::path& workspace) override;
    static bool available();
};

// Scripted results in call order; the last entry repeats.
class ScriptedToolchain : public CompilerToolchain {
public:
    explicit ScriptedToolchain(std::vector<CompileResult> results)
        : results_(std::move(results)) {}
    CompileResult compile(const std::filesystem::path& workspace) override;
    std::size_t calls() const { return calls_; }

private:
    std::vector<CompileResult> results_;
    std::size_t calls_ = 0;
};

struct CompiledHarness {
    std::filesystem::path workspace;
    std::string artifact_ref;
    HarnessSource source;
};

struct Blocked {
    int attempts = 0;
};

using CompileOutcome = std::variant<CompiledHarness, Blocked>;

// Mechanical text-scan checks: setUp present, oracle tags in 1:1
// correspondence with the pre/post-vuln invariants, at least one handler.
// Violations returned as data.
std::vector<std::string> structural_check(const HarnessSource& harness,
                                          const AuditSpecification& spec);

// Prompts the Synthesis role, enforces the structural invariants with one
// guided retry, then throws StructuralCheckFailed.
HarnessSource synthesize_harness(Gateway& gateway, const BudgetGuard& guard,
                                 const AuditSpecification& spec, const ProjectCorpus& corpus);

// Writes an isolated Foundry workspace overlaying the project: foundry.toml,
// project sources under src/, harness files under test/. Never mutates the
// project tree.
void write_workspace(const std::filesystem::path& dir, const ProjectCorpus& corpus,
                     const HarnessSource& harness);

// Compile loop: on failure, feed the full diagnostics to the repair prompt
// and retry with the patched harness, reporting each failed attempt. Gives
// up after max_attempts consecutive failures.
CompileOutcome compile_and_repair(Gateway& gateway, const BudgetGuard& guard,
                                  CompilerToolchain& toolchain,
                                  const std::filesystem::path& workspace,
                                  const ProjectCorpus& corpus, HarnessSource harness,
                                  int max_attempts,
                                  const std::function<void(const RepairAttempt&)>& on_failure);

}  // namespace knowdit

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "knowdit/audit_spec.hpp"
#include "knowdit/fuzz_exec.hpp"
#include "knowdit/graph.hpp"
#include "knowdit/harness.hpp"
#include "knowdit/kg_builder.hpp"
#include "knowdit/llm.hpp"

namespace knowdit {

// One unit of audit work: a project-relevant DeFi semantic and a
// vulnerability pattern it may introduce.
struct SemanticVulnPair {
    std::string id;
    std::string semantic;  // node id in the graph
    std::string pattern;   // reachable from the semantic via MayIntroduce
    std::string rationale;
};

enum class VerdictKind {
    TrueFinding,
    ExpectedBehavior,
    ProblematicSpecOrHarness,
    OutOfScope,
};

std::string_view to_string(VerdictKind k);
std::optional<VerdictKind> verdict_kind_from_string(std::string_view name);

struct Verdict {
    VerdictKind kind = VerdictKind::ProblematicSpecOrHarness;
    std::string reasoning;
    std::string title;     // for TrueFinding reports
    Severity severity = Severity::Medium;  // advisory LLM estimate
};

enum class MemoryEntryKind {
    CoverageRecord,
    ExecutionFailure,
    ReflectionFeedback,
    SpecAttempt,
};

std::string_view to_string(MemoryEntryKind k);

struct MemoryEntry {
    MemoryEntryKind kind = MemoryEntryKind::CoverageRecord;
    std::string ref_id;  // semantic id or pair id
    nlohmann::json payload;
};

// Shared append-only log of coverage, failures, and reflection feedback.
// Entries are totally ordered and never mutated; counters are derived from
// the entries themselves.
class WorkingMemory {
public:
    void record_coverage(const std::string& semantic_id, const CoverageMap& coverage);
    void record_failure(const std::string& pair_id, nlohmann::json detail);
    void record_reflection(const std::string& pair_id, VerdictKind kind,
                           const std::string& reasoning);
    void record_spec_attempt(const std::string& pair_id, int version);

    const std::vector<MemoryEntry>& entries() const { return entries_; }
    std::size_t spec_attempts(const std::string& pair_id) const;

    // Union of all coverage recorded for the semantic; absent = empty map.
    CoverageMap cumulative_coverage(const std::string& semantic_id) const;
    double coverage_ratio(const std::string& semantic_id) const;
    std::vector<std::string> reflection_feedback(const std::string& pair_id) const;

    void save(const std::filesystem::path& path) const;  // JSON lines

private:
    std::vector<MemoryEntry> entries_;
};

struct ConfirmedFinding {
    std::string title;
    SemanticVulnPair pair;
    AuditSpecification specification;
    Violation violation;
    Severity severity = Severity::Medium;
    std::string verdict_reasoning;
};

struct AuditReportOut {
    std::string project_name;
    std::vector<ConfirmedFinding> findings;  // every entry carries a TrueFinding verdict
    double ledger_total_usd = 0.0;
    std::size_t ledger_entries = 0;
    nlohmann::json coverage_summary;  // semantic id -> cumulative ratio

    nlohmann::json to_json() const;
    std::string to_markdown() const;
};

struct OrchestratorConfig {
    double budget_usd = 100.0;
    int fuzz_timeout_seconds = 300;
    int max_repair_attempts = 5;
    int regeneration_cap = 2;  // regenerations beyond the initial spec
    std::uint64_t seed = 0;
    std::string general_rules;  // bundled scope-review criteria text
    std::filesystem::path workspace_root;
};

// The agentic audit loop: map knowledge, schedule pairs, then per pair run
// generate -> synthesize -> compile-repair -> fuzz -> reflect, with
// memory-driven regeneration and a pre-call budget ceiling.
class Orchestrator {
public:
    Orchestrator(Gateway& gateway, KnowledgeGraph& graph, CompilerToolchain& toolchain,
                 FuzzExecutor& executor, OrchestratorConfig config);

    // Classifies the project, extracts and matches its semantics against the
    // business-scoped graph subset, and assembles pairs from the matched
    // semantics' linked patterns. Failures yield an empty list with a logged
    // cause.
    std::vector<SemanticVulnPair> map_knowledge(const ProjectCorpus& corpus);

    // Ascending by the semantic's cumulative coverage ratio (absent = 0),
    // ties in insertion order. Stable.
    static std::vector<SemanticVulnPair> schedule_pairs(std::vector<SemanticVulnPair> pairs,
                                                        const WorkingMemory& memory);

    // Compares trace and state diff against the specification and classifies
    // the violation; the verdict and reasoning are appended to memory.
    // MalformedOutput degrades to a conservative ProblematicSpecOrHarness.
    Verdict reflect_finding(const Violation& violation, const AuditSpecification& spec,
                            const std::string& scope_notes, WorkingMemory& memory);

    AuditReportOut run_audit(const ProjectCorpus& corpus);

    // Adds the confirmed finding to the graph: finding node + Has edge from
    // the project + ContributesTo from the pair's pattern + Involves edges
    // from the pattern's attack types. All-or-nothing; duplicate ingest of
    // the same finding fingerprint is a no-op.
    ChangeSummary ingest_finding(const ConfirmedFinding& finding, VerdictKind verdict,
                                 const std::string& project_id);

    WorkingMemory& memory() { return memory_; }
    const WorkingMemory& memory() const { return memory_; }
    BudgetGuard budget_guard() const;

private:
    Gateway& gateway_;
    KnowledgeGraph& graph_;
    CompilerToolchain& toolchain_;
    FuzzExecutor& executor_;
    OrchestratorConfig config_;
    WorkingMemory memory_;
    KgBuilder builder_;
};

}  // namespace knowdit

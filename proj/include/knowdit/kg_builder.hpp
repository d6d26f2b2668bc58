#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "knowdit/corpus.hpp"
#include "knowdit/graph.hpp"
#include "knowdit/llm.hpp"

namespace knowdit {

// One extracted semantic or pattern candidate. A candidate names at most one
// merge target; multi-way merges happen across successive projects.
struct Candidate {
    std::string title;
    std::string description;
    std::string reasoning;
    std::optional<std::string> merge_target;  // existing node id
};

using CandidateSemantic = Candidate;
using CandidatePattern = Candidate;

struct ChangeSummary {
    std::vector<std::string> added;   // node ids created
    std::vector<std::string> merged;  // surviving node ids updated
};

// Derived purely from graph edges for one project and its report.
struct ProjectReportPair {
    std::string project_id;
    std::vector<std::string> semantics;  // Contains targets, duplicate-free
    std::vector<std::string> patterns;   // via the findings' ContributesTo edges
};

struct LinkResult {
    std::vector<std::string> edge_ids;  // MayIntroduce edges added
    std::size_t dropped = 0;            // proposals outside D x V
};

struct ManifestEntry {
    std::filesystem::path project_dir;
    std::filesystem::path findings_file;
};

// Build manifest: JSON list of {project_dir, findings_file}, paths relative
// to the manifest's directory.
std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path);

// Three-stage extraction pipeline: semantics extraction and abstraction,
// pattern extraction and summarization, then causal linking per
// project-report pair.
class KgBuilder {
public:
    struct Options {
        std::size_t max_chunk_units = 32000;
        std::size_t prior_cap = 50;  // prior-knowledge list bound, most recent first
    };

    KgBuilder(Gateway& gateway, KnowledgeGraph& graph, BudgetGuard guard);
    KgBuilder(Gateway& gateway, KnowledgeGraph& graph, BudgetGuard guard, Options options);

    std::set<BusinessType> classify_business_types(const std::vector<Chunk>& chunks);
    std::set<AttackType> classify_attack_types(const ReportFinding& finding);

    std::vector<CandidateSemantic> extract_semantics(
        const std::vector<Chunk>& chunks, const std::vector<const DefiSemanticNode*>& prior);
    std::vector<CandidatePattern> extract_patterns(
        const ReportFinding& finding, const std::vector<const VulnerabilityPatternNode*>& prior);

    ChangeSummary apply_semantic_candidates(const std::string& project_id,
                                            const std::set<BusinessType>& business_types,
                                            const std::vector<CandidateSemantic>& candidates);
    ChangeSummary apply_pattern_candidates(const std::string& finding_id,
                                           const std::set<AttackType>& attack_types,
                                           const std::vector<CandidatePattern>& candidates);

    LinkResult link_pair(const ProjectReportPair& pair);

    // Runs the full pipeline over the manifest entries in order. Per-project
    // failures are logged and the project skipped; the graph stays valid.
    void build_graph(const std::vector<ManifestEntry>& manifest);

    // Business-scoped prior list, most recently merged first, capped.
    std::vector<const DefiSemanticNode*> prior_semantics(
        const std::set<BusinessType>& business_types) const;
    // Attack-scoped prior list over Poses edges, same ordering and cap.
    std::vector<const VulnerabilityPatternNode*> prior_patterns(
        const std::set<AttackType>& attack_types) const;

    // Assembles D and V for one project from Contains / Has / ContributesTo.
    ProjectReportPair collect_pair(const std::string& project_id) const;

private:
    Gateway& gateway_;
    KnowledgeGraph& graph_;
    BudgetGuard guard_;
    Options options_;
};

// Rendered category lists (definition + one in-context example each) for the
// classification and extraction prompts.
std::string business_type_catalog();
std::string attack_type_catalog();

}  // namespace knowdit

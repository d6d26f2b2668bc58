#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "knowdit/taxonomy.hpp"

namespace knowdit {

struct SolidityProjectNode {
    std::string id;
    std::string name;
    std::string source_ref;
};

struct DefiSemanticNode {
    std::string id;
    std::string title;
    std::string description;
    std::vector<std::string> merged_from;  // candidate fingerprints, >= 1
};

struct VulnerabilityPatternNode {
    std::string id;
    std::string title;
    std::string description;
    std::vector<std::string> merged_from;
};

struct AuditFindingNode {
    std::string id;
    std::string title;
    Severity severity = Severity::Medium;
    std::string body;
};

enum class EdgeKind {
    BelongsTo,      // Project -> BusinessType
    Contains,       // Project -> Semantic
    Underlies,      // Semantic -> BusinessType
    ContributesTo,  // Pattern -> Finding
    Poses,          // Pattern -> AttackType
    Involves,       // Finding -> AttackType
    Has,            // Project -> Finding (one-to-many from project side)
    MayIntroduce,   // Semantic -> Pattern
};

std::string_view to_string(EdgeKind k);
std::optional<EdgeKind> edge_kind_from_string(std::string_view name);

struct Edge {
    std::string id;
    EdgeKind kind = EdgeKind::BelongsTo;
    std::string from;
    std::string to;
    std::string rationale;
};

// Normalized (lowercased, whitespace-collapsed) title+description hash.
// Used only for exact-duplicate rejection; semantic dedup is LLM-driven.
std::string content_fingerprint(std::string_view title, std::string_view description);

// The bipartite auditing knowledge store. The DeFi side holds projects,
// business types, and semantics; the vulnerability side holds findings,
// attack types, and patterns. Cross-links are restricted to Has and
// MayIntroduce. Single writer, multiple readers; the orchestrator
// serializes mutation.
class KnowledgeGraph {
public:
    static constexpr std::string_view kFormatVersion = "1";

    // Insertion. Semantics, patterns, and findings are fingerprint-deduped:
    // inserting an exact duplicate returns the existing id and leaves the
    // graph unchanged.
    std::string add_project(std::string name, std::string source_ref);
    std::string add_semantic(std::string title, std::string description);
    std::string add_pattern(std::string title, std::string description);
    std::string add_finding(std::string title, Severity severity, std::string body);

    // Stores an edge after checking the endpoint-kind table. A duplicate
    // (kind, from, to) triple is a no-op returning the existing edge id.
    // Throws SchemaViolation on kind mismatch or a second Has edge into the
    // same finding.
    std::string add_edge(EdgeKind kind, const std::string& from, const std::string& to,
                         std::string rationale = {});

    // Replaces the surviving node's description with the synthesized text and
    // unions merged_from with the candidate's fingerprint. All edges of the
    // surviving node are preserved; ids are stable across merges. Returns
    // existing_id. Throws KindMismatch if existing_id is not a semantic.
    std::string merge_semantics(const std::string& existing_id,
                                const std::string& candidate_title,
                                const std::string& candidate_description,
                                const std::string& synthesized_description);
    std::string merge_patterns(const std::string& existing_id,
                               const std::string& candidate_title,
                               const std::string& candidate_description,
                               const std::string& synthesized_description);

    // All semantics with an Underlies edge into any of the given business
    // types, deduplicated, ordered by id.
    std::vector<const DefiSemanticNode*> query_semantics_by_business(
        const std::set<BusinessType>& business_types) const;

    // Targets of MayIntroduce edges leaving semantic_id, with the edge
    // rationale, ordered by pattern id. Throws NotFound for an unknown id.
    std::vector<std::pair<const VulnerabilityPatternNode*, std::string>> linked_patterns(
        const std::string& semantic_id) const;

    const SolidityProjectNode* find_project(const std::string& id) const;
    const DefiSemanticNode* find_semantic(const std::string& id) const;
    const VulnerabilityPatternNode* find_pattern(const std::string& id) const;
    const AuditFindingNode* find_finding(const std::string& id) const;
    std::optional<std::string> id_for_fingerprint(const std::string& fingerprint) const;

    const std::map<std::string, SolidityProjectNode>& projects() const { return projects_; }
    const std::map<std::string, DefiSemanticNode>& semantics() const { return semantics_; }
    const std::map<std::string, VulnerabilityPatternNode>& patterns() const { return patterns_; }
    const std::map<std::string, AuditFindingNode>& findings() const { return findings_; }
    const std::vector<Edge>& edges() const { return edges_; }
    std::size_t edge_count(EdgeKind kind) const;

    // Most recently inserted or merged first, capped. Feeds the bounded
    // prior-knowledge lists in the extraction prompts.
    std::vector<const DefiSemanticNode*> recent_semantics(std::size_t cap) const;
    std::vector<const VulnerabilityPatternNode*> recent_patterns(std::size_t cap) const;

    // Full schema re-check; returns human-readable violations (empty = ok).
    std::vector<std::string> validate() const;

    // Canonical JSON persistence. Repeated saves of an unchanged graph are
    // byte-identical. load(save(g)) is structurally equal to g.
    std::string to_json_string() const;
    static KnowledgeGraph from_json_string(const std::string& text);
    void save(const std::filesystem::path& path) const;
    static KnowledgeGraph load(const std::filesystem::path& path);

    bool structurally_equal(const KnowledgeGraph& other) const;

private:
    std::string next_id(const char* prefix, std::uint64_t& counter);
    void check_endpoints(EdgeKind kind, const std::string& from, const std::string& to) const;
    void touch_recency(std::vector<std::string>& order, const std::string& id);

    std::map<std::string, SolidityProjectNode> projects_;
    std::map<std::string, DefiSemanticNode> semantics_;
    std::map<std::string, VulnerabilityPatternNode> patterns_;
    std::map<std::string, AuditFindingNode> findings_;
    std::vector<Edge> edges_;
    std::map<std::string, std::size_t> edge_index_;      // "kind|from|to" -> edges_ index
    std::map<std::string, std::string> fingerprints_;    // fingerprint -> node id
    std::set<std::string> findings_with_has_;            // Has-edge targets
    std::vector<std::string> semantic_recency_;          // most recent first
    std::vector<std::string> pattern_recency_;
    std::uint64_t proj_counter_ = 0;
    std::uint64_t sem_counter_ = 0;
    std::uint64_t pat_counter_ = 0;
    std::uint64_t find_counter_ = 0;
    std::uint64_t edge_counter_ = 0;
};

}  // namespace knowdit

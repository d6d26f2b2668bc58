#include "knowdit/orchestrator.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>

#include "knowdit/errors.hpp"

namespace knowdit {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view to_string(VerdictKind k) {
    switch (k) {
        case VerdictKind::TrueFinding: return "TrueFinding";
        case VerdictKind::ExpectedBehavior: return "ExpectedBehavior";
        case VerdictKind::ProblematicSpecOrHarness: return "ProblematicSpecOrHarness";
        case VerdictKind::OutOfScope: return "OutOfScope";
    }
    return "?";
}

std::optional<VerdictKind> verdict_kind_from_string(std::string_view name) {
    for (VerdictKind k : {VerdictKind::TrueFinding, VerdictKind::ExpectedBehavior,
                          VerdictKind::ProblematicSpecOrHarness, VerdictKind::OutOfScope}) {
        if (to_string(k) == name) return k;
    }
    return std::nullopt;
}

std::string_view to_string(MemoryEntryKind k) {
    switch (k) {
        case MemoryEntryKind::CoverageRecord: return "CoverageRecord";
        case MemoryEntryKind::ExecutionFailure: return "ExecutionFailure";
        case MemoryEntryKind::ReflectionFeedback: return "ReflectionFeedback";
        case MemoryEntryKind::SpecAttempt: return "SpecAttempt";
    }
    return "?";
}

void WorkingMemory::record_coverage(const std::string& semantic_id, const CoverageMap& coverage) {
    entries_.push_back({MemoryEntryKind::CoverageRecord, semantic_id, coverage.to_json()});
}

void WorkingMemory::record_failure(const std::string& pair_id, json detail) {
    entries_.push_back({MemoryEntryKind::ExecutionFailure, pair_id, std::move(detail)});
}

void WorkingMemory::record_reflection(const std::string& pair_id, VerdictKind kind,
                                      const std::string& reasoning) {
    entries_.push_back({MemoryEntryKind::ReflectionFeedback, pair_id,
                        json{{"verdict", std::string(to_string(kind))}, {"reasoning", reasoning}}});
}

void WorkingMemory::record_spec_attempt(const std::string& pair_id, int version) {
    entries_.push_back({MemoryEntryKind::SpecAttempt, pair_id, json{{"version", version}}});
}

std::size_t WorkingMemory::spec_attempts(const std::string& pair_id) const {
    return static_cast<std::size_t>(
        std::count_if(entries_.begin(), entries_.end(), [&](const MemoryEntry& e) {
            return e.kind == MemoryEntryKind::SpecAttempt && e.ref_id == pair_id;
        }));
}

CoverageMap WorkingMemory::cumulative_coverage(const std::string& semantic_id) const {
    CoverageMap acc;
    acc.semantic_tag = semantic_id;
    for (const MemoryEntry& e : entries_) {
        if (e.kind != MemoryEntryKind::CoverageRecord || e.ref_id != semantic_id) continue;
        acc = merge_coverage(acc, CoverageMap::from_json(e.payload));
    }
    return acc;
}

double WorkingMemory::coverage_ratio(const std::string& semantic_id) const {
    return cumulative_coverage(semantic_id).ratio();
}

std::vector<std::string> WorkingMemory::reflection_feedback(const std::string& pair_id) const {
    std::vector<std::string> out;
    for (const MemoryEntry& e : entries_) {
        if (e.kind == MemoryEntryKind::ReflectionFeedback && e.ref_id == pair_id) {
            out.push_back(e.payload.value("reasoning", std::string{}));
        }
    }
    return out;
}

void WorkingMemory::save(const fs::path& path) const {
    std::ofstream out(path);
    for (const MemoryEntry& e : entries_) {
        out << json{{"kind", std::string(to_string(e.kind))},
                    {"ref", e.ref_id},
                    {"payload", e.payload}}
                   .dump()
            << "\n";
    }
}

json AuditReportOut::to_json() const {
    json findings_doc = json::array();
    for (const ConfirmedFinding& f : findings) {
        findings_doc.push_back({{"title", f.title},
                                {"pair",
                                 {{"id", f.pair.id},
                                  {"semantic", f.pair.semantic},
                                  {"pattern", f.pair.pattern},
                                  {"rationale", f.pair.rationale}}},
                                {"specification", f.specification.to_json()},
                                {"violation", f.violation.to_json()},
                                {"severity", std::string(to_string(f.severity))},
                                {"reasoning", f.verdict_reasoning}});
    }
    return {{"project", project_name},
            {"findings", findings_doc},
            {"ledger", {{"total_usd", ledger_total_usd}, {"entries", ledger_entries}}},
            {"coverage", coverage_summary}};
}

std::string AuditReportOut::to_markdown() const {
    std::string md = "# Audit report: " + project_name + "\n\n";
    md += "Findings: " + std::to_string(findings.size()) + "\n\n";
    for (const ConfirmedFinding& f : findings) {
        md += "## " + f.title + "\n\n";
        md += "- Severity (advisory): " + std::string(to_string(f.severity)) + "\n";
        md += "- Pair: " + f.pair.id + " (" + f.pair.semantic + " / " + f.pair.pattern + ")\n";
        md += "- Failing oracle: " + f.violation.oracle_id + "\n";
        md += "\n" + f.verdict_reasoning + "\n\n";
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f", ledger_total_usd);
    md += "---\nToken spend: $" + std::string(buf) + " across " +
          std::to_string(ledger_entries) + " calls\n";
    return md;
}

Orchestrator::Orchestrator(Gateway& gateway, KnowledgeGraph& graph, CompilerToolchain& toolchain,
                           FuzzExecutor& executor, OrchestratorConfig config)
    : gateway_(gateway),
      graph_(graph),
      toolchain_(toolchain),
      executor_(executor),
      config_(std::move(config)),
      builder_(gateway_, graph_, BudgetGuard{config_.budget_usd, &gateway_.ledger()}) {}

BudgetGuard Orchestrator::budget_guard() const {
    return BudgetGuard{config_.budget_usd, &gateway_.ledger()};
}

std::vector<SemanticVulnPair> Orchestrator::map_knowledge(const ProjectCorpus& corpus) {
    if (graph_.semantics().empty()) return {};
    std::vector<SemanticVulnPair> pairs;
    try {
        std::vector<Chunk> chunks = chunk_corpus(corpus, 32000);
        std::set<BusinessType> business_types = builder_.classify_business_types(chunks);

        // Project-local extraction; candidates are not applied to the graph.
        auto candidates = builder_.extract_semantics(chunks, {});
        std::string project_semantics_text;
        for (const Candidate& c : candidates) {
            project_semantics_text += "- " + c.title + ": " + c.description + "\n";
        }

        auto scoped = graph_.query_semantics_by_business(business_types);
        if (scoped.empty()) return {};
        std::string known_text;
        std::set<std::string> scoped_ids;
        for (const DefiSemanticNode* n : scoped) {
            known_text += "- " + n->id + ": " + n->title + " -- " + n->description + "\n";
            scoped_ids.insert(n->id);
        }

        std::string prompt = Gateway::render_prompt(
            TemplateId::Mapping,
            {{"PROJECT SEMANTICS", project_semantics_text}, {"DEFI SEMANTICS", known_text}});
        StructuredReply reply = gateway_.complete_structured(
            TemplateId::Mapping, Role::Reasoning, prompt,
            [](const json& parsed) {
                if (!parsed.contains("matches") || !parsed["matches"].is_array()) {
                    throw std::runtime_error("expected an object with a \"matches\" array");
                }
                for (const json& m : parsed["matches"]) {
                    if (!m.contains("semantic")) {
                        throw std::runtime_error("each match needs a \"semantic\" id");
                    }
                }
            },
            budget_guard(), "map_knowledge");

        std::set<std::pair<std::string, std::string>> seen;
        std::size_t counter = 0;
        for (const json& m : reply.parsed["matches"]) {
            std::string sem = m["semantic"].get<std::string>();
            if (!scoped_ids.count(sem)) {
                std::cerr << "warning: mapper matched out-of-scope semantic " << sem << "\n";
                continue;
            }
            std::string match_reason = m.value("reasoning", std::string{});
            for (const auto& [pattern, rationale] : graph_.linked_patterns(sem)) {
                if (!seen.emplace(sem, pattern->id).second) continue;
                char id[32];
                std::snprintf(id, sizeof(id), "pair-%03zu", ++counter);
                pairs.push_back(SemanticVulnPair{id, sem, pattern->id,
                                                 match_reason.empty() ? rationale : match_reason});
            }
        }
    } catch (const Error& e) {
        std::cerr << "warning: knowledge mapping failed: " << e.what() << "\n";
        return {};
    }
    return pairs;
}

std::vector<SemanticVulnPair> Orchestrator::schedule_pairs(std::vector<SemanticVulnPair> pairs,
                                                           const WorkingMemory& memory) {
    std::stable_sort(pairs.begin(), pairs.end(),
                     [&](const SemanticVulnPair& a, const SemanticVulnPair& b) {
                         return memory.coverage_ratio(a.semantic) <
                                memory.coverage_ratio(b.semantic);
                     });
    return pairs;
}

Verdict Orchestrator::reflect_finding(const Violation& violation, const AuditSpecification& spec,
                                      const std::string& scope_notes, WorkingMemory& memory) {
    std::string scope_text = scope_notes;
    if (!config_.general_rules.empty()) {
        scope_text += "\n# General rules\n" + config_.general_rules;
    }
    std::string prompt = Gateway::render_prompt(
        TemplateId::Reflection, {{"SPECIFICATION", spec.canonical_text()},
                                 {"VIOLATION", violation.to_json().dump(2)},
                                 {"SCOPE NOTES", scope_text}});
    Verdict verdict;
    try {
        StructuredReply reply = gateway_.complete_structured(
            TemplateId::Reflection, Role::Reasoning, prompt,
            [](const json& parsed) {
                if (!parsed.contains("verdict") ||
                    !verdict_kind_from_string(parsed["verdict"].get<std::string>())) {
                    throw std::runtime_error("\"verdict\" must be one of the four kinds");
                }
            },
            budget_guard(), "reflect_finding");
        verdict.kind = *verdict_kind_from_string(reply.parsed["verdict"].get<std::string>());
        verdict.reasoning = reply.parsed.value("reasoning", std::string{});
        verdict.title = reply.parsed.value("title", std::string{});
        if (auto sev = severity_from_string(reply.parsed.value("severity", "Medium"))) {
            verdict.severity = *sev;
        }
    } catch (const BudgetExhausted&) {
        throw;
    } catch (const MalformedOutput& e) {
        verdict.kind = VerdictKind::ProblematicSpecOrHarness;
        verdict.reasoning = std::string("reflection output unusable: ") + e.what();
    }
    memory.record_reflection(spec.pair_id, verdict.kind, verdict.reasoning);
    return verdict;
}

ChangeSummary Orchestrator::ingest_finding(const ConfirmedFinding& finding, VerdictKind verdict,
                                           const std::string& project_id) {
    if (verdict != VerdictKind::TrueFinding) {
        throw PreconditionViolation("only TrueFinding verdicts are ingested");
    }
    if (!graph_.find_project(project_id)) throw NotFound("unknown project: " + project_id);
    const VulnerabilityPatternNode* pattern = graph_.find_pattern(finding.pair.pattern);
    if (!pattern) throw NotFound("unknown pattern: " + finding.pair.pattern);

    std::string body = finding.verdict_reasoning;
    std::string fp = content_fingerprint(finding.title, body);
    if (graph_.id_for_fingerprint(fp)) return {};  // duplicate ingest is a no-op

    ChangeSummary summary;
    std::string finding_id = graph_.add_finding(finding.title, finding.severity, body);
    summary.added.push_back(finding_id);
    graph_.add_edge(EdgeKind::Has, project_id, finding_id);
    graph_.add_edge(EdgeKind::ContributesTo, finding.pair.pattern, finding_id);
    for (const Edge& e : graph_.edges()) {
        if (e.kind == EdgeKind::Poses && e.from == finding.pair.pattern) {
            graph_.add_edge(EdgeKind::Involves, finding_id, e.to);
        }
    }
    return summary;
}

AuditReportOut Orchestrator::run_audit(const ProjectCorpus& corpus) {
    if (config_.budget_usd <= 0.0) throw PreconditionViolation("budget must be > 0");
    fs::create_directories(config_.workspace_root / "specs");
    fs::create_directories(config_.workspace_root / "harnesses");
    fs::create_directories(config_.workspace_root / "runs");

    AuditReportOut report;
    report.project_name = corpus.name;
    BudgetGuard guard = budget_guard();

    std::vector<SemanticVulnPair> pairs = map_knowledge(corpus);
    pairs = schedule_pairs(std::move(pairs), memory_);

    std::string project_node_id;  // created lazily on the first confirmed finding

    bool budget_hit = false;
    for (const SemanticVulnPair& pair : pairs) {
        if (budget_hit || guard.remaining() <= 0.0) break;

        const AuditSpecification* previous_spec = nullptr;
        AuditSpecification spec_storage;
        int version = 0;
        bool advance = false;
        while (!advance && version < 1 + config_.regeneration_cap) {
            ++version;
            memory_.record_spec_attempt(pair.id, version);
            try {
                SpecRequest request;
                request.pair_id = pair.id;
                const DefiSemanticNode* sem = graph_.find_semantic(pair.semantic);
                const VulnerabilityPatternNode* pat = graph_.find_pattern(pair.pattern);
                request.semantic_text =
                    sem ? sem->title + " -- " + sem->description : pair.semantic;
                request.pattern_text = pat ? pat->title + " -- " + pat->description : pair.pattern;
                request.version = version;
                request.feedback = memory_.reflection_feedback(pair.id);
                request.previous = previous_spec;

                AuditSpecification spec =
                    generate_specification(gateway_, guard, request, corpus);
                {
                    std::ofstream out(config_.workspace_root / "specs" /
                                      (pair.id + "-v" + std::to_string(version) + ".json"));
                    out << spec.to_json().dump(2) << "\n";
                }

                HarnessSource harness = synthesize_harness(gateway_, guard, spec, corpus);
                fs::path harness_dir = config_.workspace_root / "harnesses" /
                                       (pair.id + "-v" + std::to_string(version));
                CompileOutcome compile_outcome = compile_and_repair(
                    gateway_, guard, toolchain_, harness_dir, corpus, std::move(harness),
                    config_.max_repair_attempts, [&](const RepairAttempt& attempt) {
                        memory_.record_failure(pair.id,
                                               json{{"attempt", attempt.attempt},
                                                    {"diagnostics", attempt.diagnostics},
                                                    {"patch_summary", attempt.patch_summary}});
                    });
                if (std::holds_alternative<Blocked>(compile_outcome)) {
                    memory_.record_failure(
                        pair.id, json{{"blocked_after",
                                       std::get<Blocked>(compile_outcome).attempts}});
                    break;  // pair blocked, move on
                }
                const CompiledHarness& compiled = std::get<CompiledHarness>(compile_outcome);

                FuzzOutcome outcome;
                try {
                    outcome =
                        executor_.run(compiled, config_.fuzz_timeout_seconds, config_.seed);
                } catch (const Error& e) {
                    memory_.record_failure(pair.id, json{{"run_failed", e.what()}});
                    break;
                }
                outcome.coverage.semantic_tag = pair.semantic;
                memory_.record_coverage(pair.semantic, outcome.coverage);
                {
                    std::ofstream out(config_.workspace_root / "runs" /
                                      (pair.id + "-v" + std::to_string(version) + ".json"));
                    out << outcome.to_json().dump(2) << "\n";
                }

                if (!outcome.violation) {
                    advance = true;  // one clean run per spec version, then next pair
                    break;
                }

                Verdict verdict =
                    reflect_finding(*outcome.violation, spec, corpus.scope_notes, memory_);
                if (verdict.kind == VerdictKind::TrueFinding) {
                    ConfirmedFinding confirmed;
                    confirmed.title = verdict.title.empty()
                                          ? "Violation of " + outcome.violation->oracle_id
                                          : verdict.title;
                    confirmed.pair = pair;
                    confirmed.specification = spec;
                    confirmed.violation = *outcome.violation;
                    confirmed.severity = verdict.severity;
                    confirmed.verdict_reasoning = verdict.reasoning;
                    if (project_node_id.empty()) {
                        project_node_id = graph_.add_project(corpus.name, "audited");
                    }
                    ingest_finding(confirmed, verdict.kind, project_node_id);
                    report.findings.push_back(std::move(confirmed));
                    advance = true;
                } else if (verdict.kind == VerdictKind::ProblematicSpecOrHarness) {
                    spec_storage = spec;
                    previous_spec = &spec_storage;  // regenerate with feedback
                } else {
                    advance = true;  // ExpectedBehavior / OutOfScope
                }
            } catch (const BudgetExhausted&) {
                budget_hit = true;
                break;
            } catch (const Error& e) {
                memory_.record_failure(pair.id, json{{"error", e.what()}});
                break;
            }
        }
    }

    report.ledger_total_usd = gateway_.ledger().total();
    report.ledger_entries = gateway_.ledger().size();
    json coverage = json::object();
    std::set<std::string> seen_semantics;
    for (const SemanticVulnPair& p : pairs) {
        if (seen_semantics.insert(p.semantic).second) {
            coverage[p.semantic] = memory_.coverage_ratio(p.semantic);
        }
    }
    report.coverage_summary = std::move(coverage);

    memory_.save(config_.workspace_root / "memory.log");
    {
        std::ofstream out(config_.workspace_root / "report.json");
        out << report.to_json().dump(2) << "\n";
    }
    {
        std::ofstream out(config_.workspace_root / "report.md");
        out << report.to_markdown();
    }
    return report;
}

}  // namespace knowdit

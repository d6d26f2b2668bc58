#include "knowdit/kg_builder.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

#include "json.hpp"
#include "knowdit/errors.hpp"

namespace knowdit {

using nlohmann::json;

namespace {

std::string chunks_to_text(const std::vector<Chunk>& chunks) {
    std::string out;
    for (const Chunk& c : chunks) {
        out += "--- " + c.origin + " [chunk " + std::to_string(c.index) + "] ---\n";
        out += c.text;
        if (!c.text.empty() && c.text.back() != '\n') out += '\n';
    }
    return out;
}

std::string finding_to_text(const ReportFinding& f) {
    std::string out = "Audit Finding: " + f.title + "\nSeverity: ";
    out += to_string(f.severity);
    out += "\n" + f.body + "\n";
    return out;
}

template <typename Node>
std::string nodes_to_text(const std::vector<const Node*>& nodes) {
    std::string out;
    for (const Node* n : nodes) {
        out += "- " + n->id + ": " + n->title + " -- " + n->description + "\n";
    }
    return out;
}

void validate_candidates_shape(const json& parsed) {
    if (!parsed.is_object() || !parsed.contains("candidates") ||
        !parsed["candidates"].is_array()) {
        throw std::runtime_error("expected an object with a \"candidates\" array");
    }
    for (const json& c : parsed["candidates"]) {
        if (!c.is_object() || !c.contains("title") || !c["title"].is_string() ||
            c["title"].get<std::string>().empty()) {
            throw std::runtime_error("each candidate needs a non-empty \"title\"");
        }
        if (!c.contains("description") || !c["description"].is_string()) {
            throw std::runtime_error("each candidate needs a \"description\" string");
        }
        if (c.contains("merge_target") && !c["merge_target"].is_null() &&
            !c["merge_target"].is_string()) {
            throw std::runtime_error("\"merge_target\" must be null or a node id");
        }
    }
}

std::vector<Candidate> parse_candidates(const json& parsed, const std::set<std::string>& prior_ids) {
    std::vector<Candidate> out;
    for (const json& c : parsed["candidates"]) {
        Candidate cand;
        cand.title = c["title"].get<std::string>();
        cand.description = c["description"].get<std::string>();
        cand.reasoning = c.value("reasoning", std::string{});
        if (c.contains("merge_target") && c["merge_target"].is_string()) {
            std::string target = c["merge_target"].get<std::string>();
            if (!prior_ids.count(target)) {
                throw DanglingMergeTarget("merge_target " + target +
                                          " is not among the presented prior nodes");
            }
            cand.merge_target = std::move(target);
        }
        out.push_back(std::move(cand));
    }
    return out;
}

}  // namespace

std::string business_type_catalog() {
    // One in-context example per category; the example bank is configuration
    // in spirit but ships with a usable default.
    static const std::pair<BusinessType, const char*> examples[] = {
        {BusinessType::Lending, "pooled collateralized borrowing with interest accrual"},
        {BusinessType::Dexes, "automated market maker swapping token X for token Y"},
        {BusinessType::Yield, "staking contract streaming protocol rewards to depositors"},
        {BusinessType::Services, "payment escrow releasing funds on delivery confirmation"},
        {BusinessType::Derivatives, "perpetual futures with funding-rate settlement"},
        {BusinessType::YieldAggregator, "vault routing deposits across lending markets for best APY"},
        {BusinessType::RealWorldAssets, "tokenized invoice pool with off-chain redemption"},
        {BusinessType::Stablecoins, "overcollateralized debt positions minting a pegged token"},
        {BusinessType::Indexes, "basket token tracking a weighted portfolio of assets"},
        {BusinessType::Insurance, "underwriting pool paying claims from member premiums"},
        {BusinessType::NFTMarketplace, "order book matching NFT sellers and bidders"},
        {BusinessType::NFTLending, "loans collateralized by escrowed NFTs"},
        {BusinessType::CrossChain, "lock-and-mint bridge relaying tokens between chains"},
    };
    std::string out;
    for (const auto& [type, example] : examples) {
        out += "- ";
        out += to_string(type);
        out += ": e.g. ";
        out += example;
        out += "\n";
    }
    return out;
}

std::string attack_type_catalog() {
    static const std::pair<AttackType, const char*> examples[] = {
        {AttackType::AccessControl, "missing onlyOwner check lets anyone drain the treasury"},
        {AttackType::Arithmetic, "rounding in share math lets deposits mint zero shares"},
        {AttackType::BlockManipulation, "reward schedule manipulable via block timestamp"},
        {AttackType::Cryptographic, "signature replay across chains due to missing nonce"},
        {AttackType::DenialOfService, "unbounded loop over holders blocks withdrawals"},
        {AttackType::Reentrancy, "external call before state update re-enters withdraw"},
        {AttackType::StorageAndMemory, "uninitialized storage pointer overwrites owner slot"},
    };
    std::string out;
    for (const auto& [type, example] : examples) {
        out += "- ";
        out += to_string(type);
        out += ": e.g. ";
        out += example;
        out += "\n";
    }
    return out;
}

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open manifest: " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError("manifest: " + std::string(e.what()), e.byte);
    }
    std::vector<ManifestEntry> out;
    std::filesystem::path base = path.parent_path();
    for (const json& item : doc) {
        ManifestEntry entry;
        entry.project_dir = base / item.at("project_dir").get<std::string>();
        entry.findings_file = base / item.at("findings_file").get<std::string>();
        out.push_back(std::move(entry));
    }
    return out;
}

KgBuilder::KgBuilder(Gateway& gateway, KnowledgeGraph& graph, BudgetGuard guard)
    : KgBuilder(gateway, graph, guard, Options{}) {}

KgBuilder::KgBuilder(Gateway& gateway, KnowledgeGraph& graph, BudgetGuard guard, Options options)
    : gateway_(gateway), graph_(graph), guard_(guard), options_(options) {}

std::set<BusinessType> KgBuilder::classify_business_types(const std::vector<Chunk>& chunks) {
    if (chunks.empty()) throw PreconditionViolation("classification needs at least one chunk");
    std::string prompt = Gateway::render_prompt(
        TemplateId::Classification,
        {{"CATEGORIES WITH EXAMPLES", business_type_catalog()},
         {"PROJECT SOURCE CODE/DOCUMENTS/REPORTS", chunks_to_text(chunks)}});
    StructuredReply reply = gateway_.complete_structured(
        TemplateId::Classification, Role::Reasoning, prompt,
        [](const json& parsed) {
            if (!parsed.contains("verdicts") || !parsed["verdicts"].is_array()) {
                throw std::runtime_error("expected an object with a \"verdicts\" array");
            }
            for (const json& v : parsed["verdicts"]) {
                std::string cat = v.at("category").get<std::string>();
                if (!business_type_from_string(cat)) {
                    throw std::runtime_error("unknown business type: " + cat);
                }
                if (!v.at("verdict").is_boolean()) {
                    throw std::runtime_error("\"verdict\" must be a boolean");
                }
            }
        },
        guard_, "classify_business");
    std::set<BusinessType> out;
    for (const json& v : reply.parsed["verdicts"]) {
        if (v["verdict"].get<bool>()) {
            out.insert(*business_type_from_string(v["category"].get<std::string>()));
        }
    }
    if (out.empty()) throw ClassificationEmpty("no business type affirmed by the model");
    return out;
}

std::set<AttackType> KgBuilder::classify_attack_types(const ReportFinding& finding) {
    std::string prompt = Gateway::render_prompt(
        TemplateId::Classification,
        {{"CATEGORIES WITH EXAMPLES", attack_type_catalog()},
         {"PROJECT SOURCE CODE/DOCUMENTS/REPORTS", finding_to_text(finding)}});
    StructuredReply reply = gateway_.complete_structured(
        TemplateId::Classification, Role::Reasoning, prompt,
        [](const json& parsed) {
            if (!parsed.contains("verdicts") || !parsed["verdicts"].is_array()) {
                throw std::runtime_error("expected an object with a \"verdicts\" array");
            }
            for (const json& v : parsed["verdicts"]) {
                std::string cat = v.at("category").get<std::string>();
                if (!attack_type_from_string(cat)) {
                    throw std::runtime_error("unknown attack type: " + cat);
                }
                if (!v.at("verdict").is_boolean()) {
                    throw std::runtime_error("\"verdict\" must be a boolean");
                }
            }
        },
        guard_, "classify_attack");
    std::set<AttackType> out;
    for (const json& v : reply.parsed["verdicts"]) {
        if (v["verdict"].get<bool>()) {
            out.insert(*attack_type_from_string(v["category"].get<std::string>()));
        }
    }
    if (out.empty()) throw ClassificationEmpty("no attack type affirmed by the model");
    return out;
}

std::vector<CandidateSemantic> KgBuilder::extract_semantics(
    const std::vector<Chunk>& chunks, const std::vector<const DefiSemanticNode*>& prior) {
    std::string prompt = Gateway::render_prompt(
        TemplateId::Extraction,
        {{"CATEGORIES WITH EXAMPLES", business_type_catalog()},
         {"PROJECT SOURCE CODE/DOCUMENTS/REPORTS", chunks_to_text(chunks)},
         {"PREVIOUS SEMANTICS/VULNERABILITIES PATTERN", nodes_to_text(prior)}});
    StructuredReply reply =
        gateway_.complete_structured(TemplateId::Extraction, Role::Reasoning, prompt,
                                     validate_candidates_shape, guard_, "extract_semantics");
    std::set<std::string> prior_ids;
    for (const auto* n : prior) prior_ids.insert(n->id);
    return parse_candidates(reply.parsed, prior_ids);
}

std::vector<CandidatePattern> KgBuilder::extract_patterns(
    const ReportFinding& finding, const std::vector<const VulnerabilityPatternNode*>& prior) {
    std::string prompt = Gateway::render_prompt(
        TemplateId::Extraction,
        {{"CATEGORIES WITH EXAMPLES", attack_type_catalog()},
         {"PROJECT SOURCE CODE/DOCUMENTS/REPORTS", finding_to_text(finding)},
         {"PREVIOUS SEMANTICS/VULNERABILITIES PATTERN", nodes_to_text(prior)}});
    StructuredReply reply =
        gateway_.complete_structured(TemplateId::Extraction, Role::Reasoning, prompt,
                                     validate_candidates_shape, guard_, "extract_patterns");
    std::set<std::string> prior_ids;
    for (const auto* n : prior) prior_ids.insert(n->id);
    return parse_candidates(reply.parsed, prior_ids);
}

ChangeSummary KgBuilder::apply_semantic_candidates(
    const std::string& project_id, const std::set<BusinessType>& business_types,
    const std::vector<CandidateSemantic>& candidates) {
    ChangeSummary summary;
    for (const CandidateSemantic& c : candidates) {
        std::string id;
        if (c.merge_target) {
            id = graph_.merge_semantics(*c.merge_target, c.title, c.description, c.description);
            summary.merged.push_back(id);
        } else {
            id = graph_.add_semantic(c.title, c.description);
            summary.added.push_back(id);
        }
        graph_.add_edge(EdgeKind::Contains, project_id, id);
        // Union semantics: a merged node gains Underlies edges for any new
        // business type of the contributing project.
        for (BusinessType bt : business_types) {
            graph_.add_edge(EdgeKind::Underlies, id, std::string(to_string(bt)));
        }
    }
    return summary;
}

ChangeSummary KgBuilder::apply_pattern_candidates(const std::string& finding_id,
                                                  const std::set<AttackType>& attack_types,
                                                  const std::vector<CandidatePattern>& candidates) {
    ChangeSummary summary;
    for (const CandidatePattern& c : candidates) {
        std::string id;
        if (c.merge_target) {
            id = graph_.merge_patterns(*c.merge_target, c.title, c.description, c.description);
            summary.merged.push_back(id);
        } else {
            id = graph_.add_pattern(c.title, c.description);
            summary.added.push_back(id);
        }
        graph_.add_edge(EdgeKind::ContributesTo, id, finding_id);
        for (AttackType at : attack_types) {
            graph_.add_edge(EdgeKind::Poses, id, std::string(to_string(at)));
        }
    }
    return summary;
}

std::vector<const DefiSemanticNode*> KgBuilder::prior_semantics(
    const std::set<BusinessType>& business_types) const {
    auto scoped = graph_.query_semantics_by_business(business_types);
    std::set<std::string> scoped_ids;
    for (const auto* n : scoped) scoped_ids.insert(n->id);
    std::vector<const DefiSemanticNode*> out;
    for (const DefiSemanticNode* n : graph_.recent_semantics(graph_.semantics().size())) {
        if (out.size() >= options_.prior_cap) break;
        if (scoped_ids.count(n->id)) out.push_back(n);
    }
    return out;
}

std::vector<const VulnerabilityPatternNode*> KgBuilder::prior_patterns(
    const std::set<AttackType>& attack_types) const {
    std::set<std::string> scoped_ids;
    for (const Edge& e : graph_.edges()) {
        if (e.kind != EdgeKind::Poses) continue;
        auto at = attack_type_from_string(e.to);
        if (at && attack_types.count(*at)) scoped_ids.insert(e.from);
    }
    std::vector<const VulnerabilityPatternNode*> out;
    for (const VulnerabilityPatternNode* n : graph_.recent_patterns(graph_.patterns().size())) {
        if (out.size() >= options_.prior_cap) break;
        if (scoped_ids.count(n->id)) out.push_back(n);
    }
    return out;
}

ProjectReportPair KgBuilder::collect_pair(const std::string& project_id) const {
    ProjectReportPair pair;
    pair.project_id = project_id;
    std::set<std::string> semantics, findings, patterns;
    for (const Edge& e : graph_.edges()) {
        if (e.kind == EdgeKind::Contains && e.from == project_id) semantics.insert(e.to);
        if (e.kind == EdgeKind::Has && e.from == project_id) findings.insert(e.to);
    }
    for (const Edge& e : graph_.edges()) {
        if (e.kind == EdgeKind::ContributesTo && findings.count(e.to)) patterns.insert(e.from);
    }
    pair.semantics.assign(semantics.begin(), semantics.end());
    pair.patterns.assign(patterns.begin(), patterns.end());
    return pair;
}

LinkResult KgBuilder::link_pair(const ProjectReportPair& pair) {
    LinkResult result;
    if (pair.semantics.empty() || pair.patterns.empty()) return result;

    std::vector<const DefiSemanticNode*> sems;
    for (const std::string& id : pair.semantics) sems.push_back(graph_.find_semantic(id));
    std::vector<const VulnerabilityPatternNode*> pats;
    for (const std::string& id : pair.patterns) pats.push_back(graph_.find_pattern(id));

    std::string prompt =
        Gateway::render_prompt(TemplateId::Linking, {{"DEFI SEMANTICS", nodes_to_text(sems)},
                                                     {"VULNERABILITY PATTERNS", nodes_to_text(pats)}});
    StructuredReply reply = gateway_.complete_structured(
        TemplateId::Linking, Role::Reasoning, prompt,
        [](const json& parsed) {
            if (!parsed.contains("links") || !parsed["links"].is_array()) {
                throw std::runtime_error("expected an object with a \"links\" array");
            }
            for (const json& l : parsed["links"]) {
                if (!l.contains("semantic") || !l.contains("pattern")) {
                    throw std::runtime_error("each link needs \"semantic\" and \"pattern\" ids");
                }
            }
        },
        guard_, "link_pair");

    std::set<std::string> d(pair.semantics.begin(), pair.semantics.end());
    std::set<std::string> v(pair.patterns.begin(), pair.patterns.end());
    for (const json& l : reply.parsed["links"]) {
        std::string sem = l["semantic"].get<std::string>();
        std::string pat = l["pattern"].get<std::string>();
        if (!d.count(sem) || !v.count(pat)) {
            std::cerr << "warning: dropping out-of-universe link " << sem << " -> " << pat << "\n";
            ++result.dropped;
            continue;
        }
        result.edge_ids.push_back(graph_.add_edge(EdgeKind::MayIntroduce, sem, pat,
                                                  l.value("reasoning", std::string{})));
    }
    return result;
}

void KgBuilder::build_graph(const std::vector<ManifestEntry>& manifest) {
    for (const ManifestEntry& entry : manifest) {
        try {
            ProjectCorpus corpus = load_project(entry.project_dir);
            AuditReport report = load_report(entry.findings_file);
            std::vector<Chunk> chunks = chunk_corpus(corpus, options_.max_chunk_units);

            // Stage I: semantics.
            std::set<BusinessType> business_types = classify_business_types(chunks);
            std::string project_id =
                graph_.add_project(corpus.name, entry.project_dir.generic_string());
            for (BusinessType bt : business_types) {
                graph_.add_edge(EdgeKind::BelongsTo, project_id, std::string(to_string(bt)));
            }
            auto sem_prior = prior_semantics(business_types);
            auto sem_candidates = extract_semantics(chunks, sem_prior);
            apply_semantic_candidates(project_id, business_types, sem_candidates);

            // Stage II: patterns, per finding, deduped globally per attack type.
            for (const ReportFinding& finding : report.findings) {
                std::set<AttackType> attack_types = classify_attack_types(finding);
                std::string finding_id =
                    graph_.add_finding(finding.title, finding.severity, finding.body);
                graph_.add_edge(EdgeKind::Has, project_id, finding_id);
                for (AttackType at : attack_types) {
                    graph_.add_edge(EdgeKind::Involves, finding_id, std::string(to_string(at)));
                }
                auto pat_prior = prior_patterns(attack_types);
                auto pat_candidates = extract_patterns(finding, pat_prior);
                apply_pattern_candidates(finding_id, attack_types, pat_candidates);
            }

            // Stage III: causal linking within this pair's D x V.
            link_pair(collect_pair(project_id));
        } catch (const Error& e) {
            std::cerr << "warning: skipping project " << entry.project_dir << ": " << e.what()
                      << "\n";
        }
    }
}

}  // namespace knowdit

#include "knowdit/graph.hpp"

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "knowdit/errors.hpp"

namespace knowdit {

namespace {

using nlohmann::json;

std::string normalize_text(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    return out;
}

std::uint64_t fnv1a(std::string_view data) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

enum class NodeClass { Project, Semantic, Pattern, Finding, Business, Attack };

std::string edge_key(EdgeKind kind, const std::string& from, const std::string& to) {
    std::string key{to_string(kind)};
    key += '|';
    key += from;
    key += '|';
    key += to;
    return key;
}

}  // namespace

std::string_view to_string(EdgeKind k) {
    switch (k) {
        case EdgeKind::BelongsTo: return "BelongsTo";
        case EdgeKind::Contains: return "Contains";
        case EdgeKind::Underlies: return "Underlies";
        case EdgeKind::ContributesTo: return "ContributesTo";
        case EdgeKind::Poses: return "Poses";
        case EdgeKind::Involves: return "Involves";
        case EdgeKind::Has: return "Has";
        case EdgeKind::MayIntroduce: return "MayIntroduce";
    }
    return "?";
}

std::optional<EdgeKind> edge_kind_from_string(std::string_view name) {
    for (EdgeKind k :
         {EdgeKind::BelongsTo, EdgeKind::Contains, EdgeKind::Underlies, EdgeKind::ContributesTo,
          EdgeKind::Poses, EdgeKind::Involves, EdgeKind::Has, EdgeKind::MayIntroduce}) {
        if (to_string(k) == name) return k;
    }
    return std::nullopt;
}

std::string content_fingerprint(std::string_view title, std::string_view description) {
    std::string norm = normalize_text(title);
    norm += '\n';
    norm += normalize_text(description);
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a(norm)));
    return std::string("fp-") + buf;
}

std::string KnowledgeGraph::next_id(const char* prefix, std::uint64_t& counter) {
    ++counter;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s-%06llu", prefix,
                  static_cast<unsigned long long>(counter));
    return buf;
}

std::string KnowledgeGraph::add_project(std::string name, std::string source_ref) {
    if (name.empty()) throw PreconditionViolation("project name must be non-empty");
    std::string id = next_id("proj", proj_counter_);
    projects_.emplace(id, SolidityProjectNode{id, std::move(name), std::move(source_ref)});
    return id;
}

std::string KnowledgeGraph::add_semantic(std::string title, std::string description) {
    if (title.empty()) throw PreconditionViolation("semantic title must be non-empty");
    std::string fp = content_fingerprint(title, description);
    if (auto it = fingerprints_.find(fp); it != fingerprints_.end()) return it->second;
    std::string id = next_id("sem", sem_counter_);
    semantics_.emplace(id, DefiSemanticNode{id, std::move(title), std::move(description), {fp}});
    fingerprints_.emplace(std::move(fp), id);
    semantic_recency_.insert(semantic_recency_.begin(), id);
    return id;
}

std::string KnowledgeGraph::add_pattern(std::string title, std::string description) {
    if (title.empty()) throw PreconditionViolation("pattern title must be non-empty");
    std::string fp = content_fingerprint(title, description);
    if (auto it = fingerprints_.find(fp); it != fingerprints_.end()) return it->second;
    std::string id = next_id("pat", pat_counter_);
    patterns_.emplace(id,
                      VulnerabilityPatternNode{id, std::move(title), std::move(description), {fp}});
    fingerprints_.emplace(std::move(fp), id);
    pattern_recency_.insert(pattern_recency_.begin(), id);
    return id;
}

std::string KnowledgeGraph::add_finding(std::string title, Severity severity, std::string body) {
    std::string fp = content_fingerprint(title, body);
    if (auto it = fingerprints_.find(fp); it != fingerprints_.end()) return it->second;
    std::string id = next_id("find", find_counter_);
    findings_.emplace(id, AuditFindingNode{id, std::move(title), severity, std::move(body)});
    fingerprints_.emplace(std::move(fp), id);
    return id;
}

void KnowledgeGraph::check_endpoints(EdgeKind kind, const std::string& from,
                                     const std::string& to) const {
    auto classify_from = [&](const std::string& id) -> std::optional<NodeClass> {
        if (projects_.count(id)) return NodeClass::Project;
        if (semantics_.count(id)) return NodeClass::Semantic;
        if (patterns_.count(id)) return NodeClass::Pattern;
        if (findings_.count(id)) return NodeClass::Finding;
        return std::nullopt;
    };
    auto classify_to = [&](const std::string& id) -> std::optional<NodeClass> {
        if (auto c = classify_from(id)) return c;
        if (business_type_from_string(id)) return NodeClass::Business;
        if (attack_type_from_string(id)) return NodeClass::Attack;
        return std::nullopt;
    };

    auto from_class = classify_from(from);
    auto to_class = classify_to(to);
    if (!from_class)
        throw SchemaViolation("edge source does not exist: " + from);
    if (!to_class)
        throw SchemaViolation("edge target does not exist: " + to);

    NodeClass want_from, want_to;
    switch (kind) {
        case EdgeKind::BelongsTo: want_from = NodeClass::Project; want_to = NodeClass::Business; break;
        case EdgeKind::Contains: want_from = NodeClass::Project; want_to = NodeClass::Semantic; break;
        case EdgeKind::Underlies: want_from = NodeClass::Semantic; want_to = NodeClass::Business; break;
        case EdgeKind::ContributesTo: want_from = NodeClass::Pattern; want_to = NodeClass::Finding; break;
        case EdgeKind::Poses: want_from = NodeClass::Pattern; want_to = NodeClass::Attack; break;
        case EdgeKind::Involves: want_from = NodeClass::Finding; want_to = NodeClass::Attack; break;
        case EdgeKind::Has: want_from = NodeClass::Project; want_to = NodeClass::Finding; break;
        case EdgeKind::MayIntroduce: want_from = NodeClass::Semantic; want_to = NodeClass::Pattern; break;
        default: throw SchemaViolation("unknown edge kind");
    }
    if (*from_class != want_from || *to_class != want_to) {
        throw SchemaViolation(std::string("endpoint kinds do not match ") +
                              std::string(to_string(kind)) + " for edge " + from + " -> " + to);
    }
}

std::string KnowledgeGraph::add_edge(EdgeKind kind, const std::string& from, const std::string& to,
                                     std::string rationale) {
    std::string key = edge_key(kind, from, to);
    if (auto it = edge_index_.find(key); it != edge_index_.end()) {
        return edges_[it->second].id;  // duplicate triples are idempotent no-ops
    }
    check_endpoints(kind, from, to);
    if (kind == EdgeKind::Has && findings_with_has_.count(to)) {
        throw SchemaViolation("finding " + to + " already has an incoming Has edge");
    }
    std::string id = next_id("edge", edge_counter_);
    edges_.push_back(Edge{id, kind, from, to, std::move(rationale)});
    edge_index_.emplace(std::move(key), edges_.size() - 1);
    if (kind == EdgeKind::Has) findings_with_has_.insert(to);
    return id;
}

void KnowledgeGraph::touch_recency(std::vector<std::string>& order, const std::string& id) {
    auto it = std::find(order.begin(), order.end(), id);
    if (it != order.end()) order.erase(it);
    order.insert(order.begin(), id);
}

std::string KnowledgeGraph::merge_semantics(const std::string& existing_id,
                                            const std::string& candidate_title,
                                            const std::string& candidate_description,
                                            const std::string& synthesized_description) {
    auto it = semantics_.find(existing_id);
    if (it == semantics_.end()) {
        if (projects_.count(existing_id) || patterns_.count(existing_id) ||
            findings_.count(existing_id)) {
            throw KindMismatch(existing_id + " is not a semantic node");
        }
        throw NotFound("unknown semantic: " + existing_id);
    }
    std::string fp = content_fingerprint(candidate_title, candidate_description);
    it->second.description = synthesized_description;
    auto& mf = it->second.merged_from;
    if (std::find(mf.begin(), mf.end(), fp) == mf.end()) mf.push_back(fp);
    std::sort(mf.begin(), mf.end());
    fingerprints_.emplace(fp, existing_id);
    touch_recency(semantic_recency_, existing_id);
    return existing_id;
}

std::string KnowledgeGraph::merge_patterns(const std::string& existing_id,
                                           const std::string& candidate_title,
                                           const std::string& candidate_description,
                                           const std::string& synthesized_description) {
    auto it = patterns_.find(existing_id);
    if (it == patterns_.end()) {
        if (projects_.count(existing_id) || semantics_.count(existing_id) ||
            findings_.count(existing_id)) {
            throw KindMismatch(existing_id + " is not a pattern node");
        }
        throw NotFound("unknown pattern: " + existing_id);
    }
    std::string fp = content_fingerprint(candidate_title, candidate_description);
    it->second.description = synthesized_description;
    auto& mf = it->second.merged_from;
    if (std::find(mf.begin(), mf.end(), fp) == mf.end()) mf.push_back(fp);
    std::sort(mf.begin(), mf.end());
    fingerprints_.emplace(fp, existing_id);
    touch_recency(pattern_recency_, existing_id);
    return existing_id;
}

std::vector<const DefiSemanticNode*> KnowledgeGraph::query_semantics_by_business(
    const std::set<BusinessType>& business_types) const {
    std::set<std::string> hits;
    for (const Edge& e : edges_) {
        if (e.kind != EdgeKind::Underlies) continue;
        auto bt = business_type_from_string(e.to);
        if (bt && business_types.count(*bt)) hits.insert(e.from);
    }
    std::vector<const DefiSemanticNode*> out;
    for (const std::string& id : hits) {
        out.push_back(&semantics_.at(id));  // ids ordered by std::set
    }
    return out;
}

std::vector<std::pair<const VulnerabilityPatternNode*, std::string>>
KnowledgeGraph::linked_patterns(const std::string& semantic_id) const {
    if (!semantics_.count(semantic_id)) throw NotFound("unknown semantic: " + semantic_id);
    std::vector<std::pair<const VulnerabilityPatternNode*, std::string>> out;
    for (const Edge& e : edges_) {
        if (e.kind == EdgeKind::MayIntroduce && e.from == semantic_id) {
            out.emplace_back(&patterns_.at(e.to), e.rationale);
        }
    }
    std::sort(out.begin(), out.end(),
              [](const auto& a, const auto& b) { return a.first->id < b.first->id; });
    return out;
}

const SolidityProjectNode* KnowledgeGraph::find_project(const std::string& id) const {
    auto it = projects_.find(id);
    return it == projects_.end() ? nullptr : &it->second;
}
const DefiSemanticNode* KnowledgeGraph::find_semantic(const std::string& id) const {
    auto it = semantics_.find(id);
    return it == semantics_.end() ? nullptr : &it->second;
}
const VulnerabilityPatternNode* KnowledgeGraph::find_pattern(const std::string& id) const {
    auto it = patterns_.find(id);
    return it == patterns_.end() ? nullptr : &it->second;
}
const AuditFindingNode* KnowledgeGraph::find_finding(const std::string& id) const {
    auto it = findings_.find(id);
    return it == findings_.end() ? nullptr : &it->second;
}

std::optional<std::string> KnowledgeGraph::id_for_fingerprint(const std::string& fp) const {
    auto it = fingerprints_.find(fp);
    if (it == fingerprints_.end()) return std::nullopt;
    return it->second;
}

std::size_t KnowledgeGraph::edge_count(EdgeKind kind) const {
    return static_cast<std::size_t>(
        std::count_if(edges_.begin(), edges_.end(), [&](const Edge& e) { return e.kind == kind; }));
}

std::vector<const DefiSemanticNode*> KnowledgeGraph::recent_semantics(std::size_t cap) const {
    std::vector<const DefiSemanticNode*> out;
    for (const std::string& id : semantic_recency_) {
        if (out.size() >= cap) break;
        out.push_back(&semantics_.at(id));
    }
    return out;
}

std::vector<const VulnerabilityPatternNode*> KnowledgeGraph::recent_patterns(
    std::size_t cap) const {
    std::vector<const VulnerabilityPatternNode*> out;
    for (const std::string& id : pattern_recency_) {
        if (out.size() >= cap) break;
        out.push_back(&patterns_.at(id));
    }
    return out;
}

std::vector<std::string> KnowledgeGraph::validate() const {
    std::vector<std::string> violations;
    std::map<std::string, int> has_in;
    for (const Edge& e : edges_) {
        try {
            check_endpoints(e.kind, e.from, e.to);
        } catch (const SchemaViolation& err) {
            violations.push_back(err.what());
        }
        if (e.kind == EdgeKind::Has) ++has_in[e.to];
    }
    for (const auto& [id, f] : findings_) {
        if (findings_with_has_.count(id) && has_in[id] != 1) {
            violations.push_back("finding " + id + " has " + std::to_string(has_in[id]) +
                                 " incoming Has edges");
        }
    }
    for (const auto& [id, s] : semantics_) {
        if (s.title.empty()) violations.push_back("semantic " + id + " has empty title");
        if (s.merged_from.empty()) violations.push_back("semantic " + id + " has empty merged_from");
    }
    for (const auto& [id, p] : patterns_) {
        if (p.title.empty()) violations.push_back("pattern " + id + " has empty title");
        if (p.merged_from.empty()) violations.push_back("pattern " + id + " has empty merged_from");
    }
    // Dedup of (kind, from, to)
    std::set<std::string> seen;
    for (const Edge& e : edges_) {
        std::string key = edge_key(e.kind, e.from, e.to);
        if (!seen.insert(key).second) violations.push_back("duplicate edge triple: " + key);
    }
    return violations;
}

std::string KnowledgeGraph::to_json_string() const {
    json doc;
    doc["version"] = std::string(kFormatVersion);
    doc["counters"] = {{"proj", proj_counter_}, {"sem", sem_counter_},  {"pat", pat_counter_},
                       {"find", find_counter_}, {"edge", edge_counter_}};
    json nodes;
    json projects = json::object();
    for (const auto& [id, p] : projects_) {
        projects[id] = {{"name", p.name}, {"source_ref", p.source_ref}};
    }
    json semantics = json::object();
    for (const auto& [id, s] : semantics_) {
        semantics[id] = {{"title", s.title}, {"description", s.description},
                         {"merged_from", s.merged_from}};
    }
    json patterns = json::object();
    for (const auto& [id, p] : patterns_) {
        patterns[id] = {{"title", p.title}, {"description", p.description},
                        {"merged_from", p.merged_from}};
    }
    json findings = json::object();
    for (const auto& [id, f] : findings_) {
        findings[id] = {{"title", f.title}, {"severity", std::string(to_string(f.severity))},
                        {"body", f.body}};
    }
    nodes["projects"] = std::move(projects);
    nodes["semantics"] = std::move(semantics);
    nodes["patterns"] = std::move(patterns);
    nodes["findings"] = std::move(findings);
    doc["nodes"] = std::move(nodes);
    json edges = json::array();
    for (const Edge& e : edges_) {
        edges.push_back({{"id", e.id}, {"kind", std::string(to_string(e.kind))}, {"from", e.from},
                         {"to", e.to}, {"rationale", e.rationale}});
    }
    doc["edges"] = std::move(edges);
    doc["recency"] = {{"semantics", semantic_recency_}, {"patterns", pattern_recency_}};
    return doc.dump(2) + "\n";
}

KnowledgeGraph KnowledgeGraph::from_json_string(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(e.what(), e.byte);
    }
    try {
        if (!doc.contains("version") || doc.at("version").get<std::string>() != kFormatVersion) {
            throw UnsupportedVersion("knowledge graph format version mismatch");
        }
        KnowledgeGraph g;
        const json& counters = doc.at("counters");
        g.proj_counter_ = counters.at("proj").get<std::uint64_t>();
        g.sem_counter_ = counters.at("sem").get<std::uint64_t>();
        g.pat_counter_ = counters.at("pat").get<std::uint64_t>();
        g.find_counter_ = counters.at("find").get<std::uint64_t>();
        g.edge_counter_ = counters.at("edge").get<std::uint64_t>();
        const json& nodes = doc.at("nodes");
        for (const auto& [id, v] : nodes.at("projects").items()) {
            g.projects_.emplace(id, SolidityProjectNode{id, v.at("name").get<std::string>(),
                                                        v.at("source_ref").get<std::string>()});
        }
        for (const auto& [id, v] : nodes.at("semantics").items()) {
            DefiSemanticNode n{id, v.at("title").get<std::string>(),
                               v.at("description").get<std::string>(),
                               v.at("merged_from").get<std::vector<std::string>>()};
            for (const std::string& fp : n.merged_from) g.fingerprints_.emplace(fp, id);
            g.semantics_.emplace(id, std::move(n));
        }
        for (const auto& [id, v] : nodes.at("patterns").items()) {
            VulnerabilityPatternNode n{id, v.at("title").get<std::string>(),
                                       v.at("description").get<std::string>(),
                                       v.at("merged_from").get<std::vector<std::string>>()};
            for (const std::string& fp : n.merged_from) g.fingerprints_.emplace(fp, id);
            g.patterns_.emplace(id, std::move(n));
        }
        for (const auto& [id, v] : nodes.at("findings").items()) {
            auto sev = severity_from_string(v.at("severity").get<std::string>());
            if (!sev) throw ParseError("unknown severity for finding " + id, 0);
            AuditFindingNode n{id, v.at("title").get<std::string>(), *sev,
                               v.at("body").get<std::string>()};
            g.fingerprints_.emplace(content_fingerprint(n.title, n.body), id);
            g.findings_.emplace(id, std::move(n));
        }
        for (const json& e : doc.at("edges")) {
            auto kind = edge_kind_from_string(e.at("kind").get<std::string>());
            if (!kind) throw ParseError("unknown edge kind", 0);
            Edge edge{e.at("id").get<std::string>(), *kind, e.at("from").get<std::string>(),
                      e.at("to").get<std::string>(), e.at("rationale").get<std::string>()};
            g.check_endpoints(edge.kind, edge.from, edge.to);
            if (edge.kind == EdgeKind::Has) g.findings_with_has_.insert(edge.to);
            g.edge_index_.emplace(edge_key(edge.kind, edge.from, edge.to), g.edges_.size());
            g.edges_.push_back(std::move(edge));
        }
        g.semantic_recency_ =
            doc.at("recency").at("semantics").get<std::vector<std::string>>();
        g.pattern_recency_ = doc.at("recency").at("patterns").get<std::vector<std::string>>();
        return g;
    } catch (const json::exception& e) {
        throw ParseError(e.what(), 0);
    }
}

void KnowledgeGraph::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open for writing: " + path.string());
    out << to_json_string();
}

KnowledgeGraph KnowledgeGraph::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_json_string(buf.str());
}

bool KnowledgeGraph::structurally_equal(const KnowledgeGraph& other) const {
    auto edge_set = [](const std::vector<Edge>& es) {
        std::set<std::string> out;
        for (const Edge& e : es) {
            out.insert(edge_key(e.kind, e.from, e.to) + "|" + e.rationale);
        }
        return out;
    };
    auto eq_sem = [](const auto& a, const auto& b) {
        if (a.size() != b.size()) return false;
        for (const auto& [id, n] : a) {
            auto it = b.find(id);
            if (it == b.end() || it->second.title != n.title ||
                it->second.description != n.description || it->second.merged_from != n.merged_from)
                return false;
        }
        return true;
    };
    if (!eq_sem(semantics_, other.semantics_) || !eq_sem(patterns_, other.patterns_)) return false;
    if (projects_.size() != other.projects_.size()) return false;
    for (const auto& [id, p] : projects_) {
        auto it = other.projects_.find(id);
        if (it == other.projects_.end() || it->second.name != p.name ||
            it->second.source_ref != p.source_ref)
            return false;
    }
    if (findings_.size() != other.findings_.size()) return false;
    for (const auto& [id, f] : findings_) {
        auto it = other.findings_.find(id);
        if (it == other.findings_.end() || it->second.title != f.title ||
            it->second.severity != f.severity || it->second.body != f.body)
            return false;
    }
    return edge_set(edges_) == edge_set(other.edges_);
}

}  // namespace knowdit

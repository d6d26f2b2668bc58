#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <random>

#include "knowdit/errors.hpp"
#include "knowdit/graph.hpp"

using namespace knowdit;

namespace {

std::filesystem::path temp_file(const char* name) {
    return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("first insertion into an empty graph gets proj-000001") {
    KnowledgeGraph g;
    std::string id = g.add_project("uniswap-v2", "corpus/uniswap-v2");
    CHECK(id == "proj-000001");
    CHECK(g.projects().size() == 1);
}

TEST_CASE("semantic fingerprint duplicates return the existing id") {
    KnowledgeGraph g;
    std::string first = g.add_semantic("Swap token X to Y", "Constant product swap.");
    std::string second = g.add_semantic("Swap token X to Y", "Constant product swap.");
    CHECK(first == second);
    CHECK(g.semantics().size() == 1);

    // Normalization: case and whitespace do not make a new node.
    std::string third = g.add_semantic("swap  token X\tto Y", "  CONSTANT product   swap. ");
    CHECK(third == first);
    CHECK(g.semantics().size() == 1);
}

TEST_CASE("distinct semantics get strictly increasing ids") {
    KnowledgeGraph g;
    std::vector<std::string> ids;
    ids.push_back(g.add_semantic("a", "first"));
    ids.push_back(g.add_semantic("b", "second"));
    ids.push_back(g.add_semantic("c", "third"));
    CHECK(g.semantics().size() == 3);
    CHECK(ids[0] == "sem-000001");
    CHECK(ids[1] == "sem-000002");
    CHECK(ids[2] == "sem-000003");
    CHECK(std::is_sorted(ids.begin(), ids.end()));
}

TEST_CASE("a second Has edge into the same finding is rejected") {
    KnowledgeGraph g;
    std::string p1 = g.add_project("alpha", "r1");
    std::string p2 = g.add_project("beta", "r2");
    std::string f = g.add_finding("Missing auth check", Severity::High, "body");
    g.add_edge(EdgeKind::Has, p1, f);
    CHECK_THROWS_AS(g.add_edge(EdgeKind::Has, p2, f), SchemaViolation);
    CHECK(g.edge_count(EdgeKind::Has) == 1);
}

TEST_CASE("duplicate edge triples are idempotent no-ops") {
    KnowledgeGraph g;
    std::string p = g.add_project("alpha", "r");
    std::string s = g.add_semantic("lend", "supply assets for interest");
    std::string e1 = g.add_edge(EdgeKind::Contains, p, s);
    std::string e2 = g.add_edge(EdgeKind::Contains, p, s);
    CHECK(e1 == e2);
    CHECK(g.edges().size() == 1);
}

TEST_CASE("endpoint kinds are enforced per edge kind") {
    KnowledgeGraph g;
    std::string p = g.add_project("alpha", "r");
    std::string s = g.add_semantic("lend", "desc");
    std::string pat = g.add_pattern("rounding drift", "desc");
    CHECK_THROWS_AS(g.add_edge(EdgeKind::Contains, s, p), SchemaViolation);
    CHECK_THROWS_AS(g.add_edge(EdgeKind::MayIntroduce, p, pat), SchemaViolation);
    CHECK_THROWS_AS(g.add_edge(EdgeKind::BelongsTo, p, "NotABusiness"), SchemaViolation);
    CHECK_NOTHROW(g.add_edge(EdgeKind::BelongsTo, p, "Dexes"));
    CHECK_NOTHROW(g.add_edge(EdgeKind::Underlies, s, "Lending"));
    CHECK_THROWS_AS(g.add_edge(EdgeKind::Poses, s, "Reentrancy"), SchemaViolation);
    CHECK_NOTHROW(g.add_edge(EdgeKind::Poses, pat, "Reentrancy"));
}

TEST_CASE("MayIntroduce with rationale is retrievable via linked_patterns") {
    KnowledgeGraph g;
    std::string s = g.add_semantic("proportional shares", "shares follow the asset ratio");
    std::string pat = g.add_pattern("first depositor inflation", "donation skews the ratio");
    g.add_edge(EdgeKind::MayIntroduce, s, pat, "ratio can be skewed before first deposit");
    auto links = g.linked_patterns(s);
    REQUIRE(links.size() == 1);
    CHECK(links[0].first->id == pat);
    CHECK(links[0].second == "ratio can be skewed before first deposit");

    CHECK(g.linked_patterns(g.add_semantic("unlinked", "x")).empty());
    CHECK_THROWS_AS(g.linked_patterns("sem-999999"), NotFound);
}

TEST_CASE("linked_patterns matches a brute-force edge filter") {
    KnowledgeGraph g;
    std::string s = g.add_semantic("s", "d");
    std::vector<std::string> pats;
    for (int i = 0; i < 3; ++i) {
        pats.push_back(g.add_pattern("p" + std::to_string(i), "d" + std::to_string(i)));
        g.add_edge(EdgeKind::MayIntroduce, s, pats.back());
    }
    auto links = g.linked_patterns(s);
    std::set<std::string> got;
    for (const auto& [node, rationale] : links) got.insert(node->id);
    std::set<std::string> expected;
    for (const Edge& e : g.edges()) {
        if (e.kind == EdgeKind::MayIntroduce && e.from == s) expected.insert(e.to);
    }
    CHECK(got == expected);
    CHECK(links.size() == 3);
}

TEST_CASE("merge keeps the surviving id and unions merged_from") {
    KnowledgeGraph g;
    std::string s = g.add_semantic("Swap token X to token Y",
                                   "Uniswap V2 style constant product swap.");
    std::string survivor = g.merge_semantics(
        s, "Swap token X to token Y across ticks", "Uniswap V3 style concentrated swap.",
        "Swap between two tokens priced by a constant product model, with or without "
        "concentrated liquidity.");
    CHECK(survivor == s);
    const DefiSemanticNode* node = g.find_semantic(s);
    REQUIRE(node != nullptr);
    CHECK(node->merged_from.size() == 2);
    CHECK(node->description.find("constant product") != std::string::npos);

    // A three-token Curve-style swap stays distinct.
    std::string curve = g.add_semantic("Swap among three pooled stables",
                                       "StableSwap invariant over three tokens.");
    CHECK(curve != s);
    CHECK(g.semantics().size() == 2);
}

TEST_CASE("merging an identical candidate only grows merged_from by one") {
    KnowledgeGraph g;
    std::string s = g.add_semantic("lend", "supply assets for interest");
    const DefiSemanticNode* before = g.find_semantic(s);
    std::string desc = before->description;
    g.merge_semantics(s, "flash lend", "loan repaid within one transaction", desc);
    const DefiSemanticNode* after = g.find_semantic(s);
    CHECK(after->description == desc);
    CHECK(after->merged_from.size() == 2);
    // Re-merging the exact same candidate is a no-op on merged_from.
    g.merge_semantics(s, "flash lend", "loan repaid within one transaction", desc);
    CHECK(g.find_semantic(s)->merged_from.size() == 2);
}

TEST_CASE("merge preserves edges and accepts new Contains afterwards") {
    KnowledgeGraph g;
    std::string p1 = g.add_project("a", "r");
    std::string p2 = g.add_project("b", "r");
    std::string p3 = g.add_project("c", "r");
    std::string s = g.add_semantic("swap", "two-token swap");
    g.add_edge(EdgeKind::Contains, p1, s);
    g.add_edge(EdgeKind::Contains, p2, s);
    g.merge_semantics(s, "swap v3", "tick swap", "either style of two-token swap");
    g.add_edge(EdgeKind::Contains, p3, s);
    CHECK(g.edge_count(EdgeKind::Contains) == 3);
}

TEST_CASE("merge_semantics rejects wrong node kinds") {
    KnowledgeGraph g;
    std::string p = g.add_pattern("pat", "d");
    CHECK_THROWS_AS(g.merge_semantics(p, "t", "d", "s"), KindMismatch);
    CHECK_THROWS_AS(g.merge_semantics("sem-424242", "t", "d", "s"), NotFound);
    std::string s = g.add_semantic("sem", "d");
    CHECK_THROWS_AS(g.merge_patterns(s, "t", "d", "s"), KindMismatch);
}

TEST_CASE("query_semantics_by_business filters by Underlies edges") {
    KnowledgeGraph g;
    CHECK(g.query_semantics_by_business({BusinessType::Dexes}).empty());

    std::string s1 = g.add_semantic("swap", "d1");
    std::string s2 = g.add_semantic("borrow", "d2");
    g.add_edge(EdgeKind::Underlies, s1, "Dexes");
    g.add_edge(EdgeKind::Underlies, s2, "Lending");
    auto dex = g.query_semantics_by_business({BusinessType::Dexes});
    REQUIRE(dex.size() == 1);
    CHECK(dex[0]->id == s1);

    // A semantic underlying both queried types appears once.
    g.add_edge(EdgeKind::Underlies, s1, "Lending");
    auto both = g.query_semantics_by_business({BusinessType::Dexes, BusinessType::Lending});
    CHECK(both.size() == 2);
    std::set<std::string> ids;
    for (const auto* n : both) ids.insert(n->id);
    CHECK(ids == std::set<std::string>{s1, s2});
}

TEST_CASE("empty graph save/load round trip") {
    KnowledgeGraph g;
    KnowledgeGraph loaded = KnowledgeGraph::from_json_string(g.to_json_string());
    CHECK(g.structurally_equal(loaded));
    CHECK(loaded.to_json_string() == g.to_json_string());
}

TEST_CASE("random graph round trip preserves structure and bytes") {
    std::mt19937_64 rng(7);
    KnowledgeGraph g;
    std::vector<std::string> projects, semantics, patterns;
    for (int i = 0; i < 10; ++i) {
        projects.push_back(g.add_project("proj" + std::to_string(i), "ref" + std::to_string(i)));
    }
    for (int i = 0; i < 50; ++i) {
        semantics.push_back(
            g.add_semantic("sem title " + std::to_string(i), "desc " + std::to_string(rng())));
    }
    for (int i = 0; i < 40; ++i) {
        patterns.push_back(
            g.add_pattern("pat title " + std::to_string(i), "desc " + std::to_string(rng())));
    }
    for (int i = 0; i < 120; ++i) {
        std::string s = semantics[rng() % semantics.size()];
        switch (rng() % 4) {
            case 0: g.add_edge(EdgeKind::Contains, projects[rng() % projects.size()], s); break;
            case 1:
                g.add_edge(EdgeKind::Underlies, s,
                           std::string(to_string(kAllBusinessTypes[rng() % 13])));
                break;
            case 2:
                g.add_edge(EdgeKind::MayIntroduce, s, patterns[rng() % patterns.size()]);
                break;
            case 3:
                g.add_edge(EdgeKind::Poses, patterns[rng() % patterns.size()],
                           std::string(to_string(kAllAttackTypes[rng() % 7])));
                break;
        }
    }
    CHECK(g.validate().empty());

    std::string text = g.to_json_string();
    KnowledgeGraph loaded = KnowledgeGraph::from_json_string(text);
    CHECK(g.structurally_equal(loaded));
    CHECK(loaded.to_json_string() == text);

    auto path = temp_file("knowdit-test-graph.json");
    g.save(path);
    KnowledgeGraph from_disk = KnowledgeGraph::load(path);
    CHECK(g.structurally_equal(from_disk));
    std::filesystem::remove(path);
}

TEST_CASE("counters survive persistence so ids never collide") {
    KnowledgeGraph g;
    g.add_semantic("a", "1");
    g.add_semantic("b", "2");
    KnowledgeGraph loaded = KnowledgeGraph::from_json_string(g.to_json_string());
    CHECK(loaded.add_semantic("c", "3") == "sem-000003");
}

TEST_CASE("truncated document raises ParseError, bad version UnsupportedVersion") {
    KnowledgeGraph g;
    g.add_project("p", "r");
    std::string text = g.to_json_string();
    CHECK_THROWS_AS(KnowledgeGraph::from_json_string(text.substr(0, text.size() / 2)), ParseError);

    std::string versioned = text;
    std::size_t pos = versioned.find("\"version\": \"1\"");
    REQUIRE(pos != std::string::npos);
    versioned.replace(pos, 14, "\"version\": \"9\"");
    CHECK_THROWS_AS(KnowledgeGraph::from_json_string(versioned), UnsupportedVersion);
}

TEST_CASE("fingerprints are stable and prefix-tagged") {
    std::string fp = content_fingerprint("Title", "Description");
    CHECK(fp.rfind("fp-", 0) == 0);
    CHECK(fp.size() == 19);
    CHECK(fp == content_fingerprint("  title ", "DESCRIPTION"));
    CHECK(fp != content_fingerprint("title", "other"));
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "knowdit/fuzz_exec.hpp"
#include "knowdit/graph.hpp"
#include "knowdit/llm.hpp"

using namespace knowdit;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = KNOWDIT_FIXTURES_DIR;
const char kCli[] = KNOWDIT_CLI_PATH;

struct CmdResult {
    int code = -1;
    std::string output;
};

// Scrub provider/workspace variables so ambient configuration cannot leak in.
const char kCleanEnv[] =
    "env -u KNOWDIT_API_KEY -u KNOWDIT_BASE_URL -u KNOWDIT_WORKSPACE -u KNOWDIT_MOCK_SCRIPT "
    "-u KNOWDIT_MOCK_EXECUTOR_STORE -u KNOWDIT_BUDGET -u KNOWDIT_SEED ";

CmdResult run_cli(const std::string& args, const std::string& env_prefix = {}) {
    std::string cmd = kCleanEnv + env_prefix + " " + kCli + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    CmdResult result;
    char buf[4096];
    while (std::size_t n = std::fread(buf, 1, sizeof(buf), pipe)) result.output.append(buf, n);
    int status = pclose(pipe);
    result.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return result;
}

struct TempDir {
    fs::path root;
    explicit TempDir(const char* name) : root(fs::temp_directory_path() / name) {
        fs::remove_all(root);
        fs::create_directories(root);
    }
    ~TempDir() { fs::remove_all(root); }
};

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string mini_build_args(const fs::path& out) {
    return "kg build --manifest " + (kFixtures / "mini_corpus" / "manifest.json").string() +
           " --out " + out.string() + " --mock-script " +
           (kFixtures / "mini_corpus" / "transcript.json").string();
}

// The vault audit inputs: the prior-knowledge graph and a replay store keyed
// by the transcript's harness.
void write_vault_graph(const fs::path& path) {
    KnowledgeGraph g;
    std::string sem = g.add_semantic(
        "Proportional share vault accounting",
        "A vault pools one asset and mints depositor shares proportional to the pooled balance.");
    g.add_edge(EdgeKind::Underlies, sem, "Yield");
    std::string pat = g.add_pattern(
        "Share ratio inflation via untracked donation",
        "A seeded tiny share supply plus a direct donation makes later deposits truncate to "
        "zero shares.");
    g.add_edge(EdgeKind::Poses, pat, "Arithmetic");
    g.add_edge(EdgeKind::MayIntroduce, sem, pat, "shares minted against a donatable balance");
    g.save(path);
}

void write_replay_store(const fs::path& path) {
    auto script = MockProvider::load_script(kFixtures / "vault" / "audit_transcript.json");
    std::string reply;
    for (const auto& e : script) {
        if (e.template_name == "HarnessSynthesis") reply = e.reply;
    }
    REQUIRE_FALSE(reply.empty());
    std::string reasoning;
    nlohmann::json parsed;
    REQUIRE(split_reasoning_and_json(reply, reasoning, parsed));
    HarnessSource harness;
    for (const nlohmann::json& f : parsed["files"]) {
        harness.files.push_back({f["path"].get<std::string>(), f["content"].get<std::string>()});
    }
    harness.entry_contract = parsed["entry_contract"].get<std::string>();
    harness.handler_names = parsed["handlers"].get<std::vector<std::string>>();

    FuzzOutcome outcome;
    outcome.run_id = "vault-replay-1";
    outcome.wall_time_seconds = 9.0;
    FileCoverage fc;
    fc.covered_lines = {20, 21, 22, 23, 24, 25, 26, 27};
    fc.instrumentable_lines = 20;
    outcome.coverage.files.emplace("src/ShareVault.sol", fc);
    Violation v;
    v.oracle_id = "post-0";
    v.trace = {{"attacker", "ShareVault", "deposit", "1", "minted 1 share"},
               {"attacker", "VaultToken", "transfer", "vault, 1000000", "ok"},
               {"victim", "ShareVault", "deposit", "1000000", "minted 0 shares"}};
    v.state_diff = {{"ShareVault", "totalShares", "0", "1"},
                    {"ShareVault", "totalAssets", "0", "2000001"},
                    {"ShareVault", "sharesOf[victim]", "0", "0"}};
    outcome.violation = v;
    ReplayExecutor::record(path, harness.content_hash(), outcome);
}

std::string vault_audit_args(const fs::path& graph, const fs::path& store,
                             const fs::path& workspace) {
    return "audit run --project " + (kFixtures / "vault").string() + " --kg " + graph.string() +
           " --mock-script " + (kFixtures / "vault" / "audit_transcript.json").string() +
           " --mock-executor-store " + store.string() + " --workspace " + workspace.string() +
           " --budget 5";
}

}  // namespace

TEST_CASE("missing or unknown subcommands are usage errors") {
    CHECK(run_cli("").code == 1);
    CHECK(run_cli("frobnicate").code == 1);
    CHECK(run_cli("kg").code == 1);
}

TEST_CASE("kg build reports counts and writes a deterministic graph") {
    TempDir dir("knowdit-cli-build");
    CmdResult first = run_cli(mini_build_args(dir.root / "a.json"));
    CHECK(first.code == 0);
    CHECK(first.output.find("graph written to") != std::string::npos);
    CHECK(first.output.find("projects=3 semantics=2 patterns=2 findings=2 links=2") !=
          std::string::npos);

    CmdResult second = run_cli(mini_build_args(dir.root / "b.json"));
    CHECK(second.code == 0);
    CHECK(read_file(dir.root / "a.json") == read_file(dir.root / "b.json"));
}

TEST_CASE("kg stats prints one counter per line") {
    TempDir dir("knowdit-cli-stats");
    REQUIRE(run_cli(mini_build_args(dir.root / "g.json")).code == 0);
    CmdResult stats = run_cli("kg stats " + (dir.root / "g.json").string());
    CHECK(stats.code == 0);
    CHECK(stats.output ==
          "projects=3\nsemantics=2\npatterns=2\nfindings=2\nlinks=2\nedges=18\n");
}

TEST_CASE("kg query lists semantics with their linked patterns") {
    TempDir dir("knowdit-cli-query");
    REQUIRE(run_cli(mini_build_args(dir.root / "g.json")).code == 0);
    CmdResult query =
        run_cli("kg query " + (dir.root / "g.json").string() + " --business Dexes");
    CHECK(query.code == 0);
    CHECK(query.output.find("sem-000001  Two-token pool swap priced by reserves") !=
          std::string::npos);
    CHECK(query.output.find("  -> pat-000001") != std::string::npos);
    CHECK(query.output.find("  -> pat-000002") != std::string::npos);

    CmdResult lending =
        run_cli("kg query " + (dir.root / "g.json").string() + " --business Lending");
    CHECK(lending.code == 0);
    CHECK(lending.output.find("sem-000002") != std::string::npos);
    CHECK(lending.output.find("->") == std::string::npos);

    CmdResult bogus =
        run_cli("kg query " + (dir.root / "g.json").string() + " --business Casinos");
    CHECK(bogus.code == 1);
    CHECK(bogus.output.find("unknown business type") != std::string::npos);
}

TEST_CASE("missing inputs exit with the usage code and a clear message") {
    TempDir dir("knowdit-cli-missing");
    CmdResult build = run_cli("kg build --manifest " + (dir.root / "nope.json").string() +
                              " --out " + (dir.root / "g.json").string() +
                              " --mock-script x.json");
    CHECK(build.code == 1);
    CHECK(build.output.find("not found") != std::string::npos);
    CHECK(run_cli("kg stats " + (dir.root / "nope.json").string()).code == 1);
    CHECK(run_cli("audit report " + (dir.root / "nowhere").string()).code == 1);
}

TEST_CASE("a graph with an unsupported format version is an internal error") {
    TempDir dir("knowdit-cli-version");
    {
        std::ofstream out(dir.root / "g.json");
        out << "{\"version\": \"9\", \"nodes\": {}, \"edges\": []}\n";
    }
    CmdResult stats = run_cli("kg stats " + (dir.root / "g.json").string());
    CHECK(stats.code == 2);
    CHECK(stats.output.find("internal error") != std::string::npos);
}

TEST_CASE("audit run needs a provider and an executor") {
    TempDir dir("knowdit-cli-noprov");
    write_vault_graph(dir.root / "g.json");
    CmdResult no_provider =
        run_cli("audit run --project " + (kFixtures / "vault").string() + " --kg " +
                (dir.root / "g.json").string() + " --workspace " + (dir.root / "ws").string());
    CHECK(no_provider.code == 1);
    CHECK(no_provider.output.find("no provider configured") != std::string::npos);

    CmdResult no_forge =
        run_cli("audit run --project " + (kFixtures / "vault").string() + " --kg " +
                (dir.root / "g.json").string() + " --workspace " + (dir.root / "ws").string() +
                " --mock-script " + (kFixtures / "vault" / "audit_transcript.json").string());
    CHECK(no_forge.code == 1);
    CHECK(no_forge.output.find("forge not found") != std::string::npos);
}

TEST_CASE("a replayed vault audit confirms the finding and updates the graph") {
    TempDir dir("knowdit-cli-audit");
    write_vault_graph(dir.root / "g.json");
    write_replay_store(dir.root / "recorded_runs.json");

    CmdResult run = run_cli(
        vault_audit_args(dir.root / "g.json", dir.root / "recorded_runs.json", dir.root / "ws"));
    CHECK(run.code == 0);
    CHECK(run.output.find("confirmed findings: 1") != std::string::npos);
    CHECK(run.output.find("workspace: " + (dir.root / "ws").string()) != std::string::npos);
    CHECK(fs::exists(dir.root / "ws" / "report.md"));
    CHECK(fs::exists(dir.root / "ws" / "memory.log"));

    // The finding and the audited project were persisted back into the graph.
    CmdResult stats = run_cli("kg stats " + (dir.root / "g.json").string());
    CHECK(stats.code == 0);
    CHECK(stats.output ==
          "projects=1\nsemantics=1\npatterns=1\nfindings=1\nlinks=1\nedges=6\n");

    CmdResult report = run_cli("audit report " + (dir.root / "ws").string());
    CHECK(report.code == 0);
    CHECK(report.output.find("First depositor share inflation via direct donation") !=
          std::string::npos);
    CHECK(report.output.find("Severity (advisory): High") != std::string::npos);
    CHECK(report.output.find("post-0") != std::string::npos);
}

TEST_CASE("flags override environment which overrides the config file") {
    TempDir dir("knowdit-cli-precedence");
    write_vault_graph(dir.root / "g.json");
    write_replay_store(dir.root / "recorded_runs.json");
    fs::path ws_file = dir.root / "ws-file";
    fs::path ws_env = dir.root / "ws-env";
    fs::path ws_flag = dir.root / "ws-flag";
    {
        std::ofstream out(dir.root / "knowdit.conf");
        out << "workspace_root = " << ws_file.string() << "\n";
    }
    std::string base = "audit run --project " + (kFixtures / "vault").string() + " --kg " +
                       (dir.root / "g.json").string() + " --mock-script " +
                       (kFixtures / "vault" / "audit_transcript.json").string() +
                       " --mock-executor-store " + (dir.root / "recorded_runs.json").string() +
                       " --budget 5 --config " + (dir.root / "knowdit.conf").string();

    CmdResult from_file = run_cli(base);
    CHECK(from_file.code == 0);
    CHECK(from_file.output.find("workspace: " + ws_file.string()) != std::string::npos);
    CHECK(fs::exists(ws_file / "report.md"));

    write_vault_graph(dir.root / "g.json");  // reset the mutated graph
    CmdResult from_env = run_cli(base, "KNOWDIT_WORKSPACE=" + ws_env.string());
    CHECK(from_env.code == 0);
    CHECK(from_env.output.find("workspace: " + ws_env.string()) != std::string::npos);
    CHECK(fs::exists(ws_env / "report.md"));

    write_vault_graph(dir.root / "g.json");
    CmdResult from_flag =
        run_cli(base + " --workspace " + ws_flag.string(), "KNOWDIT_WORKSPACE=" + ws_env.string());
    CHECK(from_flag.code == 0);
    CHECK(from_flag.output.find("workspace: " + ws_flag.string()) != std::string::npos);
    CHECK(fs::exists(ws_flag / "report.md"));
}

TEST_CASE("unknown configuration keys are rejected") {
    TempDir dir("knowdit-cli-badconf");
    {
        std::ofstream out(dir.root / "knowdit.conf");
        out << "workspce_root = /tmp/x\n";
    }
    CmdResult result =
        run_cli("kg stats missing.json --config " + (dir.root / "knowdit.conf").string());
    CHECK(result.code == 1);
    CHECK(result.output.find("workspce_root") != std::string::npos);
}

#include "knowdit/config.hpp"

#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "knowdit/corpus.hpp"
#include "knowdit/errors.hpp"
#include "knowdit/fuzz_exec.hpp"
#include "knowdit/graph.hpp"
#include "knowdit/harness.hpp"
#include "knowdit/kg_builder.hpp"
#include "knowdit/orchestrator.hpp"

namespace knowdit {

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitInternal = 2;

// Wrong flags, missing files, malformed inputs: the operator's fault.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

const char kDefaultGeneralRules[] =
    "Respect the project's stated scope notes. Behavior documented as intended "
    "is not a finding. Issues requiring privileged keys, direct storage writes, "
    "or out-of-scope contracts are OutOfScope. A violation only explained by a "
    "wrong invariant or a broken harness is ProblematicSpecOrHarness.";

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open file: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void require_exists(const std::filesystem::path& path, const char* what) {
    if (!std::filesystem::exists(path)) {
        throw UsageError(std::string(what) + " not found: " + path.string());
    }
}

std::shared_ptr<Provider> make_provider(const Config& config) {
    if (!config.mock_provider_script.empty()) {
        require_exists(config.mock_provider_script, "mock script");
        return std::make_shared<MockProvider>(
            MockProvider::load_script(config.mock_provider_script));
    }
    if (config.api_key.empty()) {
        throw UsageError(
            "no provider configured: set KNOWDIT_API_KEY or pass --mock-script");
    }
    return std::make_shared<HttpProvider>(
        config.api_base, config.api_key,
        std::map<Role, std::string>{{Role::Reasoning, config.reasoning_model},
                                    {Role::Synthesis, config.synthesis_model}});
}

int cmd_kg_build(const Config& config, const std::filesystem::path& manifest_path,
                 const std::filesystem::path& out_path, double budget) {
    require_exists(manifest_path, "manifest");
    auto ledger = std::make_shared<UsageLedger>();
    Gateway gateway(make_provider(config), config.model_roles(), ledger);
    KnowledgeGraph graph;
    if (std::filesystem::exists(out_path)) graph = KnowledgeGraph::load(out_path);
    KgBuilder builder(gateway, graph, BudgetGuard{budget, ledger.get()},
                      KgBuilder::Options{config.chunk_units, 50});
    builder.build_graph(load_manifest(manifest_path));
    graph.save(out_path);
    std::cout << "graph written to " << out_path.string() << "\n"
              << "projects=" << graph.projects().size() << " semantics="
              << graph.semantics().size() << " patterns=" << graph.patterns().size()
              << " findings=" << graph.findings().size() << " links="
              << graph.edge_count(EdgeKind::MayIntroduce) << "\n";
    return kExitOk;
}

int cmd_kg_stats(const std::filesystem::path& graph_path) {
    require_exists(graph_path, "graph");
    KnowledgeGraph graph = KnowledgeGraph::load(graph_path);
    std::cout << "projects=" << graph.projects().size() << "\n"
              << "semantics=" << graph.semantics().size() << "\n"
              << "patterns=" << graph.patterns().size() << "\n"
              << "findings=" << graph.findings().size() << "\n"
              << "links=" << graph.edge_count(EdgeKind::MayIntroduce) << "\n"
              << "edges=" << graph.edges().size() << "\n";
    return kExitOk;
}

int cmd_kg_query(const std::filesystem::path& graph_path,
                 const std::vector<std::string>& business_names) {
    std::set<BusinessType> wanted;
    for (const std::string& name : business_names) {
        auto parsed = business_type_from_string(name);
        if (!parsed) throw UsageError("unknown business type: " + name);
        wanted.insert(*parsed);
    }
    require_exists(graph_path, "graph");
    KnowledgeGraph graph = KnowledgeGraph::load(graph_path);
    for (const DefiSemanticNode* semantic : graph.query_semantics_by_business(wanted)) {
        std::cout << semantic->id << "  " << semantic->title << "\n";
        for (const auto& [pattern, rationale] : graph.linked_patterns(semantic->id)) {
            std::cout << "  -> " << pattern->id << "  " << pattern->title << "\n";
        }
    }
    return kExitOk;
}

int cmd_audit_run(const Config& config, const std::filesystem::path& project_dir,
                  const std::filesystem::path& graph_path, double budget,
                  const std::string& rules_file) {
    require_exists(graph_path, "graph");
    require_exists(project_dir, "project directory");
    KnowledgeGraph graph = KnowledgeGraph::load(graph_path);
    ProjectCorpus corpus = load_project(project_dir);

    auto ledger = std::make_shared<UsageLedger>();
    Gateway gateway(make_provider(config), config.model_roles(), ledger);

    std::unique_ptr<CompilerToolchain> toolchain;
    std::unique_ptr<FuzzExecutor> executor;
    if (!config.mock_executor_store.empty()) {
        require_exists(config.mock_executor_store, "replay store");
        // Replay mode: recorded outcomes imply the harness compiled.
        toolchain = std::make_unique<ScriptedToolchain>(
            std::vector<CompileResult>{{true, "", "replay"}});
        executor = std::make_unique<ReplayExecutor>(config.mock_executor_store);
    } else {
        if (!ForgeToolchain::available()) {
            throw UsageError(
                "forge not found on PATH; install foundry or pass --mock-executor-store");
        }
        toolchain = std::make_unique<ForgeToolchain>();
        executor = std::make_unique<ForgeExecutor>();
    }

    OrchestratorConfig run_config;
    run_config.budget_usd = budget;
    run_config.fuzz_timeout_seconds = config.fuzz_timeout_seconds;
    run_config.max_repair_attempts = config.max_repair_attempts;
    run_config.regeneration_cap = config.regeneration_cap;
    run_config.seed = config.seed;
    run_config.general_rules =
        rules_file.empty() ? std::string(kDefaultGeneralRules) : read_text_file(rules_file);
    run_config.workspace_root = config.workspace_root;

    Orchestrator orchestrator(gateway, graph, *toolchain, *executor, run_config);
    AuditReportOut report = orchestrator.run_audit(corpus);
    graph.save(graph_path);

    std::cout << "confirmed findings: " << report.findings.size() << "\n"
              << "llm calls: " << report.ledger_entries << ", spend: $"
              << report.ledger_total_usd << "\n"
              << "workspace: " << run_config.workspace_root.string() << "\n";
    return kExitOk;
}

int cmd_audit_report(const std::filesystem::path& workspace) {
    std::filesystem::path report = workspace / "report.md";
    if (!std::filesystem::exists(report)) {
        throw UsageError("no report.md under " + workspace.string() +
                         "; run an audit first");
    }
    std::cout << read_text_file(report);
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"Knowledge-graph-driven smart contract auditor"};
    app.require_subcommand(1);

    std::string config_file;
    app.add_option("--config", config_file, "Flat key = value configuration file");

    std::string mock_script;
    std::string mock_store;
    std::optional<std::uint64_t> seed_flag;
    std::optional<std::string> workspace_flag;
    app.add_option("--mock-script", mock_script,
                   "Scripted provider replies (JSON); replaces the live LLM");
    app.add_option("--mock-executor-store", mock_store,
                   "Recorded fuzz outcomes (JSON); replaces forge");
    app.add_option("--seed", seed_flag, "Fuzzing seed");
    app.add_option("--workspace", workspace_flag, "Audit workspace directory");

    CLI::App* kg = app.add_subcommand("kg", "Knowledge graph operations");
    kg->require_subcommand(1);
    kg->fallthrough();

    std::string manifest_path, kg_out;
    std::optional<double> budget_flag;
    CLI::App* kg_build = kg->add_subcommand("build", "Build the graph from a corpus manifest");
    kg_build->fallthrough();
    kg_build->add_option("--manifest", manifest_path, "Manifest JSON")->required();
    kg_build->add_option("--out", kg_out, "Output graph path")->required();
    kg_build->add_option("--budget", budget_flag, "Spend ceiling in USD");

    std::string stats_path;
    CLI::App* kg_stats = kg->add_subcommand("stats", "Print node and edge counts");
    kg_stats->fallthrough();
    kg_stats->add_option("graph", stats_path, "Graph JSON path")->required();

    std::string query_path;
    std::vector<std::string> business_names;
    CLI::App* kg_query = kg->add_subcommand("query", "List semantics for business types");
    kg_query->fallthrough();
    kg_query->add_option("graph", query_path, "Graph JSON path")->required();
    kg_query->add_option("--business", business_names, "Business type name")->required();

    CLI::App* audit = app.add_subcommand("audit", "Audit a project");
    audit->require_subcommand(1);
    audit->fallthrough();

    std::string project_dir, audit_kg, rules_file;
    CLI::App* audit_run = audit->add_subcommand("run", "Run the full audit loop");
    audit_run->fallthrough();
    audit_run->add_option("--project", project_dir, "Project directory")->required();
    audit_run->add_option("--kg", audit_kg, "Graph JSON path")->required();
    audit_run->add_option("--budget", budget_flag, "Spend ceiling in USD");
    audit_run->add_option("--rules", rules_file, "Scope-review rules text file");

    std::string report_workspace;
    CLI::App* audit_report = audit->add_subcommand("report", "Print a finished audit report");
    audit_report->fallthrough();
    audit_report->add_option("workspace", report_workspace, "Audit workspace")->required();

    std::vector<const char*> argv;
    argv.push_back("knowdit");
    for (const std::string& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        Config config;
        if (!config_file.empty()) {
            require_exists(config_file, "config file");
            try {
                config = load_config_file(config_file, config);
            } catch (const Error& e) {
                throw UsageError(e.what());
            }
        }
        config = apply_env(std::move(config));
        if (!mock_script.empty()) config.mock_provider_script = mock_script;
        if (!mock_store.empty()) config.mock_executor_store = mock_store;
        if (seed_flag) config.seed = *seed_flag;
        if (workspace_flag) config.workspace_root = *workspace_flag;
        config.validate();
        double budget = budget_flag.value_or(config.budget_default_usd);
        if (budget <= 0) throw UsageError("--budget must be positive");

        if (kg_build->parsed()) return cmd_kg_build(config, manifest_path, kg_out, budget);
        if (kg_stats->parsed()) return cmd_kg_stats(stats_path);
        if (kg_query->parsed()) return cmd_kg_query(query_path, business_names);
        if (audit_run->parsed()) {
            return cmd_audit_run(config, project_dir, audit_kg, budget, rules_file);
        }
        if (audit_report->parsed()) return cmd_audit_report(report_workspace);
        throw UsageError("no subcommand given");
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const NotFound& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInternal;
    }
}

}  // namespace knowdit

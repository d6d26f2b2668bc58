#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <memory>
#include <random>

#include "knowdit/errors.hpp"
#include "knowdit/kg_builder.hpp"
#include "knowdit/llm.hpp"

using namespace knowdit;

namespace {

std::map<Role, ModelRole> test_roles(double in_cost = 0.001, double out_cost = 0.002) {
    return {
        {Role::Reasoning, {Role::Reasoning, "reasoner", in_cost, out_cost}},
        {Role::Synthesis, {Role::Synthesis, "synth", in_cost, out_cost}},
    };
}

struct Rig {
    std::shared_ptr<MockProvider> provider;
    std::shared_ptr<UsageLedger> ledger = std::make_shared<UsageLedger>();
    std::unique_ptr<Gateway> gateway;

    explicit Rig(std::vector<MockProvider::Entry> script,
                 std::map<Role, ModelRole> roles = test_roles()) {
        provider = std::make_shared<MockProvider>(std::move(script));
        gateway = std::make_unique<Gateway>(provider, std::move(roles), ledger);
    }
};

void accept_all(const nlohmann::json&) {}

}  // namespace

TEST_CASE("classification prompt contains all 13 business type names") {
    std::string prompt = Gateway::render_prompt(
        TemplateId::Classification,
        {{"CATEGORIES WITH EXAMPLES", business_type_catalog()},
         {"PROJECT SOURCE CODE/DOCUMENTS/REPORTS", "contract Pool {}"}});
    for (BusinessType t : kAllBusinessTypes) {
        CHECK(prompt.find(std::string(to_string(t))) != std::string::npos);
    }
    CHECK(prompt.find("{%") == std::string::npos);
    CHECK(prompt.find("contract Pool {}") != std::string::npos);
}

TEST_CASE("empty bindings render as the (none) sentinel") {
    std::string prompt = Gateway::render_prompt(
        TemplateId::Linking, {{"DEFI SEMANTICS", ""}, {"VULNERABILITY PATTERNS", "pat-000001"}});
    CHECK(prompt.find("(none)") != std::string::npos);
    CHECK(prompt.find("pat-000001") != std::string::npos);
}

TEST_CASE("missing bindings raise UnboundPlaceholder with the name") {
    try {
        Gateway::render_prompt(TemplateId::Extraction,
                               {{"CATEGORIES WITH EXAMPLES", "x"},
                                {"PROJECT SOURCE CODE/DOCUMENTS/REPORTS", "y"}});
        FAIL("expected UnboundPlaceholder");
    } catch (const UnboundPlaceholder& e) {
        CHECK(e.placeholder == "PREVIOUS SEMANTICS/VULNERABILITIES PATTERN");
    }
}

TEST_CASE("every template renders with full bindings and keeps no markers") {
    std::map<std::string, std::string> everything = {
        {"CATEGORIES WITH EXAMPLES", "c"},
        {"PROJECT SOURCE CODE/DOCUMENTS/REPORTS", "p"},
        {"PREVIOUS SEMANTICS/VULNERABILITIES PATTERN", "k"},
        {"DEFI SEMANTICS", "d"},
        {"VULNERABILITY PATTERNS", "v"},
        {"FEEDBACK", "f"},
        {"SPECIFICATION", "s"},
        {"HARNESS", "h"},
        {"COMPILER DIAGNOSTICS", "e"},
        {"VIOLATION", "x"},
        {"SCOPE NOTES", "n"},
        {"PROJECT SEMANTICS", "m"},
    };
    for (TemplateId id :
         {TemplateId::Classification, TemplateId::Extraction, TemplateId::Linking,
          TemplateId::SpecGeneration, TemplateId::HarnessSynthesis, TemplateId::HarnessRepair,
          TemplateId::Reflection, TemplateId::Mapping}) {
        std::string prompt = Gateway::render_prompt(id, everything);
        CHECK(prompt.find("{%") == std::string::npos);
        CHECK(prompt.find("%}") == std::string::npos);
    }
}

TEST_CASE("a valid scripted reply parses with one ledger entry") {
    Rig rig({{"Linking", -1, "The pool semantic matches.\n{\"links\": []}"}});
    StructuredReply reply = rig.gateway->complete_structured(
        TemplateId::Linking, Role::Reasoning, "prompt", accept_all,
        BudgetGuard{1.0, rig.ledger.get()}, "link");
    CHECK(reply.parsed.at("links").empty());
    CHECK(reply.reasoning.find("pool semantic") != std::string::npos);
    CHECK(rig.ledger->size() == 1);
    CHECK(rig.provider->call_count() == 1);
}

TEST_CASE("an invalid-then-valid script succeeds with 2 ledger entries") {
    Rig rig({{"Linking", 0, "no json here at all"},
             {"Linking", 1, "{\"links\": [{\"semantic\": \"sem-000001\"}]}"}});
    StructuredReply reply = rig.gateway->complete_structured(
        TemplateId::Linking, Role::Reasoning, "prompt", accept_all,
        BudgetGuard{1.0, rig.ledger.get()}, "link");
    CHECK(reply.parsed.at("links").size() == 1);
    CHECK(rig.ledger->size() == 2);
    // The retry carries a repair instruction on top of the original prompt.
    auto prompts = rig.provider->captured_prompts();
    REQUIRE(prompts.size() == 2);
    CHECK(prompts[1].second.find("# Repair") != std::string::npos);
    CHECK(prompts[1].second.rfind("prompt", 0) == 0);
}

TEST_CASE("two rejected replies raise MalformedOutput, never a third call") {
    Rig rig({{"Linking", -1, "still no json"}});
    CHECK_THROWS_AS(rig.gateway->complete_structured(TemplateId::Linking, Role::Reasoning,
                                                     "prompt", accept_all,
                                                     BudgetGuard{1.0, rig.ledger.get()}, "link"),
                    MalformedOutput);
    CHECK(rig.provider->call_count() == 2);
    CHECK(rig.ledger->size() == 2);
}

TEST_CASE("validator rejection feeds its message into the repair prompt") {
    Rig rig({{"Linking", -1, "{\"links\": 42}"}});
    auto validate = [](const nlohmann::json& doc) {
        if (!doc.at("links").is_array()) throw std::runtime_error("links must be an array");
    };
    CHECK_THROWS_AS(rig.gateway->complete_structured(TemplateId::Linking, Role::Reasoning,
                                                     "prompt", validate,
                                                     BudgetGuard{1.0, rig.ledger.get()}, "link"),
                    MalformedOutput);
    auto prompts = rig.provider->captured_prompts();
    REQUIRE(prompts.size() == 2);
    CHECK(prompts[1].second.find("links must be an array") != std::string::npos);
}

TEST_CASE("zero remaining budget blocks before any provider call") {
    Rig rig({{"Linking", -1, "{\"links\": []}"}});
    CHECK_THROWS_AS(rig.gateway->complete_structured(TemplateId::Linking, Role::Reasoning,
                                                     "prompt", accept_all,
                                                     BudgetGuard{0.0, rig.ledger.get()}, "link"),
                    BudgetExhausted);
    CHECK(rig.provider->call_count() == 0);
    CHECK(rig.ledger->size() == 0);
}

TEST_CASE("no provider call is ever issued once the ledger passes the limit") {
    Rig rig({{"Linking", -1, "{\"links\": []}"}});
    BudgetGuard guard{0.01, rig.ledger.get()};
    std::size_t completed = 0;
    try {
        for (int i = 0; i < 1000; ++i) {
            rig.gateway->complete_structured(TemplateId::Linking, Role::Reasoning, "p",
                                             accept_all, guard, "loop");
            ++completed;
        }
        FAIL("budget never tripped");
    } catch (const BudgetExhausted&) {
    }
    CHECK(rig.provider->call_count() == completed);
    CHECK(rig.ledger->total() >= 0.01);
    // One in-flight call may straddle the limit, never more.
    double per_call = rig.ledger->total() / static_cast<double>(rig.ledger->size());
    CHECK(rig.ledger->total() < 0.01 + per_call + 1e-12);
}

TEST_CASE("empty ledger totals zero and 10 fixed-cost calls total 0.10") {
    UsageLedger ledger;
    CHECK(ledger.total() == 0.0);
    for (int i = 0; i < 10; ++i) {
        ledger.append(UsageEntry{Role::Reasoning, 0, 0, 0.01, "fixed"});
    }
    CHECK(ledger.total() == doctest::Approx(0.10));
    CHECK(ledger.size() == 10);
}

TEST_CASE("mixed-role ledger total equals a brute-force token recomputation") {
    std::mt19937_64 rng(5);
    auto roles = test_roles();
    roles[Role::Synthesis].input_cost_per_token = 0.0005;
    roles[Role::Synthesis].output_cost_per_token = 0.004;

    std::vector<MockProvider::Entry> script;
    script.push_back({"Linking", -1, "{\"links\": []}", 0, 0});
    long total_prompt[2] = {0, 0}, total_completion[2] = {0, 0};
    for (int i = 0; i < 40; ++i) {
        MockProvider::Entry e{"Linking", i, "{\"links\": []}",
                              static_cast<long>(rng() % 5000),
                              static_cast<long>(rng() % 2000)};
        int which = i % 2;
        total_prompt[which] += e.prompt_tokens;
        total_completion[which] += e.completion_tokens;
        script.push_back(e);
    }
    Rig rig(script, roles);
    for (int i = 0; i < 40; ++i) {
        rig.gateway->complete_structured(TemplateId::Linking,
                                         i % 2 == 0 ? Role::Reasoning : Role::Synthesis, "p",
                                         accept_all, BudgetGuard{1e9, rig.ledger.get()}, "mix");
    }
    double expected = total_prompt[0] * roles[Role::Reasoning].input_cost_per_token +
                      total_completion[0] * roles[Role::Reasoning].output_cost_per_token +
                      total_prompt[1] * roles[Role::Synthesis].input_cost_per_token +
                      total_completion[1] * roles[Role::Synthesis].output_cost_per_token;
    CHECK(rig.ledger->total() == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("ledger total is monotone non-decreasing over a call sequence") {
    Rig rig({{"Linking", -1, "{\"links\": []}"}});
    double last = rig.ledger->total();
    for (int i = 0; i < 25; ++i) {
        rig.gateway->complete_structured(TemplateId::Linking, Role::Reasoning, "p", accept_all,
                                         BudgetGuard{1e9, rig.ledger.get()}, "mono");
        double now = rig.ledger->total();
        CHECK(now >= last);
        last = now;
    }
}

TEST_CASE("identical script and prompt yield identical replies across runs") {
    auto run_once = [] {
        Rig rig({{"Mapping", 0, "first\n{\"matches\": [{\"semantic\": \"sem-000001\"}]}"},
                 {"Mapping", -1, "later\n{\"matches\": []}"}});
        std::string out;
        for (int i = 0; i < 3; ++i) {
            out += rig.gateway
                       ->complete_structured(TemplateId::Mapping, Role::Reasoning, "same prompt",
                                             accept_all, BudgetGuard{1e9, rig.ledger.get()}, "det")
                       .raw;
            out += "|";
        }
        return out;
    };
    CHECK(run_once() == run_once());
}

TEST_CASE("mock scripts load from disk with ordinal fallback") {
    auto path = std::filesystem::temp_directory_path() / "knowdit-mock-script.json";
    std::ofstream(path) << R"([
        {"template": "Linking", "index": 0, "reply": "a\n{\"links\": []}"},
        {"template": "Linking", "index": -1, "reply": {"links": [{"x": 1}]}}
    ])";
    Rig rig({{"Linking", -1, "unused"}});
    auto provider = std::make_shared<MockProvider>(MockProvider::load_script(path));
    Completion first = provider->complete(TemplateId::Linking, Role::Reasoning, "p");
    Completion second = provider->complete(TemplateId::Linking, Role::Reasoning, "p");
    Completion third = provider->complete(TemplateId::Linking, Role::Reasoning, "p");
    CHECK(first.text.find("a\n") == 0);
    CHECK(second.text == third.text);
    CHECK(second.text.find("\"links\"") != std::string::npos);
    CHECK(provider->call_count() == 3);
    std::filesystem::remove(path);
}

TEST_CASE("a fenced json block is preferred over inline braces") {
    std::string reasoning;
    nlohmann::json parsed;
    std::string text =
        "Thinking about {not json}.\n```json\n{\"verdicts\": []}\n```\nDone.";
    REQUIRE(split_reasoning_and_json(text, reasoning, parsed));
    CHECK(parsed.contains("verdicts"));
    CHECK(reasoning.find("Thinking") != std::string::npos);
    CHECK_FALSE(split_reasoning_and_json("no payload anywhere", reasoning, parsed));
}

#include "knowdit/llm.hpp"

#include <fstream>
#include <sstream>

#include "knowdit/errors.hpp"

namespace knowdit {

using nlohmann::json;

namespace {

// Template bodies. Placeholder markers use the {%NAME%} form; every marker
// must be bound at render time.
const std::map<TemplateId, std::string>& template_bodies() {
    static const std::map<TemplateId, std::string> bodies = {
        {TemplateId::Classification,
         "# Task\n"
         "Classify the inputs below into one or more of these categories.\n"
         "{%CATEGORIES WITH EXAMPLES%}\n\n"
         "# Inputs\n"
         "{%PROJECT SOURCE CODE/DOCUMENTS/REPORTS%}\n\n"
         "# Instructions\n"
         "Read every input. Evaluate each function or audit finding against each category\n"
         "definition and its examples, ignoring project-specific details such as branding.\n"
         "For each category, write step-by-step technical reasoning about how the input\n"
         "aligns or conflicts with the category, then state your verdict.\n"
         "Finish with a JSON object: {\"verdicts\": [{\"category\": string,\n"
         "\"reasoning\": string, \"verdict\": boolean}]}.\n"},
        {TemplateId::Extraction,
         "# Task\n"
         "Summarize the inputs below into abstract entries of these categories.\n"
         "{%CATEGORIES WITH EXAMPLES%}\n\n"
         "# Inputs\n"
         "{%PROJECT SOURCE CODE/DOCUMENTS/REPORTS%}\n\n"
         "# Known entries\n"
         "{%PREVIOUS SEMANTICS/VULNERABILITIES PATTERN%}\n\n"
         "# Instructions\n"
         "Review every input. For each contract or audit finding, abstract its core\n"
         "mechanics and intent, stripping implementation detail, to form a generalized\n"
         "model following the examples. Compare each model against the known entries\n"
         "above, focusing strictly on the underlying abstract logic. Before deciding,\n"
         "explain which mechanical aspects overlap with an existing entry or why the core\n"
         "logic is unprecedented. Mark the item new when novel; when it overlaps, write a\n"
         "synthesized description covering both variations.\n"
         "Finish with a JSON object: {\"candidates\": [{\"title\": string,\n"
         "\"description\": string, \"reasoning\": string, \"merge_target\": string|null}]}.\n"},
        {TemplateId::Linking,
         "# Task\n"
         "Link each vulnerability pattern below to the DeFi semantics that can\n"
         "introduce it.\n\n"
         "# DeFi semantics\n"
         "{%DEFI SEMANTICS%}\n\n"
         "# Vulnerability patterns\n"
         "{%VULNERABILITY PATTERNS%}\n\n"
         "# Instructions\n"
         "For each vulnerability pattern, review each DeFi semantic and explain whether\n"
         "the semantic is prone to that vulnerability. Only emit a link when you are\n"
         "confident the semantic is closely related to the pattern, with your reasoning.\n"
         "Finish with a JSON object: {\"links\": [{\"semantic\": id, \"pattern\": id,\n"
         "\"reasoning\": string}]}.\n"},
        {TemplateId::SpecGeneration,
         "# Task\n"
         "Write a project-specific auditing specification for the semantic and\n"
         "vulnerability pattern below, as invariants over named contract state.\n\n"
         "# DeFi semantics\n"
         "{%DEFI SEMANTICS%}\n\n"
         "# Vulnerability patterns\n"
         "{%VULNERABILITY PATTERNS%}\n\n"
         "# Project\n"
         "{%PROJECT SOURCE CODE/DOCUMENTS/REPORTS%}\n\n"
         "# Prior feedback\n"
         "{%FEEDBACK%}\n\n"
         "# Instructions\n"
         "Produce three non-empty sections: initial_state (state after contract setup,\n"
         "with deployment directives naming contracts to deploy and accounts to fund),\n"
         "pre_vuln_state (state before the attack), and post_vuln_state (state after the\n"
         "vulnerability is triggered). Every invariant subject must name a contract and\n"
         "variable or accessor that occur in the project sources. Relations are one of\n"
         "Eq, Neq, Lt, Le, Gt, Ge, Within. If prior feedback is present, address it and\n"
         "change the specification accordingly.\n"
         "Finish with a JSON object: {\"initial_state\": {\"invariants\": [...],\n"
         "\"deploy\": [string], \"fund\": [string]}, \"pre_vuln_state\": [...],\n"
         "\"post_vuln_state\": [...], \"attack_narrative\": string} where each invariant\n"
         "is {\"contract\": string, \"variable\": string, \"qualifier\": string,\n"
         "\"relation\": string, \"bound\": string, \"description\": string}.\n"},
        {TemplateId::HarnessSynthesis,
         "# Task\n"
         "Synthesize a Foundry fuzzing harness for the auditing specification below.\n\n"
         "# Specification\n"
         "{%SPECIFICATION%}\n\n"
         "# Project\n"
         "{%PROJECT SOURCE CODE/DOCUMENTS/REPORTS%}\n\n"
         "# Instructions\n"
         "Encode the initial state as a setUp function that deploys the named contracts\n"
         "and funds the named accounts. Translate every pre-vuln and post-vuln invariant\n"
         "into a require statement oracle, each preceded by a comment of the form\n"
         "'// oracle: <invariant-id>'. Provide handler functions as thin wrappers over a\n"
         "few external calls that exercise the semantic. Do not modify project sources.\n"
         "Finish with a JSON object: {\"files\": [{\"path\": string, \"content\":\n"
         "string}], \"entry_contract\": string, \"handlers\": [string]}.\n"},
        {TemplateId::HarnessRepair,
         "# Task\n"
         "The harness below failed to compile. Repair it.\n\n"
         "# Harness\n"
         "{%HARNESS%}\n\n"
         "# Compiler diagnostics\n"
         "{%COMPILER DIAGNOSTICS%}\n\n"
         "# Instructions\n"
         "Fix the compilation errors while keeping setUp, every oracle require with its\n"
         "'// oracle: <invariant-id>' comment, and the handlers intact.\n"
         "Finish with a JSON object: {\"files\": [{\"path\": string, \"content\":\n"
         "string}], \"entry_contract\": string, \"handlers\": [string],\n"
         "\"patch_summary\": string}.\n"},
        {TemplateId::Reflection,
         "# Task\n"
         "Decide whether the fuzzing violation below is a real vulnerability.\n\n"
         "# Specification\n"
         "{%SPECIFICATION%}\n\n"
         "# Violation\n"
         "{%VIOLATION%}\n\n"
         "# Project scope notes\n"
         "{%SCOPE NOTES%}\n\n"
         "# Instructions\n"
         "Compare the execution trace and state changes with the specification. If they\n"
         "match the attack narrative and post-vuln invariants, the violation is a\n"
         "candidate true finding; then review the scope notes and general rules and mark\n"
         "it OutOfScope when excluded. Reverts from intended guards (such as onlyOwner)\n"
         "are ExpectedBehavior. Violations caused by incomplete setup or wrong\n"
         "assumptions in the specification or harness are ProblematicSpecOrHarness.\n"
         "Finish with a JSON object: {\"verdict\": \"TrueFinding\"|\"ExpectedBehavior\"|\n"
         "\"ProblematicSpecOrHarness\"|\"OutOfScope\", \"reasoning\": string,\n"
         "\"title\": string, \"severity\": \"High\"|\"Medium\"}.\n"},
        {TemplateId::Mapping,
         "# Task\n"
         "Match the project's extracted semantics against the known DeFi semantics.\n\n"
         "# Project semantics\n"
         "{%PROJECT SEMANTICS%}\n\n"
         "# Known DeFi semantics\n"
         "{%DEFI SEMANTICS%}\n\n"
         "# Instructions\n"
         "For each project semantic, explain which known semantic (if any) describes the\n"
         "same economic mechanism, then emit the matches.\n"
         "Finish with a JSON object: {\"matches\": [{\"semantic\": id, \"reasoning\":\n"
         "string}]}.\n"},
    };
    return bodies;
}

long approx_tokens(const std::string& text) {
    return static_cast<long>(text.size() / 4) + 1;
}

}  // namespace

std::string_view to_string(TemplateId id) {
    switch (id) {
        case TemplateId::Classification: return "Classification";
        case TemplateId::Extraction: return "Extraction";
        case TemplateId::Linking: return "Linking";
        case TemplateId::SpecGeneration: return "SpecGeneration";
        case TemplateId::HarnessSynthesis: return "HarnessSynthesis";
        case TemplateId::HarnessRepair: return "HarnessRepair";
        case TemplateId::Reflection: return "Reflection";
        case TemplateId::Mapping: return "Mapping";
    }
    return "?";
}

std::optional<TemplateId> template_id_from_string(std::string_view name) {
    for (TemplateId id :
         {TemplateId::Classification, TemplateId::Extraction, TemplateId::Linking,
          TemplateId::SpecGeneration, TemplateId::HarnessSynthesis, TemplateId::HarnessRepair,
          TemplateId::Reflection, TemplateId::Mapping}) {
        if (to_string(id) == name) return id;
    }
    return std::nullopt;
}

std::string_view to_string(Role r) {
    return r == Role::Reasoning ? "Reasoning" : "Synthesis";
}

void UsageLedger::append(UsageEntry entry) {
    std::lock_guard lock(mutex_);
    total_ += entry.cost_usd;
    entries_.push_back(std::move(entry));
}

double UsageLedger::total() const {
    std::lock_guard lock(mutex_);
    return total_;
}

std::vector<UsageEntry> UsageLedger::entries() const {
    std::lock_guard lock(mutex_);
    return entries_;
}

std::size_t UsageLedger::size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

MockProvider::MockProvider(std::vector<Entry> script) {
    for (Entry& e : script) {
        std::string name = e.template_name;
        by_template_[name][e.index] = std::move(e);
    }
}

std::vector<MockProvider::Entry> MockProvider::load_script(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open mock script: " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError("mock script: " + std::string(e.what()), e.byte);
    }
    std::vector<Entry> script;
    for (const json& item : doc) {
        Entry e;
        e.template_name = item.at("template").get<std::string>();
        e.index = item.value("index", -1);
        e.reply = item.at("reply").is_string() ? item.at("reply").get<std::string>()
                                               : item.at("reply").dump();
        e.prompt_tokens = item.value("prompt_tokens", -1L);
        e.completion_tokens = item.value("completion_tokens", -1L);
        script.push_back(std::move(e));
    }
    return script;
}

MockProvider MockProvider::from_file(const std::filesystem::path& path) {
    return MockProvider(load_script(path));
}

Completion MockProvider::complete(TemplateId template_id, Role, const std::string& prompt) {
    std::lock_guard lock(mutex_);
    std::string name{to_string(template_id)};
    int ordinal = ordinals_[name]++;
    ++calls_;
    captured_.emplace_back(template_id, prompt);
    auto tpl_it = by_template_.find(name);
    if (tpl_it == by_template_.end()) {
        throw ProviderError("mock script has no entries for template " + name);
    }
    auto entry_it = tpl_it->second.find(ordinal);
    if (entry_it == tpl_it->second.end()) entry_it = tpl_it->second.find(-1);
    if (entry_it == tpl_it->second.end()) {
        throw ProviderError("mock script has no entry for " + name + "#" +
                            std::to_string(ordinal));
    }
    const Entry& e = entry_it->second;
    Completion c;
    c.text = e.reply;
    c.prompt_tokens = e.prompt_tokens >= 0 ? e.prompt_tokens : approx_tokens(prompt);
    c.completion_tokens = e.completion_tokens >= 0 ? e.completion_tokens : approx_tokens(e.reply);
    return c;
}

std::size_t MockProvider::call_count() const {
    std::lock_guard lock(mutex_);
    return calls_;
}

std::vector<std::pair<TemplateId, std::string>> MockProvider::captured_prompts() const {
    std::lock_guard lock(mutex_);
    return captured_;
}

double BudgetGuard::remaining() const {
    if (!ledger) return limit_usd;
    return limit_usd - ledger->total();
}

Gateway::Gateway(std::shared_ptr<Provider> provider, std::map<Role, ModelRole> roles,
                 std::shared_ptr<UsageLedger> ledger)
    : provider_(std::move(provider)), roles_(std::move(roles)), ledger_(std::move(ledger)) {}

std::string Gateway::render_prompt(TemplateId id,
                                   const std::map<std::string, std::string>& bindings) {
    const std::string& body = template_bodies().at(id);
    std::string out;
    out.reserve(body.size());
    std::size_t pos = 0;
    while (pos < body.size()) {
        std::size_t open = body.find("{%", pos);
        if (open == std::string::npos) {
            out.append(body, pos, std::string::npos);
            break;
        }
        out.append(body, pos, open - pos);
        std::size_t close = body.find("%}", open + 2);
        if (close == std::string::npos) throw Error("malformed template: unterminated placeholder");
        std::string name = body.substr(open + 2, close - open - 2);
        auto it = bindings.find(name);
        if (it == bindings.end()) throw UnboundPlaceholder(name);
        out.append(it->second.empty() ? "(none)" : it->second);
        pos = close + 2;
    }
    return out;
}

bool split_reasoning_and_json(const std::string& text, std::string& reasoning, json& parsed) {
    // Prefer a fenced ```json block; otherwise take the first suffix that
    // parses as a JSON document.
    std::size_t fence = text.rfind("```json");
    if (fence != std::string::npos) {
        std::size_t start = text.find('\n', fence);
        std::size_t end = text.find("```", fence + 7);
        if (start != std::string::npos && end != std::string::npos && end > start) {
            std::string payload = text.substr(start + 1, end - start - 1);
            if (json::accept(payload)) {
                parsed = json::parse(payload);
                reasoning = text.substr(0, fence);
                return true;
            }
        }
    }
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] != '{' && text[i] != '[') continue;
        std::string suffix = text.substr(i);
        // Trim trailing whitespace.
        while (!suffix.empty() && std::isspace(static_cast<unsigned char>(suffix.back()))) {
            suffix.pop_back();
        }
        if (json::accept(suffix)) {
            parsed = json::parse(suffix);
            reasoning = text.substr(0, i);
            return true;
        }
    }
    return false;
}

StructuredReply Gateway::complete_structured(TemplateId template_id, Role role,
                                             const std::string& prompt,
                                             const ReplyValidator& validate,
                                             const BudgetGuard& guard,
                                             const std::string& purpose) {
    auto role_it = roles_.find(role);
    if (role_it == roles_.end()) throw Error("no model configured for role");
    const ModelRole& model = role_it->second;

    std::string attempt_prompt = prompt;
    std::string last_error;
    for (int attempt = 0; attempt < 2; ++attempt) {
        if (guard.remaining() <= 0.0) {
            throw BudgetExhausted("remaining budget " + std::to_string(guard.remaining()) +
                                  " of " + std::to_string(guard.limit_usd) + " USD");
        }
        Completion c = provider_->complete(template_id, role, attempt_prompt);
        UsageEntry usage;
        usage.role = role;
        usage.prompt_tokens = c.prompt_tokens;
        usage.completion_tokens = c.completion_tokens;
        usage.cost_usd = c.prompt_tokens * model.input_cost_per_token +
                         c.completion_tokens * model.output_cost_per_token;
        usage.purpose = purpose;
        ledger_->append(std::move(usage));

        StructuredReply reply;
        reply.raw = c.text;
        if (!split_reasoning_and_json(c.text, reply.reasoning, reply.parsed)) {
            last_error = "no parseable JSON payload in reply";
        } else {
            try {
                validate(reply.parsed);
                return reply;
            } catch (const std::exception& e) {
                last_error = e.what();
            }
        }
        attempt_prompt = prompt +
                         "\n\n# Repair\nYour previous reply was rejected: " + last_error +
                         "\nReply again and finish with a valid JSON payload matching the "
                         "required schema exactly.\n";
    }
    throw MalformedOutput("structured reply rejected twice: " + last_error);
}

}  // namespace knowdit

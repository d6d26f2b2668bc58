#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace knowdit {

enum class TemplateId {
    Classification,
    Extraction,
    Linking,
    SpecGeneration,
    HarnessSynthesis,
    HarnessRepair,
    Reflection,
    Mapping,
};

std::string_view to_string(TemplateId id);
std::optional<TemplateId> template_id_from_string(std::string_view name);

// Reasoning handles classification/extraction/spec/reflection; Synthesis
// handles harness synthesis and repair (a cheaper model in production).
enum class Role { Reasoning, Synthesis };

std::string_view to_string(Role r);

struct ModelRole {
    Role role = Role::Reasoning;
    std::string model_name;
    double input_cost_per_token = 0.0;   // USD
    double output_cost_per_token = 0.0;  // USD
};

struct UsageEntry {
    Role role = Role::Reasoning;
    long prompt_tokens = 0;
    long completion_tokens = 0;
    double cost_usd = 0.0;
    std::string purpose;
};

// Append-only cost ledger; appends are atomic and totally ordered.
class UsageLedger {
public:
    void append(UsageEntry entry);
    double total() const;
    std::vector<UsageEntry> entries() const;
    std::size_t size() const;

private:
    mutable std::mutex mutex_;
    std::vector<UsageEntry> entries_;
    double total_ = 0.0;
};

struct Completion {
    std::string text;
    long prompt_tokens = 0;
    long completion_tokens = 0;
};

class Provider {
public:
    virtual ~Provider() = default;
    virtual Completion complete(TemplateId template_id, Role role, const std::string& prompt) = 0;
};

// Deterministic scripted provider. The script maps (template, ordinal) to a
// reply; index -1 serves as the fallback for any ordinal of that template.
// Identical (template, bindings, script) always yields identical replies.
class MockProvider : public Provider {
public:
    struct Entry {
        std::string template_name;
        int index = -1;  // -1 = fallback
        std::string reply;
        long prompt_tokens = -1;      // -1 = derive from prompt length
        long completion_tokens = -1;  // -1 = derive from reply length
    };

    explicit MockProvider(std::vector<Entry> script);
    static std::vector<Entry> load_script(const std::filesystem::path& path);
    static MockProvider from_file(const std::filesystem::path& path);

    Completion complete(TemplateId template_id, Role role, const std::string& prompt) override;
    std::size_t call_count() const;
    // Prompts seen so far, for asserting what was fed to the model.
    std::vector<std::pair<TemplateId, std::string>> captured_prompts() const;

private:
    mutable std::mutex mutex_;
    std::map<std::string, std::map<int, Entry>> by_template_;
    std::map<std::string, int> ordinals_;
    std::size_t calls_ = 0;
    std::vector<std::pair<TemplateId, std::string>> captured_;
};

// OpenAI-compatible chat-completions client, configured via environment:
// KNOWDIT_API_KEY, KNOWDIT_BASE_URL.
class HttpProvider : public Provider {
public:
    HttpProvider(std::string base_url, std::string api_key,
                 std::map<Role, std::string> model_names);
    Completion complete(TemplateId template_id, Role role, const std::string& prompt) override;

private:
    std::string base_url_;
    std::string api_key_;
    std::map<Role, std::string> model_names_;
};

struct BudgetGuard {
    double limit_usd = 0.0;
    const UsageLedger* ledger = nullptr;
    double remaining() const;
};

struct StructuredReply {
    std::string raw;
    nlohmann::json parsed;
    std::string reasoning;  // chain-of-thought body preceding the verdict
};

// Throws (any std::exception) when the parsed record does not satisfy the
// per-call schema; the message is fed back in the repair retry.
using ReplyValidator = std::function<void(const nlohmann::json&)>;

class Gateway {
public:
    Gateway(std::shared_ptr<Provider> provider, std::map<Role, ModelRole> roles,
            std::shared_ptr<UsageLedger> ledger);

    // Literal placeholder substitution; an empty bound value renders as the
    // "(none)" sentinel. Throws UnboundPlaceholder if a placeholder of the
    // template has no binding.
    static std::string render_prompt(TemplateId id,
                                     const std::map<std::string, std::string>& bindings);

    // Issues a completion, accounts usage, and parses the trailing JSON
    // record out of the reply. On validation failure, exactly one retry with
    // a repair instruction appended; a second failure raises MalformedOutput.
    // The budget guard is checked before every provider call.
    StructuredReply complete_structured(TemplateId template_id, Role role,
                                        const std::string& prompt, const ReplyValidator& validate,
                                        const BudgetGuard& guard, const std::string& purpose);

    UsageLedger& ledger() { return *ledger_; }
    const UsageLedger& ledger() const { return *ledger_; }
    std::shared_ptr<UsageLedger> ledger_ptr() const { return ledger_; }

private:
    std::shared_ptr<Provider> provider_;
    std::map<Role, ModelRole> roles_;
    std::shared_ptr<UsageLedger> ledger_;
};

// Extracts the JSON payload from a reply whose reasoning precedes the
// verdict. Returns false when no parseable JSON is present.
bool split_reasoning_and_json(const std::string& text, std::string& reasoning,
                              nlohmann::json& parsed);

}  // namespace knowdit

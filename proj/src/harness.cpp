#include "knowdit/harness.hpp"

#include <cstdlib>
#include <fstream>

#include "json.hpp"
#include "knowdit/errors.hpp"
#include "subprocess.hpp"

namespace knowdit {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::uint64_t fnv1a(std::string_view data) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

void validate_harness_shape(const json& parsed) {
    if (!parsed.is_object() || !parsed.contains("files") || !parsed["files"].is_array() ||
        parsed["files"].empty()) {
        throw std::runtime_error("expected an object with a non-empty \"files\" array");
    }
    for (const json& f : parsed["files"]) {
        if (!f.contains("path") || !f["path"].is_string() || !f.contains("content") ||
            !f["content"].is_string()) {
            throw std::runtime_error("each file needs \"path\" and \"content\" strings");
        }
    }
    if (!parsed.contains("entry_contract") || !parsed["entry_contract"].is_string()) {
        throw std::runtime_error("missing \"entry_contract\"");
    }
    if (!parsed.contains("handlers") || !parsed["handlers"].is_array()) {
        throw std::runtime_error("missing \"handlers\" array");
    }
}

HarnessSource harness_from_json(const json& parsed) {
    HarnessSource h;
    for (const json& f : parsed["files"]) {
        h.files.push_back({f["path"].get<std::string>(), f["content"].get<std::string>()});
    }
    h.entry_contract = parsed["entry_contract"].get<std::string>();
    h.handler_names = parsed["handlers"].get<std::vector<std::string>>();
    return h;
}

std::string corpus_text(const ProjectCorpus& corpus) {
    std::string out;
    for (const CorpusDocument& doc : corpus.documents) {
        out += "--- " + doc.path + " ---\n" + doc.text + "\n";
    }
    return out;
}

std::size_t count_occurrences(const std::string& haystack, const std::string& needle) {
    std::size_t count = 0, pos = 0;
    while ((pos = haystack.find(needle, pos)) != std::string::npos) {
        ++count;
        pos += needle.size();
    }
    return count;
}

}  // namespace

std::string HarnessSource::combined_text() const {
    std::string out;
    for (const HarnessFile& f : files) {
        out += "// file: " + f.path + "\n" + f.content + "\n";
    }
    return out;
}

std::string HarnessSource::content_hash() const {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a(combined_text())));
    return buf;
}

std::vector<std::string> structural_check(const HarnessSource& harness,
                                          const AuditSpecification& spec) {
    std::vector<std::string> violations;
    std::string text = harness.combined_text();

    if (text.find("setUp") == std::string::npos) {
        violations.push_back("harness lacks a setUp function");
    }
    if (harness.handler_names.empty()) {
        violations.push_back("harness declares no handlers");
    }

    // Oracle tags must map 1:1 to the pre/post-vuln invariants.
    std::vector<const StateInvariant*> oracles;
    for (const auto& inv : spec.pre_vuln_state) oracles.push_back(&inv);
    for (const auto& inv : spec.post_vuln_state) oracles.push_back(&inv);
    for (const StateInvariant* inv : oracles) {
        std::size_t n = count_occurrences(text, "// oracle: " + inv->id);
        if (n == 0) {
            violations.push_back("invariant " + inv->id + " has no oracle in the harness");
        } else if (n > 1) {
            violations.push_back("invariant " + inv->id + " has " + std::to_string(n) +
                                 " oracles; expected exactly one");
        }
    }
    std::size_t tags = count_occurrences(text, "// oracle: ");
    if (tags > oracles.size()) {
        violations.push_back("harness contains oracle tags not backed by any invariant");
    }
    std::size_t asserts = count_occurrences(text, "require(") + count_occurrences(text, "assert");
    if (asserts < oracles.size()) {
        violations.push_back("fewer require/assert statements than invariants");
    }
    return violations;
}

HarnessSource synthesize_harness(Gateway& gateway, const BudgetGuard& guard,
                                 const AuditSpecification& spec, const ProjectCorpus& corpus) {
    if (spec.initial_state.empty()) {
        throw PreconditionViolation("specification has no initial state");
    }
    std::string base_prompt = Gateway::render_prompt(
        TemplateId::HarnessSynthesis,
        {{"SPECIFICATION", spec.canonical_text()},
         {"PROJECT SOURCE CODE/DOCUMENTS/REPORTS", corpus_text(corpus)}});

    std::string prompt = base_prompt;
    std::vector<std::string> last_violations;
    for (int attempt = 0; attempt < 2; ++attempt) {
        StructuredReply reply =
            gateway.complete_structured(TemplateId::HarnessSynthesis, Role::Synthesis, prompt,
                                        validate_harness_shape, guard, "synthesize_harness");
        HarnessSource harness = harness_from_json(reply.parsed);
        last_violations = structural_check(harness, spec);
        if (last_violations.empty()) return harness;

        std::string guidance = "\n\n# Structural problems\n";
        for (const std::string& v : last_violations) guidance += "- " + v + "\n";
        guidance += "Fix these problems and reply again.\n";
        prompt = base_prompt + guidance;
    }
    std::string detail;
    for (const std::string& v : last_violations) detail += v + "; ";
    throw StructuralCheckFailed("harness rejected after retry: " + detail);
}

void write_workspace(const fs::path& dir, const ProjectCorpus& corpus,
                     const HarnessSource& harness) {
    fs::create_directories(dir / "src");
    fs::create_directories(dir / "test");
    {
        std::ofstream toml(dir / "foundry.toml");
        toml << "[profile.default]\nsrc = \"src\"\ntest = \"test\"\nout = \"out\"\n";
    }
    for (const CorpusDocument& doc : corpus.documents) {
        if (doc.kind != DocumentKind::Source) continue;
        fs::path target = dir / "src" / fs::path(doc.path).filename();
        std::ofstream out(target, std::ios::binary);
        out << doc.text;
    }
    for (const HarnessFile& f : harness.files) {
        fs::path target = dir / "test" / f.path;
        fs::create_directories(target.parent_path());
        std::ofstream out(target, std::ios::binary);
        out << f.content;
    }
}

CompileResult ForgeToolchain::compile(const fs::path& workspace) {
    auto res = detail::run_command(workspace, "forge build");
    CompileResult out;
    out.ok = res.exit_code == 0;
    out.diagnostics = res.output;
    if (out.ok) out.artifact_ref = (workspace / "out").string();
    return out;
}

bool ForgeToolchain::available() {
    return std::system("command -v forge >/dev/null 2>&1") == 0;
}

CompileResult ScriptedToolchain::compile(const fs::path&) {
    if (results_.empty()) return {};
    const CompileResult& r = results_[std::min(calls_, results_.size() - 1)];
    ++calls_;
    return r;
}

CompileOutcome compile_and_repair(Gateway& gateway, const BudgetGuard& guard,
                                  CompilerToolchain& toolchain, const fs::path& workspace,
                                  const ProjectCorpus& corpus, HarnessSource harness,
                                  int max_attempts,
                                  const std::function<void(const RepairAttempt&)>& on_failure) {
    int failures = 0;
    while (true) {
        write_workspace(workspace, corpus, harness);
        CompileResult result = toolchain.compile(workspace);
        if (result.ok) {
            return CompiledHarness{workspace, result.artifact_ref, std::move(harness)};
        }
        ++failures;
        if (failures > max_attempts) {
            // max_attempts repairs were already spent; report the cap.
            return Blocked{max_attempts};
        }
        std::string prompt = Gateway::render_prompt(
            TemplateId::HarnessRepair, {{"HARNESS", harness.combined_text()},
                                        {"COMPILER DIAGNOSTICS", result.diagnostics}});
        std::string patch_summary;
        try {
            StructuredReply reply =
                gateway.complete_structured(TemplateId::HarnessRepair, Role::Synthesis, prompt,
                                            validate_harness_shape, guard, "repair_harness");
            harness = harness_from_json(reply.parsed);
            patch_summary = reply.parsed.value("patch_summary", std::string{});
        } catch (const Error&) {
            if (on_failure) on_failure({failures, result.diagnostics, "repair call failed"});
            return Blocked{failures};
        }
        if (on_failure) on_failure({failures, result.diagnostics, patch_summary});
    }
}

}  // namespace knowdit

#include "knowdit/fuzz_exec.hpp"

#include <chrono>
#include <fstream>
#include <sstream>

#include "knowdit/errors.hpp"
#include "subprocess.hpp"

namespace knowdit {

using nlohmann::json;
namespace fs = std::filesystem;

double CoverageMap::ratio() const {
    std::size_t covered = 0, total = 0;
    for (const auto& [path, fc] : files) {
        covered += fc.covered_lines.size();
        total += static_cast<std::size_t>(fc.instrumentable_lines);
    }
    if (total == 0) return 0.0;
    return static_cast<double>(covered) / static_cast<double>(total);
}

json CoverageMap::to_json() const {
    json files_doc = json::object();
    for (const auto& [path, fc] : files) {
        files_doc[path] = {{"covered", std::vector<int>(fc.covered_lines.begin(),
                                                        fc.covered_lines.end())},
                           {"total", fc.instrumentable_lines}};
    }
    return {{"files", files_doc}, {"semantic_tag", semantic_tag}};
}

CoverageMap CoverageMap::from_json(const json& doc) {
    CoverageMap map;
    map.semantic_tag = doc.value("semantic_tag", std::string{});
    for (const auto& [path, fc] : doc.at("files").items()) {
        FileCoverage cov;
        for (int line : fc.at("covered").get<std::vector<int>>()) cov.covered_lines.insert(line);
        cov.instrumentable_lines = fc.at("total").get<int>();
        map.files.emplace(path, std::move(cov));
    }
    return map;
}

json Violation::to_json() const {
    json trace_doc = json::array();
    for (const CallRecord& r : trace) {
        trace_doc.push_back({{"caller", r.caller},
                             {"callee", r.callee},
                             {"function", r.function},
                             {"arguments", r.arguments},
                             {"outcome", r.outcome}});
    }
    json diff_doc = json::array();
    for (const StateChange& s : state_diff) {
        diff_doc.push_back({{"contract", s.contract},
                            {"variable", s.variable},
                            {"before", s.before},
                            {"after", s.after}});
    }
    return {{"oracle_id", oracle_id}, {"trace", trace_doc}, {"state_diff", diff_doc}};
}

Violation Violation::from_json(const json& doc) {
    Violation v;
    v.oracle_id = doc.at("oracle_id").get<std::string>();
    for (const json& r : doc.at("trace")) {
        v.trace.push_back({r.value("caller", std::string{}), r.value("callee", std::string{}),
                           r.value("function", std::string{}), r.value("arguments", std::string{}),
                           r.value("outcome", std::string{})});
    }
    for (const json& s : doc.at("state_diff")) {
        v.state_diff.push_back({s.value("contract", std::string{}),
                                s.value("variable", std::string{}),
                                s.value("before", std::string{}), s.value("after", std::string{})});
    }
    return v;
}

json FuzzOutcome::to_json() const {
    json doc = {{"coverage", coverage.to_json()},
                {"wall_time_seconds", wall_time_seconds},
                {"run_id", run_id}};
    if (violation) doc["violation"] = violation->to_json();
    return doc;
}

FuzzOutcome FuzzOutcome::from_json(const json& doc) {
    FuzzOutcome out;
    out.coverage = CoverageMap::from_json(doc.at("coverage"));
    out.wall_time_seconds = doc.value("wall_time_seconds", 0.0);
    out.run_id = doc.value("run_id", std::string{});
    if (doc.contains("violation")) out.violation = Violation::from_json(doc["violation"]);
    return out;
}

std::int64_t ProportionalShareFixture::shares_for_deposit(std::int64_t amount) const {
    if (total_assets == 0) return amount;  // bootstrap mints 1:1
    __int128 numerator = static_cast<__int128>(amount) * total_shares;
    return static_cast<std::int64_t>(numerator / total_assets);
}

void ProportionalShareFixture::deposit(std::int64_t amount, std::int64_t& minted_out) {
    minted_out = shares_for_deposit(amount);
    total_shares += minted_out;
    total_assets += amount;
}

void ProportionalShareFixture::donate(std::int64_t amount) {
    total_assets += amount;
}

CoverageMap parse_coverage(const std::string& lcov_text) {
    CoverageMap map;
    std::istringstream in(lcov_text);
    std::string line;
    std::size_t lineno = 0;
    std::string current_file;
    auto fail = [&](const std::string& what) -> ParseError {
        return ParseError("lcov line " + std::to_string(lineno) + ": " + what, lineno);
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.rfind("TN:", 0) == 0 || line.rfind("FN", 0) == 0 ||
            line.rfind("BR", 0) == 0) {
            continue;  // test names and function/branch records are ignored
        }
        if (line.rfind("SF:", 0) == 0) {
            current_file = line.substr(3);
            map.files[current_file];
            continue;
        }
        if (line == "end_of_record") {
            current_file.clear();
            continue;
        }
        if (line.rfind("DA:", 0) == 0) {
            if (current_file.empty()) throw fail("DA record outside a source file section");
            std::size_t comma = line.find(',');
            if (comma == std::string::npos) throw fail("malformed DA record");
            int lineno_val, hits;
            try {
                lineno_val = std::stoi(line.substr(3, comma - 3));
                hits = std::stoi(line.substr(comma + 1));
            } catch (const std::exception&) {
                throw fail("malformed DA record");
            }
            FileCoverage& fc = map.files[current_file];
            ++fc.instrumentable_lines;
            if (hits > 0) fc.covered_lines.insert(lineno_val);
            continue;
        }
        if (line.rfind("LF:", 0) == 0) {
            if (current_file.empty()) throw fail("LF record outside a source file section");
            try {
                map.files[current_file].instrumentable_lines = std::stoi(line.substr(3));
            } catch (const std::exception&) {
                throw fail("malformed LF record");
            }
            continue;
        }
        if (line.rfind("LH:", 0) == 0) {
            if (current_file.empty()) throw fail("LH record outside a source file section");
            continue;  // implied by the DA records
        }
        throw fail("unrecognized record \"" + line + "\"");
    }
    return map;
}

CoverageMap merge_coverage(const CoverageMap& old_map, const CoverageMap& new_map) {
    if (!old_map.semantic_tag.empty() && !new_map.semantic_tag.empty() &&
        old_map.semantic_tag != new_map.semantic_tag) {
        throw AttributionMismatch("cannot merge coverage for " + old_map.semantic_tag + " and " +
                                  new_map.semantic_tag);
    }
    CoverageMap out = old_map;
    if (out.semantic_tag.empty()) out.semantic_tag = new_map.semantic_tag;
    for (const auto& [path, fc] : new_map.files) {
        FileCoverage& target = out.files[path];
        target.covered_lines.insert(fc.covered_lines.begin(), fc.covered_lines.end());
        target.instrumentable_lines = std::max(target.instrumentable_lines,
                                               fc.instrumentable_lines);
    }
    return out;
}

FuzzOutcome ForgeExecutor::run(const CompiledHarness& compiled, int timeout_seconds,
                               std::uint64_t seed) {
    if (timeout_seconds <= 0) throw PreconditionViolation("timeout must be > 0");
    auto start = std::chrono::steady_clock::now();

    std::string test_cmd = "timeout " + std::to_string(timeout_seconds) +
                           "s forge test --match-contract '" + compiled.source.entry_contract +
                           "' --fuzz-seed " + std::to_string(seed) + " -vvvv";
    auto test_res = detail::run_command(compiled.workspace, test_cmd);

    std::string cov_cmd = "timeout " + std::to_string(timeout_seconds) +
                          "s forge coverage --report lcov --report-file lcov.info";
    auto cov_res = detail::run_command(compiled.workspace, cov_cmd);

    FuzzOutcome outcome;
    outcome.run_id = compiled.source.content_hash() + "-" + std::to_string(seed);
    std::ifstream lcov(compiled.workspace / "lcov.info");
    if (lcov) {
        std::ostringstream buf;
        buf << lcov.rdbuf();
        outcome.coverage = parse_coverage(buf.str());
    } else if (test_res.exit_code == 124) {
        throw RunFailed("fuzz run timed out with no coverage harvested");
    }

    bool test_failed = test_res.output.find("FAIL") != std::string::npos;
    if (test_res.exit_code != 0 && !test_failed && test_res.exit_code != 124) {
        throw ToolchainCrash("forge test exited with code " +
                             std::to_string(test_res.exit_code) + ": " + test_res.output);
    }
    (void)cov_res;

    if (test_failed) {
        Violation v;
        std::size_t pos = test_res.output.find("oracle: ");
        if (pos != std::string::npos) {
            std::size_t end = test_res.output.find_first_of("\"\n", pos + 8);
            v.oracle_id = test_res.output.substr(pos + 8, end - pos - 8);
        }
        // Best-effort trace reconstruction from the verbose test output:
        // lines of the form  Caller::function(args) ... [outcome].
        std::istringstream trace_in(test_res.output);
        std::string line;
        while (std::getline(trace_in, line)) {
            std::size_t sep = line.find("::");
            if (sep == std::string::npos) continue;
            std::size_t paren = line.find('(', sep);
            if (paren == std::string::npos) continue;
            CallRecord rec;
            std::size_t name_start = line.find_last_of(" \t", sep);
            rec.callee = line.substr(name_start + 1, sep - name_start - 1);
            rec.function = line.substr(sep + 2, paren - sep - 2);
            std::size_t close = line.rfind(')');
            if (close != std::string::npos && close > paren) {
                rec.arguments = line.substr(paren + 1, close - paren - 1);
            }
            v.trace.push_back(std::move(rec));
        }
        outcome.violation = std::move(v);
    }

    outcome.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return outcome;
}

ReplayExecutor::ReplayExecutor(const fs::path& store_path) {
    std::ifstream in(store_path);
    if (!in) throw Error("cannot open replay store: " + store_path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError("replay store: " + std::string(e.what()), e.byte);
    }
    for (const auto& [hash, outcome] : doc.items()) recorded_[hash] = outcome;
}

FuzzOutcome ReplayExecutor::run(const CompiledHarness& compiled, int timeout_seconds,
                                std::uint64_t) {
    if (timeout_seconds <= 0) throw PreconditionViolation("timeout must be > 0");
    auto it = recorded_.find(compiled.source.content_hash());
    if (it == recorded_.end()) {
        throw ToolchainCrash("no recorded outcome for harness hash " +
                             compiled.source.content_hash());
    }
    return FuzzOutcome::from_json(it->second);
}

void ReplayExecutor::record(const fs::path& store_path, const std::string& harness_hash,
                            const FuzzOutcome& outcome) {
    json doc = json::object();
    std::ifstream in(store_path);
    if (in) doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) doc = json::object();
    doc[harness_hash] = outcome.to_json();
    std::ofstream out(store_path);
    out << doc.dump(2) << "\n";
}

}  // namespace knowdit

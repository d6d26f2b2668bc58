#include "knowdit/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "knowdit/errors.hpp"

namespace knowdit {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

bool in_directory_named(const fs::path& rel, std::initializer_list<const char*> names) {
    for (auto it = rel.begin(); it != std::prev(rel.end()); ++it) {
        std::string part = lower(it->string());
        for (const char* n : names) {
            if (part == n) return true;
        }
    }
    return false;
}

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n#");
    if (b == std::string::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

// Pulls the bodies of markdown sections titled "Scope" or "Out of scope".
std::string extract_scope_notes(const std::string& readme) {
    std::istringstream in(readme);
    std::string line, notes;
    bool capturing = false;
    while (std::getline(in, line)) {
        bool heading = !line.empty() && line[0] == '#';
        if (heading) {
            std::string title = lower(trim(line));
            capturing = (title == "scope" || title == "out of scope");
            if (capturing) notes += trim(line) + "\n";
            continue;
        }
        if (capturing) notes += line + "\n";
    }
    return notes;
}

}  // namespace

std::string_view to_string(DocumentKind k) {
    switch (k) {
        case DocumentKind::Source: return "Source";
        case DocumentKind::Readme: return "Readme";
        case DocumentKind::Doc: return "Doc";
        case DocumentKind::Test: return "Test";
    }
    return "?";
}

ProjectCorpus load_project(const fs::path& path) {
    if (!fs::is_directory(path)) throw PreconditionViolation(path.string() + " is not a directory");
    ProjectCorpus corpus;
    corpus.name = path.filename().string();

    std::vector<CorpusDocument> readmes, rest;
    for (const auto& entry : fs::recursive_directory_iterator(path)) {
        if (!entry.is_regular_file()) continue;
        fs::path rel = fs::relative(entry.path(), path);
        std::string filename = lower(entry.path().filename().string());
        std::string ext = lower(entry.path().extension().string());

        CorpusDocument doc;
        doc.path = rel.generic_string();
        bool is_test_dir = in_directory_named(rel, {"test", "tests"});
        if (filename.rfind("readme", 0) == 0) {
            doc.kind = DocumentKind::Readme;
        } else if (ext == ".sol") {
            doc.kind = is_test_dir ? DocumentKind::Test : DocumentKind::Source;
        } else if (in_directory_named(rel, {"docs", "doc"}) || ext == ".md") {
            doc.kind = DocumentKind::Doc;
        } else {
            continue;  // binaries, configs, etc. are not fed to the pipeline
        }
        doc.text = read_file(entry.path());
        (doc.kind == DocumentKind::Readme ? readmes : rest).push_back(std::move(doc));
    }
    auto by_path = [](const CorpusDocument& a, const CorpusDocument& b) { return a.path < b.path; };
    std::sort(readmes.begin(), readmes.end(), by_path);
    std::sort(rest.begin(), rest.end(), by_path);

    bool has_source = std::any_of(rest.begin(), rest.end(), [](const CorpusDocument& d) {
        return d.kind == DocumentKind::Source;
    });
    if (!has_source) throw EmptyProject("no Solidity sources under " + path.string());

    for (const auto& r : readmes) corpus.scope_notes += extract_scope_notes(r.text);
    corpus.documents = std::move(readmes);
    corpus.documents.insert(corpus.documents.end(), std::make_move_iterator(rest.begin()),
                            std::make_move_iterator(rest.end()));
    return corpus;
}

std::vector<Chunk> chunk_corpus(const ProjectCorpus& corpus, std::size_t max_chunk_units) {
    if (max_chunk_units == 0) throw PreconditionViolation("max_chunk_units must be > 0");
    std::vector<Chunk> chunks;
    for (const CorpusDocument& doc : corpus.documents) {
        std::size_t index = 0;
        std::string current;
        auto flush = [&] {
            if (current.empty()) return;
            chunks.push_back(Chunk{doc.path, index++, std::move(current)});
            current.clear();
        };
        std::size_t pos = 0;
        while (pos < doc.text.size()) {
            std::size_t nl = doc.text.find('\n', pos);
            std::size_t end = (nl == std::string::npos) ? doc.text.size() : nl + 1;
            std::string_view line(doc.text.data() + pos, end - pos);
            if (line.size() > max_chunk_units) {
                // Oversized line: hard split.
                flush();
                for (std::size_t off = 0; off < line.size(); off += max_chunk_units) {
                    current.assign(line.substr(off, max_chunk_units));
                    flush();
                }
            } else {
                if (current.size() + line.size() > max_chunk_units) flush();
                current.append(line);
            }
            pos = end;
        }
        flush();
    }
    return chunks;
}

AuditReport load_report(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open findings file: " + path.string());
    AuditReport report;
    report.project_name = path.stem().string();
    std::string line;
    std::size_t lineno = 0;
    std::size_t offset = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t line_offset = offset;
        offset += line.size() + 1;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError("findings record " + std::to_string(lineno) + ": " + e.what(),
                             line_offset + e.byte);
        }
        std::string severity;
        std::string title;
        try {
            title = rec.at("title").get<std::string>();
            severity = rec.at("severity").get<std::string>();
        } catch (const json::exception& e) {
            throw ParseError("findings record " + std::to_string(lineno) + ": " + e.what(),
                             line_offset);
        }
        if (severity == "QA") continue;  // style/gas notes never enter the pipeline
        auto sev = severity_from_string(severity);
        if (!sev) {
            throw ParseError("findings record " + std::to_string(lineno) + " (\"" + title +
                                 "\"): unknown severity \"" + severity + "\"",
                             line_offset);
        }
        report.findings.push_back(
            ReportFinding{std::move(title), *sev, rec.value("body", std::string{})});
    }
    return report;
}

}  // namespace knowdit

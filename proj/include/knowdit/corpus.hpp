#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "knowdit/taxonomy.hpp"

namespace knowdit {

enum class DocumentKind { Source, Readme, Doc, Test };

std::string_view to_string(DocumentKind k);

struct CorpusDocument {
    std::string path;  // relative to the project root
    DocumentKind kind = DocumentKind::Source;
    std::string text;
};

struct ProjectCorpus {
    std::string name;
    std::vector<CorpusDocument> documents;  // README first, then path-lexicographic
    std::string scope_notes;                // Scope / Out of scope sections of the README
};

struct Chunk {
    std::string origin;  // document path
    std::size_t index = 0;
    std::string text;
};

struct ReportFinding {
    std::string title;
    Severity severity = Severity::Medium;
    std::string body;
};

struct AuditReport {
    std::string project_name;
    std::vector<ReportFinding> findings;  // QA entries already dropped
};

// Walks a project tree: every *.sol file becomes a Source document, README*
// becomes Readme, docs/** become Doc, test directories are tagged Test.
// Throws EmptyProject when no Solidity file is found.
ProjectCorpus load_project(const std::filesystem::path& path);

// Splits each document into chunks of at most max_chunk_units characters,
// preferring line boundaries. Chunks never span documents; concatenating a
// document's chunks in index order reproduces the document.
std::vector<Chunk> chunk_corpus(const ProjectCorpus& corpus, std::size_t max_chunk_units);

// Reads a JSON-lines findings file ({title, severity, body} per line),
// keeping High/Medium in file order and dropping QA. An unknown severity
// label raises ParseError naming the record.
AuditReport load_report(const std::filesystem::path& path);

}  // namespace knowdit

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mlkg {

// Raised for malformed corpus files and bundles that fail validation.
class CorpusError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct DocumentRecord {
    std::string doc_id;
    std::string title;
    std::string text;
    bool operator==(const DocumentRecord&) const = default;
};

struct ChunkRecord {
    std::string chunk_id;
    std::string doc_id;
    std::size_t position = 0;
    std::string text;
    bool operator==(const ChunkRecord&) const = default;
};

struct TripleRecord {
    std::string subject;
    std::string predicate;
    std::string object;
    std::string chunk_id;
    std::string doc_id;
    bool operator==(const TripleRecord&) const = default;
};

struct CorpusBundle {
    std::vector<DocumentRecord> documents;
    std::vector<ChunkRecord> chunks;
    std::vector<TripleRecord> triples;
    bool operator==(const CorpusBundle&) const = default;
};

// Lowercase (ASCII), trim, collapse internal whitespace runs to one space.
// Throws CorpusError("empty entity") when nothing is left.
std::string normalize_entity(std::string_view surface);

// Same transformation without the emptiness check (used for predicates).
std::string normalize_text(std::string_view surface);

// Lists every invariant violation; empty iff the bundle is well formed.
std::vector<std::string> validate_bundle(const CorpusBundle& bundle);

// Reads a line-delimited corpus file (one JSON object per line with a
// "kind" of document, chunk or triple). Throws CorpusError with the line
// number on malformed input, or with the violations on invalid bundles.
CorpusBundle parse_corpus(const std::string& path);
CorpusBundle parse_corpus_text(std::string_view text);

// Inverse of parse_corpus_text: documents, then chunks, then triples.
std::string serialize_corpus(const CorpusBundle& bundle);

}  // namespace mlkg

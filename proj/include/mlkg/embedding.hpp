#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mlkg/graph.hpp"
#include "mlkg/matrix.hpp"

namespace mlkg {

class EmbeddingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Unit-norm raw text embedding of dimension D.
using RawEmbedding = std::vector<double>;

// Either signed feature hashing (words plus character 3-grams) or a table
// of precomputed vectors keyed by exact text.
class EmbeddingSource {
public:
    static EmbeddingSource hashed(std::uint64_t seed, std::size_t dim);
    // Loads {"key": ..., "vector": [...]} lines; vectors are L2-normalized.
    static EmbeddingSource from_file(const std::string& path, std::size_t dim);
    static EmbeddingSource from_table(std::unordered_map<std::string, RawEmbedding> table, std::size_t dim);

    bool is_hashed() const { return table_ == nullptr; }
    std::size_t dim() const { return dim_; }
    std::uint64_t seed() const { return seed_; }
    // Stable description used in run manifests and config hashes.
    std::string describe() const;

    RawEmbedding embed(std::string_view text) const;

private:
    EmbeddingSource(std::uint64_t seed, std::size_t dim,
                    std::shared_ptr<const std::unordered_map<std::string, RawEmbedding>> table)
        : seed_(seed), dim_(dim), table_(std::move(table)) {}

    std::uint64_t seed_ = 0;
    std::size_t dim_ = 0;
    std::shared_ptr<const std::unordered_map<std::string, RawEmbedding>> table_;
    std::string file_path_;
};

inline constexpr std::size_t kMinEmbeddingDim = 8;

RawEmbedding embed_text(const EmbeddingSource& source, std::string_view text);

// Hashed features of `text` before accumulation: (bucket, sign) pairs.
struct HashedFeature {
    std::size_t bucket;
    int sign;
};
std::vector<HashedFeature> hashed_features(std::string_view text, std::uint64_t seed, std::size_t dim);

// Text embedded for each node: entity name, chunk text, title + " " + body.
std::string document_embedding_text(const DocumentNode& d);

struct RawGraphEmbeddings {
    Matrix entities;   // |O| x D
    Matrix chunks;     // |C| x D
    Matrix documents;  // |D| x D
};

RawGraphEmbeddings embed_graph(const EmbeddingSource& source, const MultiLKG& g);

}  // namespace mlkg

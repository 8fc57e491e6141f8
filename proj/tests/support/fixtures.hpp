#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mlkg/corpus.hpp"
#include "mlkg/graph.hpp"
#include "mlkg/model.hpp"
#include "mlkg/training.hpp"

namespace mlkg::testing {

// 1 doc, chunks (c0, c1), triple (a, r, b) in c0.
CorpusBundle toy_bundle();

// 2 entities joined by one triple: a -r-> b, inside d0/c0.
CorpusBundle two_entity_bundle();

// 1 entity, 1 chunk, 1 document (the triple is a self-loop).
CorpusBundle one_of_each_bundle();

struct RandomBundleShape {
    std::size_t max_documents = 4;
    std::size_t max_chunks_per_document = 3;
    std::size_t max_triples = 6;
    std::size_t entity_pool = 8;
};

// Valid random bundle; at most entity_pool entities, so node counts per
// level stay bounded by the shape.
CorpusBundle random_bundle(std::uint64_t seed, const RandomBundleShape& shape = {});

// Path of `length` documents, each with one chunk and one triple
// (e_i, r, e_{i+1}).
CorpusBundle path_bundle(std::size_t length);

// Every square tensor is the identity, every 2n x n key matrix is [I; I],
// biases are zero and norm gains are one. W_in is the identity when D = n.
QsgnnParameters identity_parameters(const ModelConfig& config);

// Pronounceable made-up word, distinct per index.
std::string pseudo_word(std::size_t index, std::uint64_t salt = 0);

// Twelve documents with disjoint vocabularies except for the six bridge
// entities that link document 2i to 2i+1.
CorpusBundle overfit_corpus();
// 30 questions from overfit_corpus(): every 2-hop question plus 1-hop
// questions in generation order.
std::vector<TrainingExample> overfit_examples(const MultiLKG& graph, std::size_t negatives, std::uint64_t seed);

struct DistractorSpec {
    std::size_t documents = 60;
    std::size_t chunks_per_document = 3;
    std::size_t entity_pool = 90;
    std::size_t relations = 8;
    std::uint64_t seed = 0;
};

// Documents of a few single-triple chunks drawn from a shared entity and
// relation pool, so every document shares words with many others.
CorpusBundle distractor_corpus(const DistractorSpec& spec);

// Temporary directory removed on destruction.
class TempDir {
public:
    TempDir();
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::string& path() const { return path_; }
    std::string file(const std::string& name) const { return path_ + "/" + name; }

private:
    std::string path_;
};

}  // namespace mlkg::testing

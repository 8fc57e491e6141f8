#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mlkg/embedding.hpp"
#include "mlkg/graph.hpp"
#include "mlkg/training.hpp"

namespace mlkg {

struct SyntheticQuestion {
    int hop = 1;
    std::string question_text;
    std::string answer;
    std::vector<std::string> support_doc_ids;  // one per hop
    std::vector<std::size_t> provenance;       // indices into MultiLKG::triples()
};

// Two triples in different documents where the object of the first is the
// subject of the second.
struct RelationChain {
    std::size_t first = 0;   // triple index
    std::size_t second = 0;  // triple index
    std::uint32_t bridge = 0;
};

// Two questions per distinct (subject, predicate, object, document):
// "which entity <v> <o>?" (answer s) and "<s> <v> which entity?" (answer o).
std::vector<SyntheticQuestion> gen_one_hop(const MultiLKG& graph);

// Every chain in deterministic order (bridge, first, second), no cap.
// Triples repeated within a document are counted once.
std::vector<RelationChain> enumerate_chains(const MultiLKG& graph);

struct TwoHopOptions {
    // Chains kept per bridge entity; 0 keeps all.
    std::size_t cap_per_bridge = 10;
    std::uint64_t seed = 0;
};

// Two questions per chain (s1, v1, e, v2, o2): mask s1 or mask o2, both
// supported by the two documents.
std::vector<SyntheticQuestion> gen_two_hop(const MultiLKG& graph, const TwoHopOptions& options = {});

// Attaches hard negatives and shuffles with the seed.
std::vector<TrainingExample> emit_examples(const std::vector<SyntheticQuestion>& questions, const MultiLKG& graph,
                                           const EmbeddingSource& source, std::size_t negatives_k,
                                           std::uint64_t seed);

}  // namespace mlkg

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mlkg/corpus.hpp"

namespace mlkg {

enum class Level : std::uint8_t { Entity, Chunk, Document };
enum class EdgeKind : std::uint8_t { OO, OC, OD, CC, CD };

inline constexpr std::array<EdgeKind, 5> kAllEdgeKinds = {EdgeKind::OO, EdgeKind::OC, EdgeKind::OD,
                                                          EdgeKind::CC, EdgeKind::CD};

std::string_view to_string(Level level);
std::string_view to_string(EdgeKind kind);
std::optional<EdgeKind> parse_edge_kind(std::string_view s);

// Endpoint levels for each edge kind: OO entity-entity, OC entity-chunk,
// OD entity-document, CC chunk-chunk, CD chunk-document.
std::pair<Level, Level> endpoint_levels(EdgeKind kind);

struct NodeRef {
    Level level = Level::Entity;
    std::uint32_t index = 0;
    auto operator<=>(const NodeRef&) const = default;
};

// Undirected typed edge set. Pairs are stored with `first` on the
// first endpoint level of the kind; for OO/CC first.index < second.index.
struct EdgeSet {
    EdgeKind kind = EdgeKind::OO;
    std::vector<std::pair<NodeRef, NodeRef>> pairs;
    // Predicate text per pair (OO only; empty otherwise).
    std::vector<std::string> attributes;
};

struct EntityNode {
    std::string name;  // normalized surface form
};

struct ChunkNode {
    std::string chunk_id;
    std::uint32_t document = 0;
    std::size_t position = 0;
    std::string text;
};

struct DocumentNode {
    std::string doc_id;
    std::string title;
    std::string text;
};

// A triple after normalization, resolved to node indices.
struct GraphTriple {
    std::uint32_t subject = 0;
    std::string predicate;
    std::uint32_t object = 0;
    std::uint32_t chunk = 0;
    std::uint32_t document = 0;
};

struct BuildReport {
    std::size_t self_loop_triples = 0;
};

struct GraphStats {
    std::size_t entities = 0;
    std::size_t chunks = 0;
    std::size_t documents = 0;
    std::array<std::size_t, 5> edges{};  // indexed by EdgeKind
    std::size_t edge_count(EdgeKind k) const { return edges[static_cast<std::size_t>(k)]; }
    bool operator==(const GraphStats&) const = default;
};

// Three-level knowledge graph with five undirected edge sets and
// precomputed per-kind adjacency. Immutable once built.
class MultiLKG {
public:
    const std::vector<EntityNode>& entities() const { return entities_; }
    const std::vector<ChunkNode>& chunks() const { return chunks_; }
    const std::vector<DocumentNode>& documents() const { return documents_; }
    const std::vector<GraphTriple>& triples() const { return triples_; }
    const EdgeSet& edges(EdgeKind kind) const { return edges_[static_cast<std::size_t>(kind)]; }
    const BuildReport& report() const { return report_; }
    // The bundle the graph was built from.
    const CorpusBundle& bundle() const { return bundle_; }

    std::size_t node_count(Level level) const;

    // Ascending neighbor indices of `index` (on `level`) through edges of
    // `kind`; empty when the level does not take part in the kind.
    const std::vector<std::uint32_t>& adjacency(EdgeKind kind, Level level, std::uint32_t index) const;

    std::optional<std::uint32_t> find_document(std::string_view doc_id) const;
    std::optional<std::uint32_t> find_entity(std::string_view name) const;

private:
    friend MultiLKG build_graph(const CorpusBundle& bundle);

    std::vector<EntityNode> entities_;
    std::vector<ChunkNode> chunks_;
    std::vector<DocumentNode> documents_;
    std::vector<GraphTriple> triples_;
    std::array<EdgeSet, 5> edges_;
    // adjacency_[kind][0] is indexed by the first endpoint level, [1] by the second.
    std::array<std::array<std::vector<std::vector<std::uint32_t>>, 2>, 5> adjacency_;
    BuildReport report_;
    CorpusBundle bundle_;
};

// Builds the graph. Throws CorpusError if the bundle does not validate.
// Node indices follow first appearance in record order.
MultiLKG build_graph(const CorpusBundle& bundle);

// Neighbors of `node` through `kind`, ascending by index; empty when the
// kind does not touch the node's level.
std::vector<NodeRef> neighbors(const MultiLKG& g, NodeRef node, EdgeKind kind);

GraphStats graph_stats(const MultiLKG& g);

// Lists broken structural invariants (CC path per document, OC implies OD,
// one CD edge per chunk, endpoints valid, no duplicates or self pairs).
std::vector<std::string> check_graph_invariants(const MultiLKG& g);

// Line-delimited graph file: the source corpus records followed by
// entity and edge records. Loading rebuilds from the corpus records and
// verifies the dumped entities and edges agree.
std::string serialize_graph(const MultiLKG& g);
MultiLKG load_graph(const std::string& path);
MultiLKG load_graph_text(std::string_view text);

}  // namespace mlkg

#include "mlkg/graph.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "mlkg/util.hpp"

namespace mlkg {

using nlohmann::json;

std::string_view to_string(Level level) {
    switch (level) {
        case Level::Entity: return "entity";
        case Level::Chunk: return "chunk";
        case Level::Document: return "document";
    }
    return "?";
}

std::string_view to_string(EdgeKind kind) {
    switch (kind) {
        case EdgeKind::OO: return "OO";
        case EdgeKind::OC: return "OC";
        case EdgeKind::OD: return "OD";
        case EdgeKind::CC: return "CC";
        case EdgeKind::CD: return "CD";
    }
    return "?";
}

std::optional<EdgeKind> parse_edge_kind(std::string_view s) {
    for (auto k : kAllEdgeKinds) {
        if (to_string(k) == s) return k;
    }
    return std::nullopt;
}

std::pair<Level, Level> endpoint_levels(EdgeKind kind) {
    switch (kind) {
        case EdgeKind::OO: return {Level::Entity, Level::Entity};
        case EdgeKind::OC: return {Level::Entity, Level::Chunk};
        case EdgeKind::OD: return {Level::Entity, Level::Document};
        case EdgeKind::CC: return {Level::Chunk, Level::Chunk};
        case EdgeKind::CD: return {Level::Chunk, Level::Document};
    }
    throw std::logic_error("bad edge kind");
}

std::size_t MultiLKG::node_count(Level level) const {
    switch (level) {
        case Level::Entity: return entities_.size();
        case Level::Chunk: return chunks_.size();
        case Level::Document: return documents_.size();
    }
    return 0;
}

const std::vector<std::uint32_t>& MultiLKG::adjacency(EdgeKind kind, Level level, std::uint32_t index) const {
    static const std::vector<std::uint32_t> kEmpty;
    const auto [first, second] = endpoint_levels(kind);
    const auto& per_kind = adjacency_[static_cast<std::size_t>(kind)];
    if (level == first) return index < per_kind[0].size() ? per_kind[0][index] : kEmpty;
    if (level == second) return index < per_kind[1].size() ? per_kind[1][index] : kEmpty;
    return kEmpty;
}

std::optional<std::uint32_t> MultiLKG::find_document(std::string_view doc_id) const {
    for (std::size_t i = 0; i < documents_.size(); ++i) {
        if (documents_[i].doc_id == doc_id) return static_cast<std::uint32_t>(i);
    }
    return std::nullopt;
}

std::optional<std::uint32_t> MultiLKG::find_entity(std::string_view name) const {
    for (std::size_t i = 0; i < entities_.size(); ++i) {
        if (entities_[i].name == name) return static_cast<std::uint32_t>(i);
    }
    return std::nullopt;
}

MultiLKG build_graph(const CorpusBundle& bundle) {
    auto violations = validate_bundle(bundle);
    if (!violations.empty()) {
        std::string msg = "cannot build graph from invalid bundle:";
        for (const auto& v : violations) msg += "\n  " + v;
        throw CorpusError(msg);
    }

    MultiLKG g;
    g.bundle_ = bundle;

    std::unordered_map<std::string, std::uint32_t> doc_ix;
    for (const auto& d : bundle.documents) {
        doc_ix.emplace(d.doc_id, static_cast<std::uint32_t>(g.documents_.size()));
        g.documents_.push_back({d.doc_id, d.title, d.text});
    }
    std::unordered_map<std::string, std::uint32_t> chunk_ix;
    for (const auto& c : bundle.chunks) {
        chunk_ix.emplace(c.chunk_id, static_cast<std::uint32_t>(g.chunks_.size()));
        g.chunks_.push_back({c.chunk_id, doc_ix.at(c.doc_id), c.position, c.text});
    }

    std::unordered_map<std::string, std::uint32_t> entity_ix;
    auto intern = [&](const std::string& name) {
        auto [it, inserted] = entity_ix.emplace(name, static_cast<std::uint32_t>(g.entities_.size()));
        if (inserted) g.entities_.push_back({name});
        return it->second;
    };

    auto& oo = g.edges_[static_cast<std::size_t>(EdgeKind::OO)];
    auto& oc = g.edges_[static_cast<std::size_t>(EdgeKind::OC)];
    auto& od = g.edges_[static_cast<std::size_t>(EdgeKind::OD)];
    auto& cc = g.edges_[static_cast<std::size_t>(EdgeKind::CC)];
    auto& cd = g.edges_[static_cast<std::size_t>(EdgeKind::CD)];
    oo.kind = EdgeKind::OO;
    oc.kind = EdgeKind::OC;
    od.kind = EdgeKind::OD;
    cc.kind = EdgeKind::CC;
    cd.kind = EdgeKind::CD;

    std::set<std::pair<std::uint32_t, std::uint32_t>> seen_oo, seen_oc, seen_od;
    auto link = [](EdgeSet& set, std::set<std::pair<std::uint32_t, std::uint32_t>>& seen, Level la,
                   std::uint32_t a, Level lb, std::uint32_t b) {
        if (seen.emplace(a, b).second) set.pairs.push_back({NodeRef{la, a}, NodeRef{lb, b}});
    };

    for (const auto& t : bundle.triples) {
        const std::uint32_t s = intern(normalize_entity(t.subject));
        const std::uint32_t o = intern(normalize_entity(t.object));
        const std::uint32_t c = chunk_ix.at(t.chunk_id);
        const std::uint32_t d = doc_ix.at(t.doc_id);
        const std::string predicate = normalize_text(t.predicate);
        g.triples_.push_back({s, predicate, o, c, d});

        if (s == o) {
            ++g.report_.self_loop_triples;
        } else {
            const auto key = std::minmax(s, o);
            if (seen_oo.emplace(key.first, key.second).second) {
                oo.pairs.push_back({NodeRef{Level::Entity, key.first}, NodeRef{Level::Entity, key.second}});
                oo.attributes.push_back(predicate);
            }
        }
        for (std::uint32_t e : {s, o}) {
            link(oc, seen_oc, Level::Entity, e, Level::Chunk, c);
            link(od, seen_od, Level::Entity, e, Level::Document, d);
        }
    }

    // Chunk-chunk path per document in position order, then containment.
    std::vector<std::vector<std::uint32_t>> by_doc(g.documents_.size());
    for (std::uint32_t c = 0; c < g.chunks_.size(); ++c) by_doc[g.chunks_[c].document].push_back(c);
    for (auto& list : by_doc) {
        std::sort(list.begin(), list.end(), [&](std::uint32_t a, std::uint32_t b) {
            return g.chunks_[a].position < g.chunks_[b].position;
        });
        for (std::size_t p = 0; p + 1 < list.size(); ++p) {
            const auto key = std::minmax(list[p], list[p + 1]);
            cc.pairs.push_back({NodeRef{Level::Chunk, key.first}, NodeRef{Level::Chunk, key.second}});
        }
    }
    for (std::uint32_t c = 0; c < g.chunks_.size(); ++c) {
        cd.pairs.push_back({NodeRef{Level::Chunk, c}, NodeRef{Level::Document, g.chunks_[c].document}});
    }

    for (auto kind : kAllEdgeKinds) {
        const auto k = static_cast<std::size_t>(kind);
        const auto [first, second] = endpoint_levels(kind);
        auto& adj = g.adjacency_[k];
        adj[0].assign(g.node_count(first), {});
        adj[1].assign(g.node_count(second), {});
        for (const auto& [u, v] : g.edges_[k].pairs) {
            adj[0][u.index].push_back(v.index);
            if (first == second) {
                adj[0][v.index].push_back(u.index);
            } else {
                adj[1][v.index].push_back(u.index);
            }
        }
        if (first == second) adj[1] = adj[0];
        for (auto& side : adj) {
            for (auto& list : side) std::sort(list.begin(), list.end());
        }
    }
    return g;
}

std::vector<NodeRef> neighbors(const MultiLKG& g, NodeRef node, EdgeKind kind) {
    const auto [first, second] = endpoint_levels(kind);
    if (node.level != first && node.level != second) return {};
    const Level other = node.level == first ? second : first;
    std::vector<NodeRef> out;
    for (auto ix : g.adjacency(kind, node.level, node.index)) out.push_back({other, ix});
    return out;
}

GraphStats graph_stats(const MultiLKG& g) {
    GraphStats s;
    s.entities = g.entities().size();
    s.chunks = g.chunks().size();
    s.documents = g.documents().size();
    for (auto k : kAllEdgeKinds) s.edges[static_cast<std::size_t>(k)] = g.edges(k).pairs.size();
    return s;
}

std::vector<std::string> check_graph_invariants(const MultiLKG& g) {
    std::vector<std::string> problems;
    for (auto kind : kAllEdgeKinds) {
        const auto [first, second] = endpoint_levels(kind);
        std::set<std::pair<std::uint32_t, std::uint32_t>> seen;
        for (const auto& [u, v] : g.edges(kind).pairs) {
            const std::string name(to_string(kind));
            if (u.level != first || v.level != second) problems.push_back(name + ": endpoint level mismatch");
            if (u.index >= g.node_count(u.level) || v.index >= g.node_count(v.level)) {
                problems.push_back(name + ": dangling endpoint");
                continue;
            }
            if (first == second && u.index == v.index) problems.push_back(name + ": self pair");
            std::pair<std::uint32_t, std::uint32_t> key{u.index, v.index};
            if (first == second && key.first > key.second) std::swap(key.first, key.second);
            if (!seen.insert(key).second) problems.push_back(name + ": duplicate pair");
        }
    }

    // CC restricted to each document is the position-ordered path.
    std::vector<std::vector<std::uint32_t>> by_doc(g.documents().size());
    for (std::uint32_t c = 0; c < g.chunks().size(); ++c) by_doc[g.chunks()[c].document].push_back(c);
    std::set<std::pair<std::uint32_t, std::uint32_t>> cc;
    for (const auto& [u, v] : g.edges(EdgeKind::CC).pairs) {
        cc.insert({std::min(u.index, v.index), std::max(u.index, v.index)});
        if (u.index < g.chunks().size() && v.index < g.chunks().size() &&
            g.chunks()[u.index].document != g.chunks()[v.index].document) {
            problems.push_back("CC edge crosses documents");
        }
    }
    std::size_t expected_cc = 0;
    for (auto& list : by_doc) {
        std::sort(list.begin(), list.end(), [&](auto a, auto b) {
            return g.chunks()[a].position < g.chunks()[b].position;
        });
        for (std::size_t p = 0; p + 1 < list.size(); ++p) {
            ++expected_cc;
            if (!cc.contains({std::min(list[p], list[p + 1]), std::max(list[p], list[p + 1])})) {
                problems.push_back("CC path broken at chunk " + g.chunks()[list[p]].chunk_id);
            }
        }
    }
    if (cc.size() != expected_cc) problems.push_back("CC edge count differs from sum of (m-1)");

    std::vector<std::size_t> cd_count(g.chunks().size(), 0);
    for (const auto& [u, v] : g.edges(EdgeKind::CD).pairs) {
        if (u.index >= g.chunks().size()) continue;
        ++cd_count[u.index];
        if (g.chunks()[u.index].document != v.index) problems.push_back("CD edge to wrong document");
    }
    for (std::size_t c = 0; c < cd_count.size(); ++c) {
        if (cd_count[c] != 1) problems.push_back("chunk " + g.chunks()[c].chunk_id + " lacks exactly one CD edge");
    }

    std::set<std::pair<std::uint32_t, std::uint32_t>> od;
    for (const auto& [u, v] : g.edges(EdgeKind::OD).pairs) od.emplace(u.index, v.index);
    std::set<std::pair<std::uint32_t, std::uint32_t>> oc;
    for (const auto& [u, v] : g.edges(EdgeKind::OC).pairs) {
        oc.emplace(u.index, v.index);
        if (v.index < g.chunks().size() && !od.contains({u.index, g.chunks()[v.index].document})) {
            problems.push_back("OC edge without matching OD edge for entity " + std::to_string(u.index));
        }
    }
    for (const auto& t : g.triples()) {
        for (auto e : {t.subject, t.object}) {
            if (!oc.contains({e, t.chunk}) || !od.contains({e, t.document})) {
                problems.push_back("triple entity missing containment edge");
            }
        }
    }
    return problems;
}

std::string serialize_graph(const MultiLKG& g) {
    std::string out = serialize_corpus(g.bundle());
    for (std::size_t i = 0; i < g.entities().size(); ++i) {
        out += json{{"kind", "entity"}, {"index", i}, {"name", g.entities()[i].name}}.dump();
        out += '\n';
    }
    for (auto kind : kAllEdgeKinds) {
        const auto& set = g.edges(kind);
        for (std::size_t i = 0; i < set.pairs.size(); ++i) {
            json rec{{"kind", "edge"},
                     {"type", std::string(to_string(kind))},
                     {"u", set.pairs[i].first.index},
                     {"v", set.pairs[i].second.index}};
            if (kind == EdgeKind::OO) rec["predicate"] = set.attributes[i];
            out += rec.dump();
            out += '\n';
        }
    }
    return out;
}

MultiLKG load_graph_text(std::string_view text) {
    MultiLKG g = build_graph(parse_corpus_text(text));

    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0, entities = 0;
    std::array<std::size_t, 5> edges{};
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const json rec = json::parse(line);
        const std::string kind = rec.at("kind").get<std::string>();
        const std::string where = "graph line " + std::to_string(line_no) + ": ";
        if (kind == "entity") {
            const auto ix = rec.at("index").get<std::size_t>();
            if (ix >= g.entities().size() || g.entities()[ix].name != rec.at("name").get<std::string>()) {
                throw CorpusError(where + "entity record disagrees with rebuilt graph");
            }
            ++entities;
        } else if (kind == "edge") {
            auto k = parse_edge_kind(rec.at("type").get<std::string>());
            if (!k) throw CorpusError(where + "unknown edge type");
            const auto pos = edges[static_cast<std::size_t>(*k)]++;
            const auto& pairs = g.edges(*k).pairs;
            if (pos >= pairs.size() || pairs[pos].first.index != rec.at("u").get<std::uint32_t>() ||
                pairs[pos].second.index != rec.at("v").get<std::uint32_t>()) {
                throw CorpusError(where + "edge record disagrees with rebuilt graph");
            }
        }
    }
    if (entities != 0 && entities != g.entities().size()) {
        throw CorpusError("graph file entity count disagrees with rebuilt graph");
    }
    return g;
}

MultiLKG load_graph(const std::string& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const std::runtime_error& e) {
        throw CorpusError(e.what());
    }
    return load_graph_text(text);
}

}  // namespace mlkg

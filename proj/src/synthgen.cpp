#include "mlkg/synthgen.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <tuple>

#include "mlkg/util.hpp"

namespace mlkg {

namespace {

std::string join_words(std::initializer_list<std::string_view> parts) {
    std::string out;
    for (auto p : parts) {
        if (p.empty()) continue;
        if (!out.empty()) out += ' ';
        out += p;
    }
    return out;
}

constexpr std::string_view kMask = "which entity";

// First occurrence of each distinct (subject, predicate, object, document).
std::vector<std::size_t> distinct_triples(const MultiLKG& g) {
    std::set<std::tuple<std::uint32_t, std::string, std::uint32_t, std::uint32_t>> seen;
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < g.triples().size(); ++i) {
        const auto& t = g.triples()[i];
        if (seen.emplace(t.subject, t.predicate, t.object, t.document).second) out.push_back(i);
    }
    return out;
}

}  // namespace

std::vector<SyntheticQuestion> gen_one_hop(const MultiLKG& graph) {
    std::vector<SyntheticQuestion> out;
    std::set<std::tuple<std::string, std::string, std::string>> seen;
    auto emit = [&](SyntheticQuestion q) {
        if (seen.emplace(q.question_text, q.answer, q.support_doc_ids.front()).second) out.push_back(std::move(q));
    };
    for (auto i : distinct_triples(graph)) {
        const auto& t = graph.triples()[i];
        const auto& s = graph.entities()[t.subject].name;
        const auto& o = graph.entities()[t.object].name;
        const auto& doc = graph.documents()[t.document].doc_id;
        emit({1, join_words({kMask, t.predicate, o}) + "?", s, {doc}, {i}});
        emit({1, join_words({s, t.predicate, kMask}) + "?", o, {doc}, {i}});
    }
    return out;
}

std::vector<RelationChain> enumerate_chains(const MultiLKG& graph) {
    const auto distinct = distinct_triples(graph);
    std::map<std::uint32_t, std::vector<std::size_t>> by_subject;
    for (auto i : distinct) by_subject[graph.triples()[i].subject].push_back(i);

    std::vector<RelationChain> chains;
    for (auto i : distinct) {
        const auto& first = graph.triples()[i];
        auto it = by_subject.find(first.object);
        if (it == by_subject.end()) continue;
        for (auto j : it->second) {
            if (graph.triples()[j].document == first.document) continue;
            chains.push_back({i, j, first.object});
        }
    }
    std::sort(chains.begin(), chains.end(), [](const RelationChain& a, const RelationChain& b) {
        return std::tie(a.bridge, a.first, a.second) < std::tie(b.bridge, b.first, b.second);
    });
    return chains;
}

std::vector<SyntheticQuestion> gen_two_hop(const MultiLKG& graph, const TwoHopOptions& options) {
    const auto chains = enumerate_chains(graph);
    Rng rng = Rng::stream(options.seed, "two-hop-cap");

    std::vector<RelationChain> kept;
    for (std::size_t b = 0; b < chains.size();) {
        std::size_t e = b;
        while (e < chains.size() && chains[e].bridge == chains[b].bridge) ++e;
        std::vector<RelationChain> group(chains.begin() + static_cast<std::ptrdiff_t>(b),
                                         chains.begin() + static_cast<std::ptrdiff_t>(e));
        if (options.cap_per_bridge > 0 && group.size() > options.cap_per_bridge) {
            rng.shuffle(group);
            group.resize(options.cap_per_bridge);
            std::sort(group.begin(), group.end(), [](const RelationChain& x, const RelationChain& y) {
                return std::tie(x.first, x.second) < std::tie(y.first, y.second);
            });
        }
        kept.insert(kept.end(), group.begin(), group.end());
        b = e;
    }

    std::vector<SyntheticQuestion> out;
    std::set<std::tuple<std::string, std::string, std::set<std::string>>> seen;
    auto emit = [&](SyntheticQuestion q) {
        std::set<std::string> support(q.support_doc_ids.begin(), q.support_doc_ids.end());
        if (seen.emplace(q.question_text, q.answer, std::move(support)).second) out.push_back(std::move(q));
    };
    for (const auto& c : kept) {
        const auto& t1 = graph.triples()[c.first];
        const auto& t2 = graph.triples()[c.second];
        const auto& s1 = graph.entities()[t1.subject].name;
        const auto& bridge = graph.entities()[c.bridge].name;
        const auto& o2 = graph.entities()[t2.object].name;
        const std::vector<std::string> support{graph.documents()[t1.document].doc_id,
                                               graph.documents()[t2.document].doc_id};
        emit({2, join_words({kMask, t1.predicate, bridge, t2.predicate, o2}) + "?", s1, support, {c.first, c.second}});
        emit({2, join_words({s1, t1.predicate, bridge, t2.predicate, kMask}) + "?", o2, support, {c.first, c.second}});
    }
    return out;
}

std::vector<TrainingExample> emit_examples(const std::vector<SyntheticQuestion>& questions, const MultiLKG& graph,
                                           const EmbeddingSource& source, std::size_t negatives_k,
                                           std::uint64_t seed) {
    const RawGraphEmbeddings raw = embed_graph(source, graph);
    std::vector<TrainingExample> out;
    out.reserve(questions.size());
    for (std::size_t i = 0; i < questions.size(); ++i) {
        const auto& q = questions[i];
        TrainingExample ex;
        ex.query_text = q.question_text;
        ex.support_doc_ids = q.support_doc_ids;
        ex.negatives = sample_hard_negatives(graph, raw.documents, source.embed(q.question_text), q.support_doc_ids,
                                             negatives_k, seed + i);
        ex.hop = q.hop;
        ex.answer = q.answer;
        out.push_back(std::move(ex));
    }
    Rng rng = Rng::stream(seed, "emit");
    rng.shuffle(out);
    return out;
}

}  // namespace mlkg

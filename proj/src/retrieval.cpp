#include "mlkg/retrieval.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include <json.hpp>

#include "mlkg/util.hpp"

namespace mlkg {

using nlohmann::json;

namespace {

constexpr std::size_t kQueriesPerTape = 16;

ad::IndexPtr all_rows(std::size_t n) {
    ad::Index ix(n);
    for (std::size_t i = 0; i < n; ++i) ix[i] = static_cast<std::uint32_t>(i);
    return ad::make_index(std::move(ix));
}

}  // namespace

Retriever::Retriever(const QsgnnParameters& params, const MultiLKG& graph, const EmbeddingSource& source,
                     std::size_t threads)
    : params_(&params),
      graph_(&graph),
      source_(&source),
      owned_layout_(ModelGraph::from(graph)),
      owned_raw_(embed_graph(source, graph)),
      layout_(&*owned_layout_),
      raw_(&*owned_raw_),
      threads_(threads) {}

Retriever::Retriever(const QsgnnParameters& params, const MultiLKG& graph, const ModelGraph& layout,
                     const RawGraphEmbeddings& raw, const EmbeddingSource& source, std::size_t threads)
    : params_(&params), graph_(&graph), source_(&source), layout_(&layout), raw_(&raw), threads_(threads) {}

std::vector<std::vector<double>> Retriever::score_batch(const std::vector<RawEmbedding>& raw_queries) const {
    std::vector<std::vector<double>> out;
    out.reserve(raw_queries.size());
    const auto rows = all_rows(layout_->documents);
    for (std::size_t begin = 0; begin < raw_queries.size(); begin += kQueriesPerTape) {
        const std::size_t end = std::min(raw_queries.size(), begin + kQueriesPerTape);
        ad::Tape tape(false, threads_);
        const auto slots = bind_parameters(tape, *params_, false);
        const LevelVars raw{tape.input(raw_->entities), tape.input(raw_->chunks), tape.input(raw_->documents)};
        const LevelVars initial = build_projection(tape, slots, raw);
        for (std::size_t i = begin; i < end; ++i) {
            const ad::Var q = build_query_projection(tape, slots, tape.input(Matrix::row_vector(raw_queries[i])));
            const LevelVars h = build_forward(tape, *params_, slots, *layout_, initial, q);
            out.push_back(tape.value(tape.row_cosine(q, h.documents, rows)).data());
        }
    }
    return out;
}

std::vector<double> Retriever::score(const RawEmbedding& raw_query) const { return score_batch({raw_query}).front(); }

std::vector<double> Retriever::score_text(const std::string& query) const { return score(source_->embed(query)); }

std::vector<double> Retriever::score_chunks(const RawEmbedding& raw_query) const {
    ad::Tape tape(false, threads_);
    const auto slots = bind_parameters(tape, *params_, false);
    const LevelVars raw{tape.input(raw_->entities), tape.input(raw_->chunks), tape.input(raw_->documents)};
    const LevelVars initial = build_projection(tape, slots, raw);
    const ad::Var q = build_query_projection(tape, slots, tape.input(Matrix::row_vector(raw_query)));
    const LevelVars h = build_forward(tape, *params_, slots, *layout_, initial, q);
    return tape.value(tape.row_cosine(q, h.chunks, all_rows(layout_->chunks))).data();
}

std::vector<ScoredDocument> Retriever::label(const std::vector<double>& scores) const {
    std::vector<ScoredDocument> out;
    out.reserve(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) out.push_back({graph_->documents()[i].doc_id, scores[i]});
    return out;
}

std::vector<ScoredDocument> score_documents(const QsgnnParameters& params, const MultiLKG& graph,
                                            const std::string& query_text, const EmbeddingSource& source) {
    Retriever r(params, graph, source);
    return r.label(r.score_text(query_text));
}

RetrievalResult top_k(std::vector<ScoredDocument> scores, std::size_t k) {
    if (k == 0) throw std::invalid_argument("top_k: k must be at least 1");
    auto before = [](const ScoredDocument& a, const ScoredDocument& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.doc_id < b.doc_id;
    };
    const std::size_t keep = std::min(k, scores.size());
    std::partial_sort(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(keep), scores.end(), before);
    scores.resize(keep);
    return {std::move(scores), k};
}

double recall_at_k(const RetrievalResult& result, const std::vector<std::string>& gold, std::size_t k) {
    const std::set<std::string> gold_set(gold.begin(), gold.end());
    if (gold_set.empty()) throw std::invalid_argument("recall_at_k: gold set is empty");
    std::size_t hits = 0;
    const std::size_t limit = std::min(k, result.ranked.size());
    std::set<std::string> seen;
    for (std::size_t i = 0; i < limit; ++i) {
        const auto& id = result.ranked[i].doc_id;
        if (gold_set.contains(id) && seen.insert(id).second) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(gold_set.size());
}

EvalReport evaluate(const Retriever& retriever, const std::vector<EvalExample>& examples) {
    std::vector<RawEmbedding> queries;
    queries.reserve(examples.size());
    for (const auto& ex : examples) queries.push_back(retriever.source().embed(ex.query));
    const auto all_scores = retriever.score_batch(queries);

    EvalReport report;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const auto& ex = examples[i];
        const std::set<std::string> gold(ex.gold_doc_ids.begin(), ex.gold_doc_ids.end());
        const auto ranked = top_k(retriever.label(all_scores[i]), std::max<std::size_t>(5, gold.size()));
        QueryMetrics m;
        m.query = ex.query;
        m.gold_size = gold.size();
        m.recall_at_1 = recall_at_k(ranked, ex.gold_doc_ids, 1);
        m.recall_at_2 = recall_at_k(ranked, ex.gold_doc_ids, 2);
        m.recall_at_5 = recall_at_k(ranked, ex.gold_doc_ids, 5);
        m.recall_at_gold = recall_at_k(ranked, ex.gold_doc_ids, gold.size());
        report.per_query.push_back(std::move(m));
    }
    std::vector<std::size_t> order(examples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& x = report.per_query[a];
        const auto& y = report.per_query[b];
        return std::tie(x.query, examples[a].gold_doc_ids, x.recall_at_5) <
               std::tie(y.query, examples[b].gold_doc_ids, y.recall_at_5);
    });
    std::vector<QueryMetrics> sorted;
    for (auto i : order) sorted.push_back(report.per_query[i]);
    report.per_query = std::move(sorted);

    if (report.per_query.empty()) return report;
    for (const auto& m : report.per_query) {
        report.mean_recall_at_1 += m.recall_at_1;
        report.mean_recall_at_2 += m.recall_at_2;
        report.mean_recall_at_5 += m.recall_at_5;
        report.mean_recall_at_gold += m.recall_at_gold;
        auto& h = report.per_hop[m.gold_size];
        ++h.count;
        h.recall_at_2 += m.recall_at_2;
        h.recall_at_5 += m.recall_at_5;
    }
    const double n = static_cast<double>(report.per_query.size());
    report.mean_recall_at_1 /= n;
    report.mean_recall_at_2 /= n;
    report.mean_recall_at_5 /= n;
    report.mean_recall_at_gold /= n;
    for (auto& [hop, h] : report.per_hop) {
        h.recall_at_2 /= static_cast<double>(h.count);
        h.recall_at_5 /= static_cast<double>(h.count);
    }
    return report;
}

EvalReport evaluate(const QsgnnParameters& params, const MultiLKG& graph, const std::vector<EvalExample>& examples,
                    const EmbeddingSource& source) {
    Retriever r(params, graph, source);
    return evaluate(r, examples);
}

std::string EvalReport::to_json_line() const {
    json j;
    j["kind"] = "metrics";
    j["queries"] = per_query.size();
    j["recall@1"] = mean_recall_at_1;
    j["recall@2"] = mean_recall_at_2;
    j["recall@5"] = mean_recall_at_5;
    j["recall@gold"] = mean_recall_at_gold;
    json hops = json::object();
    for (const auto& [hop, h] : per_hop) {
        hops[std::to_string(hop)] = {{"count", h.count}, {"recall@2", h.recall_at_2}, {"recall@5", h.recall_at_5}};
    }
    j["per_hop"] = hops;
    return j.dump();
}

std::string EvalReport::to_table() const {
    std::ostringstream out;
    char buf[128];
    out << "hops  queries  recall@2  recall@5\n";
    for (const auto& [hop, h] : per_hop) {
        std::snprintf(buf, sizeof(buf), "%4zu  %7zu  %8.4f  %8.4f\n", hop, h.count, h.recall_at_2, h.recall_at_5);
        out << buf;
    }
    std::snprintf(buf, sizeof(buf), " all  %7zu  %8.4f  %8.4f\n", per_query.size(), mean_recall_at_2,
                  mean_recall_at_5);
    out << buf;
    return out.str();
}

std::vector<EvalExample> load_eval_examples(const std::string& path) {
    std::vector<EvalExample> out;
    std::istringstream in(read_file(path));
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = json::parse(line);
            EvalExample ex;
            ex.query = j.at("query").get<std::string>();
            if (j.contains("gold_doc_ids")) {
                ex.gold_doc_ids = j.at("gold_doc_ids").get<std::vector<std::string>>();
            } else {
                ex.gold_doc_ids = j.at("support_doc_ids").get<std::vector<std::string>>();
            }
            if (j.contains("hop")) ex.hop = j.at("hop").get<int>();
            if (ex.gold_doc_ids.empty()) throw std::runtime_error("empty gold set");
            out.push_back(std::move(ex));
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace mlkg

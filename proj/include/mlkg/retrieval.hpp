#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mlkg/embedding.hpp"
#include "mlkg/graph.hpp"
#include "mlkg/model.hpp"

namespace mlkg {

struct ScoredDocument {
    std::string doc_id;
    double score = 0.0;
    bool operator==(const ScoredDocument&) const = default;
};

// Descending score, ties by ascending doc_id; at most k entries.
struct RetrievalResult {
    std::vector<ScoredDocument> ranked;
    std::size_t k = 0;
};

// Scores the rows of the final representation matrices against the
// projected query. Holds the graph layouts and raw node embeddings so
// many queries can be scored without re-embedding the graph.
class Retriever {
public:
    Retriever(const QsgnnParameters& params, const MultiLKG& graph, const EmbeddingSource& source,
              std::size_t threads = 0);
    Retriever(const QsgnnParameters& params, const MultiLKG& graph, const ModelGraph& layout,
              const RawGraphEmbeddings& raw, const EmbeddingSource& source, std::size_t threads = 0);

    // cos(q, h_doc) for every document, in document index order.
    std::vector<double> score(const RawEmbedding& raw_query) const;
    std::vector<double> score_text(const std::string& query) const;
    // Same for many queries; shares query-independent work across a batch.
    std::vector<std::vector<double>> score_batch(const std::vector<RawEmbedding>& raw_queries) const;
    // cos(q, h_chunk) for every chunk (chunk-level retrieval).
    std::vector<double> score_chunks(const RawEmbedding& raw_query) const;

    std::vector<ScoredDocument> label(const std::vector<double>& scores) const;

    const MultiLKG& graph() const { return *graph_; }
    const EmbeddingSource& source() const { return *source_; }

private:
    const QsgnnParameters* params_;
    const MultiLKG* graph_;
    const EmbeddingSource* source_;
    std::optional<ModelGraph> owned_layout_;
    std::optional<RawGraphEmbeddings> owned_raw_;
    const ModelGraph* layout_;
    const RawGraphEmbeddings* raw_;
    std::size_t threads_;
};

std::vector<ScoredDocument> score_documents(const QsgnnParameters& params, const MultiLKG& graph,
                                            const std::string& query_text, const EmbeddingSource& source);

// Throws std::invalid_argument when k == 0.
RetrievalResult top_k(std::vector<ScoredDocument> scores, std::size_t k);

// |top-k ∩ gold| / |gold| over distinct gold ids. Throws on empty gold.
double recall_at_k(const RetrievalResult& result, const std::vector<std::string>& gold, std::size_t k);

struct EvalExample {
    std::string query;
    std::vector<std::string> gold_doc_ids;
    std::optional<int> hop;
};

struct QueryMetrics {
    std::string query;
    std::size_t gold_size = 0;
    double recall_at_1 = 0.0;
    double recall_at_2 = 0.0;
    double recall_at_5 = 0.0;
    // recall@|gold|: 1.0 iff the top-|gold| documents are exactly the gold set.
    double recall_at_gold = 0.0;
};

struct HopMetrics {
    std::size_t count = 0;
    double recall_at_2 = 0.0;
    double recall_at_5 = 0.0;
};

struct EvalReport {
    std::vector<QueryMetrics> per_query;  // canonical order (query text, then gold)
    double mean_recall_at_1 = 0.0;
    double mean_recall_at_2 = 0.0;
    double mean_recall_at_5 = 0.0;
    double mean_recall_at_gold = 0.0;
    std::map<std::size_t, HopMetrics> per_hop;  // keyed by gold-set size

    std::string to_json_line() const;
    std::string to_table() const;
};

EvalReport evaluate(const Retriever& retriever, const std::vector<EvalExample>& examples);
EvalReport evaluate(const QsgnnParameters& params, const MultiLKG& graph, const std::vector<EvalExample>& examples,
                    const EmbeddingSource& source);

// Eval file: {"query", "gold_doc_ids" (or "support_doc_ids"), optional "hop"} per line.
std::vector<EvalExample> load_eval_examples(const std::string& path);

}  // namespace mlkg

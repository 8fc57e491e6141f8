#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mlkg/embedding.hpp"
#include "mlkg/grad.hpp"
#include "mlkg/graph.hpp"
#include "mlkg/model.hpp"

namespace mlkg {

struct TrainingExample {
    std::string query_text;
    std::vector<std::string> support_doc_ids;
    // Empty means "compute hard negatives at training time".
    std::vector<std::string> negatives;
    std::optional<int> hop;
    std::optional<std::string> answer;
};

enum class TrainMode { Pretrain, Finetune };

struct TrainConfig {
    double tau = 1.0;
    std::size_t negatives_k = 30;
    double lr = 1e-4;
    std::size_t max_epochs = 5;
    std::size_t checkpoint_every = 2000;
    double holdout_fraction = 0.05;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    std::size_t threads = 0;
    // Written as <dir>/step-<N>/{params.bin,manifest.json} when non-empty.
    std::string checkpoint_dir;
    // Stop after the first epoch whose training set is retrieved exactly
    // (recall@|gold| = 1 and recall@5 = 1 on every training example).
    bool stop_when_fit = false;

    static TrainConfig defaults(TrainMode mode);
    void validate() const;
    std::string describe() const;
};

// The k non-support documents whose raw embeddings are most similar to the
// raw query embedding (ties by ascending doc_id). With fewer than k
// candidates, all are taken and the rest is padded by uniform draws from
// the non-support documents.
std::vector<std::string> sample_hard_negatives(const MultiLKG& graph, const Matrix& raw_documents,
                                               const RawEmbedding& raw_query,
                                               const std::vector<std::string>& support_ids, std::size_t k,
                                               std::uint64_t seed);

// -log( e^{c+/tau} / (e^{c+/tau} + sum e^{c-/tau}) ) with c = cosine.
double nt_xent_loss(const std::vector<double>& query, const std::vector<double>& positive,
                    const std::vector<std::vector<double>>& negatives, double tau);

// Looks up document ids and attaches hard negatives where missing.
std::vector<ResolvedExample> resolve_examples(const MultiLKG& graph, const RawGraphEmbeddings& raw,
                                              const EmbeddingSource& source,
                                              const std::vector<TrainingExample>& examples, std::size_t negatives_k,
                                              std::uint64_t seed);

// Splits shuffled example indices into (train, holdout).
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_holdout(std::size_t count, double fraction,
                                                                          std::uint64_t seed);

struct CheckpointRecord {
    std::uint64_t step = 0;
    std::size_t epoch = 0;
    std::optional<double> holdout_recall_at_5;
    std::string params_digest;
    std::string path;
};

struct TrainResult {
    QsgnnParameters selected;  // best holdout recall@5 (earliest on ties), else last
    QsgnnParameters last;
    std::vector<CheckpointRecord> history;
    std::size_t selected_index = 0;
    std::vector<double> epoch_losses;
    std::uint64_t steps = 0;
    std::size_t epochs_run = 0;
};

TrainResult train(TrainMode mode, const MultiLKG& graph, const EmbeddingSource& source,
                  const std::vector<TrainingExample>& examples, const TrainConfig& config,
                  const QsgnnParameters& initial);

std::vector<TrainingExample> load_training_examples(const std::string& path);
std::string serialize_training_examples(const std::vector<TrainingExample>& examples);

}  // namespace mlkg

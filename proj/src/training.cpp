#include "mlkg/training.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "mlkg/retrieval.hpp"
#include "mlkg/util.hpp"

namespace mlkg {

using nlohmann::json;

TrainConfig TrainConfig::defaults(TrainMode mode) {
    TrainConfig c;
    if (mode == TrainMode::Finetune) {
        c.lr = 5e-4;
        c.max_epochs = 3;
        c.checkpoint_every = 100;
    }
    return c;
}

void TrainConfig::validate() const {
    if (!(tau > 0.0)) throw std::invalid_argument("tau must be positive");
    if (negatives_k < 1) throw std::invalid_argument("negatives_k must be at least 1");
    if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) {
        throw std::invalid_argument("holdout_fraction must be in [0, 1)");
    }
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("lr must be finite and non-negative");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be at least 1");
    if (checkpoint_every < 1) throw std::invalid_argument("checkpoint_every must be at least 1");
}

std::string TrainConfig::describe() const {
    std::ostringstream s;
    s.precision(17);
    s << "tau=" << tau << ",k=" << negatives_k << ",lr=" << lr << ",epochs=" << max_epochs
      << ",ckpt=" << checkpoint_every << ",holdout=" << holdout_fraction << ",batch=" << batch_size
      << ",seed=" << seed << ",stop_when_fit=" << stop_when_fit;
    return s.str();
}

std::vector<std::string> sample_hard_negatives(const MultiLKG& graph, const Matrix& raw_documents,
                                               const RawEmbedding& raw_query,
                                               const std::vector<std::string>& support_ids, std::size_t k,
                                               std::uint64_t seed) {
    const std::set<std::string> support(support_ids.begin(), support_ids.end());
    struct Candidate {
        double score;
        const std::string* id;
    };
    std::vector<Candidate> candidates;
    for (std::size_t i = 0; i < graph.documents().size(); ++i) {
        const auto& id = graph.documents()[i].doc_id;
        if (support.contains(id)) continue;
        candidates.push_back({cosine(raw_documents.row(i), raw_query), &id});
    }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        if (a.score != b.score) return a.score > b.score;
        return *a.id < *b.id;
    });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < std::min(k, candidates.size()); ++i) out.push_back(*candidates[i].id);
    if (out.size() < k && !candidates.empty()) {
        Rng rng = Rng::stream(seed, "negatives");
        while (out.size() < k) out.push_back(*candidates[rng.below(candidates.size())].id);
    }
    return out;
}

double nt_xent_loss(const std::vector<double>& query, const std::vector<double>& positive,
                    const std::vector<std::vector<double>>& negatives, double tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("tau must be positive");
    if (negatives.empty()) throw std::invalid_argument("at least one negative is required");
    const double pos = cosine(query, positive) / tau;
    std::vector<double> logits{pos};
    for (const auto& n : negatives) logits.push_back(cosine(query, n) / tau);
    for (double x : logits) {
        if (!std::isfinite(x)) throw std::invalid_argument("non-finite similarity");
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double x : logits) z += std::exp(x - mx);
    return -(pos - mx) + std::log(z);
}

std::vector<ResolvedExample> resolve_examples(const MultiLKG& graph, const RawGraphEmbeddings& raw,
                                              const EmbeddingSource& source,
                                              const std::vector<TrainingExample>& examples, std::size_t negatives_k,
                                              std::uint64_t seed) {
    std::vector<ResolvedExample> out;
    out.reserve(examples.size());
    auto lookup = [&](const std::string& id) {
        auto ix = graph.find_document(id);
        if (!ix) throw std::invalid_argument("unknown document id '" + id + "'");
        return *ix;
    };
    for (std::size_t e = 0; e < examples.size(); ++e) {
        const auto& ex = examples[e];
        if (ex.support_doc_ids.empty()) throw std::invalid_argument("example without support documents");
        ResolvedExample r;
        r.query = source.embed(ex.query_text);
        std::set<std::string> support;
        for (const auto& id : ex.support_doc_ids) {
            if (support.insert(id).second) r.positives.push_back(lookup(id));
        }
        const auto negatives = ex.negatives.empty()
                                   ? sample_hard_negatives(graph, raw.documents, r.query, ex.support_doc_ids,
                                                           negatives_k, seed + e)
                                   : ex.negatives;
        for (const auto& id : negatives) {
            if (support.contains(id)) {
                throw std::invalid_argument("negative '" + id + "' is also a support document");
            }
            r.negatives.push_back(lookup(id));
        }
        if (r.negatives.empty()) {
            throw std::invalid_argument("no negative documents available for query '" + ex.query_text + "'");
        }
        out.push_back(std::move(r));
    }
    return out;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_holdout(std::size_t count, double fraction,
                                                                          std::uint64_t seed) {
    std::vector<std::size_t> order(count);
    for (std::size_t i = 0; i < count; ++i) order[i] = i;
    Rng rng = Rng::stream(seed, "split");
    rng.shuffle(order);
    const auto held = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(count)));
    std::vector<std::size_t> holdout(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(held));
    std::vector<std::size_t> rest(order.begin() + static_cast<std::ptrdiff_t>(held), order.end());
    return {rest, holdout};
}

namespace {

double mean_recall(const Retriever& retriever, const std::vector<TrainingExample>& examples,
                   const std::vector<std::size_t>& which, bool exact_fit) {
    std::vector<EvalExample> eval;
    for (auto i : which) eval.push_back({examples[i].query_text, examples[i].support_doc_ids, examples[i].hop});
    const EvalReport report = evaluate(retriever, eval);
    if (!exact_fit) return report.mean_recall_at_5;
    return std::min(report.mean_recall_at_gold, report.mean_recall_at_5);
}

}  // namespace

TrainResult train(TrainMode mode, const MultiLKG& graph, const EmbeddingSource& source,
                  const std::vector<TrainingExample>& examples, const TrainConfig& config,
                  const QsgnnParameters& initial) {
    config.validate();
    if (examples.empty()) throw std::invalid_argument("train: no examples");
    if (initial.config().raw_dim != source.dim()) {
        throw std::invalid_argument("embedding dimension does not match the model input dimension");
    }
    const char* mode_name = mode == TrainMode::Pretrain ? "pretrain" : "finetune";

    const ModelGraph layout = ModelGraph::from(graph);
    const RawGraphEmbeddings raw = embed_graph(source, graph);
    const ModelInputs inputs{&layout, &raw};
    const auto resolved = resolve_examples(graph, raw, source, examples, config.negatives_k, config.seed);
    auto [train_ix, holdout_ix] = split_holdout(examples.size(), config.holdout_fraction, config.seed);
    if (train_ix.empty()) throw std::invalid_argument("train: holdout leaves no training examples");

    TrainResult result{initial, initial, {}, 0, {}, 0, 0};
    QsgnnParameters params = initial;
    OptimizerState opt = OptimizerState::for_parameters(params, AdamConfig{config.lr});
    Rng shuffle = Rng::stream(config.seed, "shuffle");
    std::optional<double> best;
    const LossConfig loss_config{config.tau, 1.0};

    auto checkpoint = [&](std::size_t epoch) {
        CheckpointRecord rec;
        rec.step = opt.step;
        rec.epoch = epoch;
        rec.params_digest = hex64(fnv1a64(encode_parameters(params)));
        if (!holdout_ix.empty()) {
            Retriever retriever(params, graph, layout, raw, source, config.threads);
            rec.holdout_recall_at_5 = mean_recall(retriever, examples, holdout_ix, false);
        }
        if (!config.checkpoint_dir.empty()) {
            rec.path = config.checkpoint_dir + "/step-" + std::to_string(rec.step);
            json extra{{"mode", mode_name}, {"step", rec.step}, {"epoch", epoch}, {"train_config", config.describe()}};
            if (rec.holdout_recall_at_5) extra["holdout_recall@5"] = *rec.holdout_recall_at_5;
            save_checkpoint(rec.path, params, extra.dump());
        }
        const bool better = holdout_ix.empty() || !best || *rec.holdout_recall_at_5 > *best;
        if (better) {
            if (!holdout_ix.empty()) best = rec.holdout_recall_at_5;
            result.selected = params;
            result.selected_index = result.history.size();
        }
        spdlog::debug("{}: checkpoint at step {} (holdout recall@5 {})", mode_name, rec.step,
                      rec.holdout_recall_at_5 ? std::to_string(*rec.holdout_recall_at_5) : "n/a");
        result.history.push_back(std::move(rec));
    };

    std::uint64_t last_checkpoint_step = ~std::uint64_t{0};
    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        std::vector<std::size_t> order = train_ix;
        shuffle.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
            const std::size_t end = std::min(order.size(), begin + config.batch_size);
            std::vector<ResolvedExample> batch;
            for (std::size_t i = begin; i < end; ++i) batch.push_back(resolved[order[i]]);
            const LossAndGradient lg = backward(params, inputs, batch, loss_config, config.threads);
            optimizer_step(opt, params, lg.gradient);
            epoch_loss += lg.loss;
            ++batches;
            if (opt.step % config.checkpoint_every == 0) {
                checkpoint(epoch);
                last_checkpoint_step = opt.step;
            }
        }
        epoch_loss /= static_cast<double>(batches);
        if (!result.epoch_losses.empty() && epoch_loss >= result.epoch_losses.back() && config.lr > 0.0) {
            spdlog::warn("{}: epoch {} mean loss {:.6f} did not decrease (previous {:.6f})", mode_name, epoch,
                         epoch_loss, result.epoch_losses.back());
        }
        result.epoch_losses.push_back(epoch_loss);
        result.epochs_run = epoch;
        spdlog::info("{}: epoch {} mean loss {:.6f}", mode_name, epoch, epoch_loss);

        if (config.stop_when_fit) {
            Retriever retriever(params, graph, layout, raw, source, config.threads);
            if (mean_recall(retriever, examples, train_ix, true) == 1.0) {
                spdlog::info("{}: training set fit after epoch {}", mode_name, epoch);
                break;
            }
        }
    }
    if (last_checkpoint_step != opt.step) checkpoint(result.epochs_run);
    result.last = params;
    result.steps = opt.step;
    return result;
}

std::vector<TrainingExample> load_training_examples(const std::string& path) {
    std::vector<TrainingExample> out;
    std::istringstream in(read_file(path));
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = json::parse(line);
            TrainingExample ex;
            ex.query_text = j.at("query").get<std::string>();
            ex.support_doc_ids = j.contains("support_doc_ids")
                                     ? j.at("support_doc_ids").get<std::vector<std::string>>()
                                     : j.at("gold_doc_ids").get<std::vector<std::string>>();
            if (j.contains("negatives")) ex.negatives = j.at("negatives").get<std::vector<std::string>>();
            if (j.contains("hop")) ex.hop = j.at("hop").get<int>();
            if (j.contains("answer")) ex.answer = j.at("answer").get<std::string>();
            if (ex.support_doc_ids.empty()) throw std::runtime_error("empty support_doc_ids");
            out.push_back(std::move(ex));
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

std::string serialize_training_examples(const std::vector<TrainingExample>& examples) {
    std::string out;
    for (const auto& ex : examples) {
        json j{{"query", ex.query_text}, {"support_doc_ids", ex.support_doc_ids}};
        if (!ex.negatives.empty()) j["negatives"] = ex.negatives;
        if (ex.hop) j["hop"] = *ex.hop;
        if (ex.answer) j["answer"] = *ex.answer;
        out += j.dump();
        out += '\n';
    }
    return out;
}

}  // namespace mlkg

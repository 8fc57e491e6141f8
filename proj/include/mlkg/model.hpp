#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlkg/embedding.hpp"
#include "mlkg/graph.hpp"
#include "mlkg/matrix.hpp"
#include "mlkg/tape.hpp"

namespace mlkg {

class ModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ModelConfig {
    std::size_t raw_dim = 512;  // D
    std::size_t dim = 128;      // n
    std::size_t layers = 2;     // L
    // When false the query terms (beta in intra blocks, gamma in inter
    // blocks) are dropped from the attention logits.
    bool query_attention = true;
    double norm_eps = 1e-5;

    bool operator==(const ModelConfig&) const = default;
    std::string describe() const;
};

struct Tensor {
    std::string name;
    Matrix value;
};

inline constexpr std::size_t kNoSlot = std::numeric_limits<std::size_t>::max();

// Indices into QsgnnParameters::tensors() for one attention block.
struct BlockSlots {
    // Intra blocks: wq_alpha, wk_alpha, wq_beta, wk_beta.
    // Inter blocks: w_target, w_source_entity, w_source_chunk, wq_gamma, wk_gamma.
    std::size_t wq_alpha = kNoSlot, wk_alpha = kNoSlot;
    std::size_t wq_query = kNoSlot, wk_query = kNoSlot;
    std::size_t w_target = kNoSlot, w_source_entity = kNoSlot, w_source_chunk = kNoSlot;
    std::size_t w_value = kNoSlot;
    std::size_t mlp_w1 = kNoSlot, mlp_b1 = kNoSlot, mlp_w2 = kNoSlot, mlp_b2 = kNoSlot;
    std::size_t norm_gain = kNoSlot, norm_bias = kNoSlot;
};

struct LayerSlots {
    BlockSlots intra_entity;
    BlockSlots intra_chunk;
    BlockSlots inter_chunk;     // chunk <- {self, entities via OC}
    BlockSlots inter_document;  // document <- {self, entities via OD, chunks via CD}
};

enum class IntraLevel { Entity, Chunk };
enum class InterLevel { Chunk, Document };

// All learnable tensors in a fixed order. The order (and names) are the
// checkpoint layout.
class QsgnnParameters {
public:
    // Shapes per config, all zeros.
    static QsgnnParameters zeros(const ModelConfig& config);
    // Glorot-uniform matrices, unit norm gains, zero biases.
    static QsgnnParameters initialize(const ModelConfig& config, std::uint64_t seed);

    const ModelConfig& config() const { return config_; }
    std::vector<Tensor>& tensors() { return tensors_; }
    const std::vector<Tensor>& tensors() const { return tensors_; }
    Matrix& at(std::size_t slot) { return tensors_.at(slot).value; }
    const Matrix& at(std::size_t slot) const { return tensors_.at(slot).value; }
    std::size_t slot(const std::string& name) const;
    std::size_t input_slot() const { return 0; }
    const std::vector<LayerSlots>& layers() const { return layers_; }
    const BlockSlots& block(std::size_t layer, IntraLevel level) const;
    const BlockSlots& block(std::size_t layer, InterLevel level) const;

    std::size_t scalar_count() const;
    bool all_finite() const;
    bool operator==(const QsgnnParameters& other) const;

private:
    explicit QsgnnParameters(ModelConfig config);
    std::size_t add(std::string name, std::size_t rows, std::size_t cols);

    ModelConfig config_;
    std::vector<Tensor> tensors_;
    std::vector<LayerSlots> layers_;
};

// Attention neighborhoods in CSR form. Edge e of segment i attends from
// target row i to source row source[e] of the block's source matrix.
struct AttentionLayout {
    ad::IndexPtr target;
    ad::IndexPtr source;
    ad::IndexPtr offsets;
};

// Attention layouts derived from a MultiLKG. Every neighborhood starts
// with the node itself, followed by its neighbors in ascending order.
struct ModelGraph {
    std::size_t entities = 0;
    std::size_t chunks = 0;
    std::size_t documents = 0;
    AttentionLayout intra_entity;    // over the entity matrix (OO)
    AttentionLayout intra_chunk;     // over the chunk matrix (CC)
    AttentionLayout inter_chunk;     // over [chunks; entities] (self + OC)
    AttentionLayout inter_document;  // over [documents; entities; chunks] (self + OD + CD)

    static ModelGraph from(const MultiLKG& g);
};

struct NodeStateMatrix {
    Matrix entities;
    Matrix chunks;
    Matrix documents;
};

// Captures every attention distribution computed during a forward pass.
struct AttentionProbe {
    struct Record {
        std::string block;
        std::vector<double> weights;
        std::vector<double> logits;
        ad::IndexPtr offsets;
    };
    std::vector<Record> records;
};

// --- Tape-level builders (shared by inference and the gradient engine) ---

struct LevelVars {
    ad::Var entities;
    ad::Var chunks;
    ad::Var documents;
};

// Registers every parameter tensor on the tape, in slot order.
std::vector<ad::Var> bind_parameters(ad::Tape& tape, const QsgnnParameters& params, bool requires_grad);

LevelVars build_projection(ad::Tape& tape, const std::vector<ad::Var>& slots, const LevelVars& raw);
ad::Var build_query_projection(ad::Tape& tape, const std::vector<ad::Var>& slots, ad::Var raw_query);

ad::Var build_intra_block(ad::Tape& tape, const QsgnnParameters& params, const std::vector<ad::Var>& slots,
                          const BlockSlots& block, ad::Var query, ad::Var states, const AttentionLayout& layout,
                          AttentionProbe* probe = nullptr, const std::string& label = {});

ad::Var build_inter_block(ad::Tape& tape, const QsgnnParameters& params, const std::vector<ad::Var>& slots,
                          const BlockSlots& block, ad::Var query, ad::Var target_states,
                          const std::vector<ad::Var>& source_states, const AttentionLayout& layout,
                          AttentionProbe* probe = nullptr, const std::string& label = {});

// Stacked layers: per layer, intra over OO and CC, then chunk <- entity,
// then document <- {entity, chunk} using the updated chunks.
LevelVars build_forward(ad::Tape& tape, const QsgnnParameters& params, const std::vector<ad::Var>& slots,
                        const ModelGraph& graph, const LevelVars& initial, ad::Var query,
                        AttentionProbe* probe = nullptr);

// --- Value-level operations ---

struct ProjectedInputs {
    NodeStateMatrix states;
    Matrix query;  // 1 x n
};

ProjectedInputs project_inputs(const QsgnnParameters& params, const RawGraphEmbeddings& raw,
                               const RawEmbedding& raw_query);

Matrix intra_block(const QsgnnParameters& params, std::size_t layer, IntraLevel level, const Matrix& query,
                   const NodeStateMatrix& states, const ModelGraph& graph, AttentionProbe* probe = nullptr);

Matrix inter_block(const QsgnnParameters& params, std::size_t layer, InterLevel level, const Matrix& query,
                   const NodeStateMatrix& states, const ModelGraph& graph, AttentionProbe* probe = nullptr);

NodeStateMatrix forward(const QsgnnParameters& params, const ModelGraph& graph, const NodeStateMatrix& initial,
                        const Matrix& query, AttentionProbe* probe = nullptr);

// --- Checkpoints ---

// Binary tensor file: magic, version, then (name, rows, cols, doubles) per
// tensor, little-endian.
std::string encode_parameters(const QsgnnParameters& params);
QsgnnParameters decode_parameters(std::string_view bytes, const ModelConfig& config);

// Writes <dir>/params.bin and <dir>/manifest.json (shapes, config, digest).
void save_checkpoint(const std::string& dir, const QsgnnParameters& params, const std::string& extra_json = "{}");
// Reads a checkpoint directory; the config comes from its manifest and is
// checked against `expected` when given.
QsgnnParameters load_checkpoint(const std::string& dir, const std::optional<ModelConfig>& expected = std::nullopt);

}  // namespace mlkg

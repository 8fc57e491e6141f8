#include "mlkg/model.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>

#include <json.hpp>

#include "mlkg/util.hpp"

namespace mlkg {

using nlohmann::json;

std::string ModelConfig::describe() const {
    return "D=" + std::to_string(raw_dim) + ",n=" + std::to_string(dim) + ",L=" + std::to_string(layers) +
           ",query_attention=" + (query_attention ? "1" : "0");
}

QsgnnParameters::QsgnnParameters(ModelConfig config) : config_(config) {}

std::size_t QsgnnParameters::add(std::string name, std::size_t rows, std::size_t cols) {
    tensors_.push_back({std::move(name), Matrix(rows, cols)});
    return tensors_.size() - 1;
}

QsgnnParameters QsgnnParameters::zeros(const ModelConfig& config) {
    if (config.dim < 2) throw ModelError("model dimension must be at least 2");
    if (config.raw_dim < 1) throw ModelError("raw dimension must be positive");
    QsgnnParameters p(config);
    const std::size_t n = config.dim;
    p.add("input.w_in", config.raw_dim, n);

    auto common = [&](BlockSlots& b, const std::string& prefix) {
        b.w_value = p.add(prefix + ".w_value", n, n);
        b.mlp_w1 = p.add(prefix + ".mlp_w1", n, n);
        b.mlp_b1 = p.add(prefix + ".mlp_b1", 1, n);
        b.mlp_w2 = p.add(prefix + ".mlp_w2", n, n);
        b.mlp_b2 = p.add(prefix + ".mlp_b2", 1, n);
        b.norm_gain = p.add(prefix + ".norm_gain", 1, n);
        b.norm_bias = p.add(prefix + ".norm_bias", 1, n);
    };
    auto intra = [&](BlockSlots& b, const std::string& prefix) {
        b.wq_alpha = p.add(prefix + ".wq_alpha", n, n);
        b.wk_alpha = p.add(prefix + ".wk_alpha", n, n);
        b.wq_query = p.add(prefix + ".wq_beta", n, n);
        b.wk_query = p.add(prefix + ".wk_beta", 2 * n, n);
        common(b, prefix);
    };
    auto inter = [&](BlockSlots& b, const std::string& prefix, bool with_chunk_source) {
        b.w_target = p.add(prefix + ".w_target", n, n);
        b.w_source_entity = p.add(prefix + ".w_source_entity", n, n);
        if (with_chunk_source) b.w_source_chunk = p.add(prefix + ".w_source_chunk", n, n);
        b.wq_query = p.add(prefix + ".wq_gamma", n, n);
        b.wk_query = p.add(prefix + ".wk_gamma", 2 * n, n);
        common(b, prefix);
    };
    for (std::size_t l = 0; l < config.layers; ++l) {
        const std::string prefix = "layer" + std::to_string(l);
        LayerSlots ls;
        intra(ls.intra_entity, prefix + ".intra_entity");
        intra(ls.intra_chunk, prefix + ".intra_chunk");
        inter(ls.inter_chunk, prefix + ".inter_chunk", false);
        inter(ls.inter_document, prefix + ".inter_document", true);
        p.layers_.push_back(ls);
    }
    return p;
}

QsgnnParameters QsgnnParameters::initialize(const ModelConfig& config, std::uint64_t seed) {
    QsgnnParameters p = zeros(config);
    Rng rng = Rng::stream(seed, "init");
    for (auto& t : p.tensors_) {
        const bool is_row = t.value.rows() == 1;
        if (t.name.ends_with("norm_gain")) {
            t.value.fill(1.0);
        } else if (!is_row) {
            const double limit =
                std::sqrt(6.0 / static_cast<double>(t.value.rows() + t.value.cols()));
            for (double& x : t.value.data()) x = rng.uniform(-limit, limit);
        }
    }
    return p;
}

std::size_t QsgnnParameters::slot(const std::string& name) const {
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
        if (tensors_[i].name == name) return i;
    }
    throw ModelError("no parameter named '" + name + "'");
}

const BlockSlots& QsgnnParameters::block(std::size_t layer, IntraLevel level) const {
    const auto& l = layers_.at(layer);
    return level == IntraLevel::Entity ? l.intra_entity : l.intra_chunk;
}

const BlockSlots& QsgnnParameters::block(std::size_t layer, InterLevel level) const {
    const auto& l = layers_.at(layer);
    return level == InterLevel::Chunk ? l.inter_chunk : l.inter_document;
}

std::size_t QsgnnParameters::scalar_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += t.value.size();
    return n;
}

bool QsgnnParameters::all_finite() const {
    for (const auto& t : tensors_) {
        if (!mlkg::all_finite(t.value)) return false;
    }
    return true;
}

bool QsgnnParameters::operator==(const QsgnnParameters& other) const {
    if (!(config_ == other.config_) || tensors_.size() != other.tensors_.size()) return false;
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
        if (tensors_[i].name != other.tensors_[i].name || !(tensors_[i].value == other.tensors_[i].value)) {
            return false;
        }
    }
    return true;
}

namespace {

AttentionLayout make_layout(const std::vector<std::vector<std::uint32_t>>& neighborhoods) {
    ad::Index target, source, offsets{0};
    for (std::uint32_t i = 0; i < neighborhoods.size(); ++i) {
        for (auto s : neighborhoods[i]) {
            target.push_back(i);
            source.push_back(s);
        }
        offsets.push_back(static_cast<std::uint32_t>(source.size()));
    }
    return {ad::make_index(std::move(target)), ad::make_index(std::move(source)), ad::make_index(std::move(offsets))};
}

void check_finite(const Matrix& m, const std::string& where) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (double v : m.row(i)) {
            if (!std::isfinite(v)) throw ModelError("non-finite value in " + where + " at node " + std::to_string(i));
        }
    }
}

}  // namespace

ModelGraph ModelGraph::from(const MultiLKG& g) {
    ModelGraph mg;
    mg.entities = g.entities().size();
    mg.chunks = g.chunks().size();
    mg.documents = g.documents().size();
    const auto ne = static_cast<std::uint32_t>(mg.entities);
    const auto nc = static_cast<std::uint32_t>(mg.chunks);
    const auto nd = static_cast<std::uint32_t>(mg.documents);

    std::vector<std::vector<std::uint32_t>> hoods(ne);
    for (std::uint32_t i = 0; i < ne; ++i) {
        hoods[i].push_back(i);
        for (auto j : g.adjacency(EdgeKind::OO, Level::Entity, i)) hoods[i].push_back(j);
    }
    mg.intra_entity = make_layout(hoods);

    hoods.assign(nc, {});
    for (std::uint32_t i = 0; i < nc; ++i) {
        hoods[i].push_back(i);
        for (auto j : g.adjacency(EdgeKind::CC, Level::Chunk, i)) hoods[i].push_back(j);
    }
    mg.intra_chunk = make_layout(hoods);

    hoods.assign(nc, {});
    for (std::uint32_t i = 0; i < nc; ++i) {
        hoods[i].push_back(i);
        for (auto e : g.adjacency(EdgeKind::OC, Level::Chunk, i)) hoods[i].push_back(nc + e);
    }
    mg.inter_chunk = make_layout(hoods);

    hoods.assign(nd, {});
    for (std::uint32_t i = 0; i < nd; ++i) {
        hoods[i].push_back(i);
        for (auto e : g.adjacency(EdgeKind::OD, Level::Document, i)) hoods[i].push_back(nd + e);
        for (auto c : g.adjacency(EdgeKind::CD, Level::Document, i)) hoods[i].push_back(nd + ne + c);
    }
    mg.inter_document = make_layout(hoods);
    return mg;
}

std::vector<ad::Var> bind_parameters(ad::Tape& tape, const QsgnnParameters& params, bool requires_grad) {
    std::vector<ad::Var> slots;
    slots.reserve(params.tensors().size());
    for (const auto& t : params.tensors()) slots.push_back(tape.input(t.value, requires_grad));
    return slots;
}

LevelVars build_projection(ad::Tape& tape, const std::vector<ad::Var>& slots, const LevelVars& raw) {
    const ad::Var w = slots.at(0);
    return {tape.matmul(raw.entities, w), tape.matmul(raw.chunks, w), tape.matmul(raw.documents, w)};
}

ad::Var build_query_projection(ad::Tape& tape, const std::vector<ad::Var>& slots, ad::Var raw_query) {
    return tape.matmul(raw_query, slots.at(0));
}

namespace {

// h' = MLP(LayerNorm(h + msg))
ad::Var residual_update(ad::Tape& tape, const QsgnnParameters& params, const std::vector<ad::Var>& slots,
                        const BlockSlots& b, ad::Var states, ad::Var message) {
    const ad::Var normed =
        tape.layer_norm(tape.add(states, message), slots[b.norm_gain], slots[b.norm_bias], params.config().norm_eps);
    const ad::Var hidden = tape.relu(tape.add_row(tape.matmul(normed, slots[b.mlp_w1]), slots[b.mlp_b1]));
    return tape.add_row(tape.matmul(hidden, slots[b.mlp_w2]), slots[b.mlp_b2]);
}

void record(AttentionProbe* probe, const ad::Tape& tape, const std::string& label, ad::Var logits, ad::Var weights,
            const ad::IndexPtr& offsets) {
    if (!probe) return;
    probe->records.push_back(
        {label, tape.value(weights).data(), tape.value(logits).data(), offsets});
}

}  // namespace

ad::Var build_intra_block(ad::Tape& tape, const QsgnnParameters& params, const std::vector<ad::Var>& slots,
                          const BlockSlots& b, ad::Var query, ad::Var states, const AttentionLayout& layout,
                          AttentionProbe* probe, const std::string& label) {
    const std::size_t n = params.config().dim;
    const ad::Var q_alpha = tape.matmul(states, slots[b.wq_alpha]);
    const ad::Var k_alpha = tape.matmul(states, slots[b.wk_alpha]);
    ad::Var logits = tape.pair_cosine(q_alpha, k_alpha, layout.target, layout.source);
    if (params.config().query_attention) {
        const ad::Var q_beta = tape.matmul(query, slots[b.wq_query]);
        // (h_i || h_j) Wk = h_i Wk[0:n] + h_j Wk[n:2n]
        const ad::Var k_top = tape.matmul(states, tape.slice_rows(slots[b.wk_query], 0, n));
        const ad::Var k_bottom = tape.matmul(states, tape.slice_rows(slots[b.wk_query], n, n));
        const ad::Var beta = tape.query_pair_cosine(q_beta, k_top, k_bottom, layout.target, layout.source);
        logits = tape.add(logits, beta);
    }
    const ad::Var attn = tape.segment_softmax(logits, layout.offsets);
    record(probe, tape, label, logits, attn, layout.offsets);
    const ad::Var values = tape.matmul(states, slots[b.w_value]);
    const ad::Var message = tape.attend(values, attn, layout.source, layout.offsets);
    const ad::Var out = residual_update(tape, params, slots, b, states, message);
    check_finite(tape.value(out), label.empty() ? "intra block" : label);
    return out;
}

ad::Var build_inter_block(ad::Tape& tape, const QsgnnParameters& params, const std::vector<ad::Var>& slots,
                          const BlockSlots& b, ad::Var query, ad::Var target_states,
                          const std::vector<ad::Var>& source_states, const AttentionLayout& layout,
                          AttentionProbe* probe, const std::string& label) {
    const std::size_t n = params.config().dim;
    std::vector<ad::Var> raw_stack{target_states};
    raw_stack.insert(raw_stack.end(), source_states.begin(), source_states.end());

    ad::Var logits;
    if (params.config().query_attention) {
        const ad::Var projected_target = tape.matmul(target_states, slots[b.w_target]);
        std::vector<ad::Var> projected{projected_target};
        const std::size_t source_slots[2] = {b.w_source_entity, b.w_source_chunk};
        for (std::size_t s = 0; s < source_states.size(); ++s) {
            projected.push_back(tape.matmul(source_states[s], slots[source_slots[s]]));
        }
        const ad::Var stack = tape.concat_rows(projected);
        const ad::Var q_gamma = tape.matmul(query, slots[b.wq_query]);
        // p_ij Wk = (h_i Wt) Wk[0:n] + (h_j Ws) Wk[n:2n]
        const ad::Var k_top = tape.matmul(projected_target, tape.slice_rows(slots[b.wk_query], 0, n));
        const ad::Var k_bottom = tape.matmul(stack, tape.slice_rows(slots[b.wk_query], n, n));
        logits = tape.query_pair_cosine(q_gamma, k_top, k_bottom, layout.target, layout.source);
    } else {
        logits = tape.input(Matrix(layout.source->size(), 1));
    }
    const ad::Var attn = tape.segment_softmax(logits, layout.offsets);
    record(probe, tape, label, logits, attn, layout.offsets);
    const ad::Var values = tape.matmul(tape.concat_rows(raw_stack), slots[b.w_value]);
    const ad::Var message = tape.attend(values, attn, layout.source, layout.offsets);
    const ad::Var out = residual_update(tape, params, slots, b, target_states, message);
    check_finite(tape.value(out), label.empty() ? "inter block" : label);
    return out;
}

LevelVars build_forward(ad::Tape& tape, const QsgnnParameters& params, const std::vector<ad::Var>& slots,
                        const ModelGraph& graph, const LevelVars& initial, ad::Var query, AttentionProbe* probe) {
    LevelVars h = initial;
    for (std::size_t l = 0; l < params.config().layers; ++l) {
        const auto& ls = params.layers()[l];
        const std::string tag = "layer" + std::to_string(l) + ".";
        const ad::Var entities =
            build_intra_block(tape, params, slots, ls.intra_entity, query, h.entities, graph.intra_entity, probe,
                              tag + "intra_entity");
        ad::Var chunks = build_intra_block(tape, params, slots, ls.intra_chunk, query, h.chunks, graph.intra_chunk,
                                           probe, tag + "intra_chunk");
        chunks = build_inter_block(tape, params, slots, ls.inter_chunk, query, chunks, {entities}, graph.inter_chunk,
                                   probe, tag + "inter_chunk");
        const ad::Var documents =
            build_inter_block(tape, params, slots, ls.inter_document, query, h.documents, {entities, chunks},
                              graph.inter_document, probe, tag + "inter_document");
        h = {entities, chunks, documents};
    }
    return h;
}

ProjectedInputs project_inputs(const QsgnnParameters& params, const RawGraphEmbeddings& raw,
                               const RawEmbedding& raw_query) {
    const Matrix& w = params.at(params.input_slot());
    auto check = [&](std::size_t cols, const char* what) {
        if (cols != w.rows()) {
            throw ModelError(std::string("raw ") + what + " dimension " + std::to_string(cols) +
                             " does not match bottleneck input dimension " + std::to_string(w.rows()));
        }
    };
    check(raw.entities.cols(), "entity");
    check(raw.chunks.cols(), "chunk");
    check(raw.documents.cols(), "document");
    check(raw_query.size(), "query");
    return {{matmul(raw.entities, w), matmul(raw.chunks, w), matmul(raw.documents, w)},
            matmul(Matrix::row_vector(raw_query), w)};
}

namespace {

struct ValueTape {
    ad::Tape tape{false};
    std::vector<ad::Var> slots;
    LevelVars states;
    ad::Var query;

    ValueTape(const QsgnnParameters& params, const NodeStateMatrix& s, const Matrix& q) {
        if (q.rows() != 1 || q.cols() != params.config().dim) throw ModelError("query must be a 1 x n row");
        slots = bind_parameters(tape, params, false);
        states = {tape.input(s.entities), tape.input(s.chunks), tape.input(s.documents)};
        query = tape.input(q);
    }
};

}  // namespace

Matrix intra_block(const QsgnnParameters& params, std::size_t layer, IntraLevel level, const Matrix& query,
                   const NodeStateMatrix& states, const ModelGraph& graph, AttentionProbe* probe) {
    ValueTape vt(params, states, query);
    const bool entity = level == IntraLevel::Entity;
    const ad::Var out = build_intra_block(vt.tape, params, vt.slots, params.block(layer, level), vt.query,
                                          entity ? vt.states.entities : vt.states.chunks,
                                          entity ? graph.intra_entity : graph.intra_chunk, probe,
                                          entity ? "intra_entity" : "intra_chunk");
    return vt.tape.value(out);
}

Matrix inter_block(const QsgnnParameters& params, std::size_t layer, InterLevel level, const Matrix& query,
                   const NodeStateMatrix& states, const ModelGraph& graph, AttentionProbe* probe) {
    ValueTape vt(params, states, query);
    ad::Var out;
    if (level == InterLevel::Chunk) {
        out = build_inter_block(vt.tape, params, vt.slots, params.block(layer, level), vt.query, vt.states.chunks,
                                {vt.states.entities}, graph.inter_chunk, probe, "inter_chunk");
    } else {
        out = build_inter_block(vt.tape, params, vt.slots, params.block(layer, level), vt.query,
                                vt.states.documents, {vt.states.entities, vt.states.chunks}, graph.inter_document,
                                probe, "inter_document");
    }
    return vt.tape.value(out);
}

NodeStateMatrix forward(const QsgnnParameters& params, const ModelGraph& graph, const NodeStateMatrix& initial,
                        const Matrix& query, AttentionProbe* probe) {
    ValueTape vt(params, initial, query);
    const LevelVars out = build_forward(vt.tape, params, vt.slots, graph, vt.states, vt.query, probe);
    return {vt.tape.value(out.entities), vt.tape.value(out.chunks), vt.tape.value(out.documents)};
}

namespace {

constexpr char kMagic[8] = {'M', 'L', 'K', 'G', 'P', 'A', 'R', 'M'};
constexpr std::uint32_t kFormatVersion = 1;

template <typename T>
void put(std::string& out, T v) {
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T take(std::string_view bytes, std::size_t& at) {
    if (at + sizeof(T) > bytes.size()) throw ModelError("truncated parameter file");
    T v;
    std::memcpy(&v, bytes.data() + at, sizeof(T));
    at += sizeof(T);
    return v;
}

json config_json(const ModelConfig& c) {
    return {{"raw_dim", c.raw_dim}, {"dim", c.dim}, {"layers", c.layers}, {"query_attention", c.query_attention},
            {"norm_eps", c.norm_eps}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.raw_dim = j.at("raw_dim").get<std::size_t>();
    c.dim = j.at("dim").get<std::size_t>();
    c.layers = j.at("layers").get<std::size_t>();
    c.query_attention = j.at("query_attention").get<bool>();
    c.norm_eps = j.at("norm_eps").get<double>();
    return c;
}

}  // namespace

std::string encode_parameters(const QsgnnParameters& params) {
    static_assert(sizeof(double) == 8);
    std::string out(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, kFormatVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(params.tensors().size()));
    for (const auto& t : params.tensors()) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
        out += t.name;
        put<std::uint64_t>(out, t.value.rows());
        put<std::uint64_t>(out, t.value.cols());
        for (double v : t.value.data()) put<double>(out, v);
    }
    return out;
}

QsgnnParameters decode_parameters(std::string_view bytes, const ModelConfig& config) {
    if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
        throw ModelError("not a parameter file (bad magic)");
    }
    std::size_t at = sizeof(kMagic);
    const auto version = take<std::uint32_t>(bytes, at);
    if (version != kFormatVersion) throw ModelError("unsupported parameter file version " + std::to_string(version));
    QsgnnParameters p = QsgnnParameters::zeros(config);
    const auto count = take<std::uint32_t>(bytes, at);
    if (count != p.tensors().size()) {
        throw ModelError("parameter file has " + std::to_string(count) + " tensors, configuration expects " +
                         std::to_string(p.tensors().size()));
    }
    for (auto& t : p.tensors()) {
        const auto len = take<std::uint32_t>(bytes, at);
        if (at + len > bytes.size()) throw ModelError("truncated parameter file");
        const std::string name(bytes.substr(at, len));
        at += len;
        const auto rows = take<std::uint64_t>(bytes, at);
        const auto cols = take<std::uint64_t>(bytes, at);
        if (name != t.name || rows != t.value.rows() || cols != t.value.cols()) {
            throw ModelError("tensor '" + name + "' (" + std::to_string(rows) + "x" + std::to_string(cols) +
                             ") does not match expected '" + t.name + "' (" + t.value.shape_string() + ")");
        }
        for (double& v : t.value.data()) v = take<double>(bytes, at);
    }
    if (at != bytes.size()) throw ModelError("trailing bytes in parameter file");
    if (!p.all_finite()) throw ModelError("parameter file contains non-finite values");
    return p;
}

void save_checkpoint(const std::string& dir, const QsgnnParameters& params, const std::string& extra_json) {
    const std::string bytes = encode_parameters(params);
    json manifest;
    manifest["format"] = "mlkg-checkpoint";
    manifest["version"] = kFormatVersion;
    manifest["config"] = config_json(params.config());
    manifest["config_hash"] = hex64(fnv1a64(params.config().describe()));
    manifest["params_digest"] = hex64(fnv1a64(bytes));
    json shapes = json::array();
    for (const auto& t : params.tensors()) shapes.push_back({{"name", t.name}, {"rows", t.value.rows()}, {"cols", t.value.cols()}});
    manifest["tensors"] = shapes;
    manifest["extra"] = json::parse(extra_json);
    std::filesystem::create_directories(dir);
    write_file_atomic(dir + "/params.bin", bytes);
    write_file_atomic(dir + "/manifest.json", manifest.dump(2) + "\n");
}

QsgnnParameters load_checkpoint(const std::string& dir, const std::optional<ModelConfig>& expected) {
    json manifest;
    try {
        manifest = json::parse(read_file(dir + "/manifest.json"));
    } catch (const std::exception& e) {
        throw ModelError("cannot read checkpoint manifest in '" + dir + "': " + e.what());
    }
    const ModelConfig config = config_from_json(manifest.at("config"));
    if (expected && !(*expected == config)) {
        throw ModelError("checkpoint config (" + config.describe() + ") does not match expected (" +
                         expected->describe() + ")");
    }
    const std::string bytes = read_file(dir + "/params.bin");
    if (manifest.contains("params_digest") && manifest["params_digest"].get<std::string>() != hex64(fnv1a64(bytes))) {
        throw ModelError("checkpoint digest mismatch in '" + dir + "'");
    }
    return decode_parameters(bytes, config);
}

}  // namespace mlkg

#include <doctest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "oracle_values.hpp"
#include "mlkg/model.hpp"
#include "mlkg/util.hpp"

using namespace mlkg;
using namespace mlkg::testing;

namespace {

using namespace mlkg::testing::oracle;

constexpr double kTol = 1e-12;

ModelConfig small_config(std::size_t n, std::size_t layers, std::size_t raw = 0) {
    ModelConfig c;
    c.raw_dim = raw ? raw : n;
    c.dim = n;
    c.layers = layers;
    return c;
}

Matrix rows(std::initializer_list<std::vector<double>> r) {
    Matrix m(r.size(), r.begin()->size());
    std::size_t i = 0;
    for (const auto& row : r) {
        for (std::size_t j = 0; j < row.size(); ++j) m(i, j) = row[j];
        ++i;
    }
    return m;
}

const AttentionProbe::Record& find(const AttentionProbe& p, const std::string& label) {
    for (const auto& r : p.records) {
        if (r.block == label) return r;
    }
    throw std::runtime_error("no probe record " + label);
}

void check_rows_normalized(const AttentionProbe& probe) {
    for (const auto& r : probe.records) {
        const auto& off = *r.offsets;
        for (std::size_t s = 0; s + 1 < off.size(); ++s) {
            double sum = 0.0;
            for (auto e = off[s]; e < off[s + 1]; ++e) sum += r.weights[e];
            CHECK(std::abs(sum - 1.0) < 1e-9);
        }
    }
}

NodeStateMatrix random_states(const ModelGraph& g, std::size_t n, Rng& rng) {
    NodeStateMatrix s{Matrix(g.entities, n), Matrix(g.chunks, n), Matrix(g.documents, n)};
    for (Matrix* m : {&s.entities, &s.chunks, &s.documents}) {
        for (double& x : m->data()) x = rng.uniform(-1.0, 1.0);
    }
    return s;
}

}  // namespace

TEST_CASE("project_inputs") {
    const auto g = build_graph(toy_bundle());
    const auto raw = embed_graph(EmbeddingSource::hashed(3, 8), g);
    const RawEmbedding q = EmbeddingSource::hashed(3, 8).embed("a query");

    auto zero = QsgnnParameters::zeros(small_config(4, 1, 8));
    const auto p0 = project_inputs(zero, raw, q);
    for (double x : p0.states.entities.data()) CHECK(x == 0.0);
    for (double x : p0.query.data()) CHECK(x == 0.0);

    const auto ident = identity_parameters(small_config(8, 1));
    const auto p1 = project_inputs(ident, raw, q);
    CHECK(p1.states.entities == raw.entities);
    CHECK(p1.states.chunks == raw.chunks);
    CHECK(p1.states.documents == raw.documents);

    const auto rnd = QsgnnParameters::initialize(small_config(4, 1, 8), 5);
    const auto p2 = project_inputs(rnd, raw, q);
    const Matrix& w = rnd.at(rnd.input_slot());
    for (std::size_t i = 0; i < raw.chunks.rows(); ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < 8; ++k) acc += raw.chunks(i, k) * w(k, j);
            CHECK(std::abs(p2.states.chunks(i, j) - acc) < 1e-15);
        }
    }
    CHECK_THROWS_AS(project_inputs(rnd, embed_graph(EmbeddingSource::hashed(3, 16), g), q), ModelError);
}

TEST_CASE("matmul matches a triple loop") {
    Rng rng(9);
    Matrix a(5, 7), b(7, 3);
    for (double& x : a.data()) x = rng.uniform(-1, 1);
    for (double& x : b.data()) x = rng.uniform(-1, 1);
    const Matrix c = matmul(a, b);
    for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < 7; ++k) acc += a(i, k) * b(k, j);
            CHECK(std::abs(c(i, j) - acc) < 1e-15);
        }
    }
}

TEST_CASE("intra block: hand instance") {
    const auto g = build_graph(two_entity_bundle());
    const auto mg = ModelGraph::from(g);
    const auto params = identity_parameters(small_config(2, 1));
    NodeStateMatrix s{rows({{0.3, -0.7}, {0.9, 0.2}}), rows({{0.1, 0.1}}), rows({{0.2, 0.3}})};
    const Matrix q = rows({{0.5, 1.5}});

    AttentionProbe probe;
    const Matrix out = intra_block(params, 0, IntraLevel::Entity, q, s, mg, &probe);
    REQUIRE(probe.records.size() == 1);
    const auto& r = probe.records[0];
    REQUIRE(r.weights.size() == 4);
    for (std::size_t i = 0; i < 2; ++i) {
        for (std::size_t j = 0; j < 2; ++j) {
            CHECK(std::abs(r.logits[2 * i + j] - (kIntraAlpha[i][j] + kIntraBeta[i][j])) < kTol);
            CHECK(std::abs(r.weights[2 * i + j] - kIntraAttn[i][j]) < kTol);
            CHECK(std::abs(out(i, j) - kIntraOut[i][j]) < kTol);
        }
    }
}

TEST_CASE("intra block: isolated node attends only to itself") {
    const auto g = build_graph(one_of_each_bundle());
    const auto mg = ModelGraph::from(g);
    const auto params = QsgnnParameters::initialize(small_config(4, 1), 2);
    Rng rng(1);
    const auto s = random_states(mg, 4, rng);
    AttentionProbe probe;
    intra_block(params, 0, IntraLevel::Entity, rows({{1, 2, 3, 4}}), s, mg, &probe);
    REQUIRE(probe.records[0].weights.size() == 1);
    CHECK(probe.records[0].weights[0] == 1.0);
}

TEST_CASE("inter blocks: hand instance") {
    const auto g = build_graph(one_of_each_bundle());
    const auto mg = ModelGraph::from(g);
    const auto params = identity_parameters(small_config(2, 1));
    NodeStateMatrix s{rows({{0.4, 0.1}}), rows({{-0.2, 0.8}}), rows({{0.7, -0.5}})};
    const Matrix q = rows({{1.0, -0.3}});

    AttentionProbe probe;
    const Matrix chunk = inter_block(params, 0, InterLevel::Chunk, q, s, mg, &probe);
    const Matrix doc = inter_block(params, 0, InterLevel::Document, q, s, mg, &probe);
    REQUIRE(probe.records.size() == 2);
    for (std::size_t j = 0; j < 2; ++j) {
        CHECK(std::abs(probe.records[0].logits[j] - kChunkGamma[j]) < kTol);
        CHECK(std::abs(probe.records[0].weights[j] - kChunkAttn[j]) < kTol);
        CHECK(std::abs(chunk(0, j) - kChunkOut[j]) < kTol);
        CHECK(std::abs(doc(0, j) - kDocOut[j]) < kTol);
    }
    for (std::size_t j = 0; j < 3; ++j) {
        CHECK(std::abs(probe.records[1].logits[j] - kDocGamma[j]) < kTol);
        CHECK(std::abs(probe.records[1].weights[j] - kDocAttn[j]) < kTol);
    }
}

TEST_CASE("inter block: zero weights give uniform attention") {
    const auto g = build_graph(toy_bundle());
    const auto mg = ModelGraph::from(g);
    const auto params = QsgnnParameters::zeros(small_config(4, 1));
    Rng rng(4);
    const auto s = random_states(mg, 4, rng);
    AttentionProbe probe;
    inter_block(params, 0, InterLevel::Document, rows({{1, 0, 0, 1}}), s, mg, &probe);
    const auto& w = probe.records[0].weights;
    REQUIRE(w.size() == 5);  // self, 2 entities, 2 chunks
    for (double x : w) CHECK(std::abs(x - 0.2) < 1e-15);
}

TEST_CASE("forward: one layer composes the block oracles") {
    const auto g = build_graph(one_of_each_bundle());
    const auto mg = ModelGraph::from(g);
    const auto params = identity_parameters(small_config(2, 1));
    NodeStateMatrix s{rows({{0.4, 0.1}}), rows({{-0.2, 0.8}}), rows({{0.7, -0.5}})};
    const auto out = forward(params, mg, s, rows({{1.0, -0.3}}));
    for (std::size_t j = 0; j < 2; ++j) {
        CHECK(std::abs(out.entities(0, j) - kLayerEntity[j]) < kTol);
        CHECK(std::abs(out.chunks(0, j) - kLayerChunk[j]) < kTol);
        CHECK(std::abs(out.documents(0, j) - kLayerDocument[j]) < kTol);
    }
}

TEST_CASE("forward: zero layers pass through") {
    const auto g = build_graph(toy_bundle());
    const auto mg = ModelGraph::from(g);
    const auto params = QsgnnParameters::initialize(small_config(4, 0), 1);
    Rng rng(2);
    const auto s = random_states(mg, 4, rng);
    const auto out = forward(params, mg, s, rows({{1, 2, 3, 4}}));
    CHECK(out.entities == s.entities);
    CHECK(out.chunks == s.chunks);
    CHECK(out.documents == s.documents);
}

TEST_CASE("forward: deterministic, thread independent, normalized attention") {
    const auto g = build_graph(random_bundle(17, {4, 3, 10, 10}));
    const auto mg = ModelGraph::from(g);
    const auto params = QsgnnParameters::initialize(small_config(8, 2), 3);
    Rng rng(5);
    const auto s = random_states(mg, 8, rng);
    const Matrix q = rows({{0.1, -0.2, 0.3, 0.4, -0.5, 0.6, 0.7, -0.8}});

    set_default_threads(1);
    AttentionProbe probe;
    const auto a = forward(params, mg, s, q, &probe);
    set_default_threads(4);
    const auto b = forward(params, mg, s, q);
    set_default_threads(0);
    CHECK(a.entities == b.entities);
    CHECK(a.chunks == b.chunks);
    CHECK(a.documents == b.documents);
    CHECK(probe.records.size() == 8);
    check_rows_normalized(probe);
    for (const auto& r : probe.records) {
        for (double l : r.logits) CHECK(std::abs(l) <= 2.0);
    }
}

TEST_CASE("forward: permutation equivariance") {
    const auto src = EmbeddingSource::hashed(5, 32);
    const auto params = QsgnnParameters::initialize(small_config(8, 2, 32), 8);
    const RawEmbedding q = src.embed("e1 rel0 e2");
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto bundle = random_bundle(seed, {4, 3, 8, 6});
        auto shuffled = bundle;
        std::mt19937 gen(static_cast<unsigned>(seed + 1));
        std::shuffle(shuffled.documents.begin(), shuffled.documents.end(), gen);
        std::shuffle(shuffled.chunks.begin(), shuffled.chunks.end(), gen);
        std::shuffle(shuffled.triples.begin(), shuffled.triples.end(), gen);

        auto run = [&](const CorpusBundle& b) {
            const auto g = build_graph(b);
            const auto in = project_inputs(params, embed_graph(src, g), q);
            const auto out = forward(params, ModelGraph::from(g), in.states, in.query);
            std::map<std::string, std::vector<double>> by_id;
            for (std::size_t i = 0; i < g.documents().size(); ++i) {
                by_id["d:" + g.documents()[i].doc_id] = {out.documents.row(i).begin(), out.documents.row(i).end()};
            }
            for (std::size_t i = 0; i < g.chunks().size(); ++i) {
                by_id["c:" + g.chunks()[i].chunk_id] = {out.chunks.row(i).begin(), out.chunks.row(i).end()};
            }
            for (std::size_t i = 0; i < g.entities().size(); ++i) {
                by_id["e:" + g.entities()[i].name] = {out.entities.row(i).begin(), out.entities.row(i).end()};
            }
            return by_id;
        };
        const auto a = run(bundle);
        const auto b = run(shuffled);
        REQUIRE(a.size() == b.size());
        for (const auto& [id, v] : a) {
            const auto& w = b.at(id);
            for (std::size_t j = 0; j < v.size(); ++j) CHECK(std::abs(v[j] - w[j]) < 1e-12);
        }
    }
}

TEST_CASE("forward: locality on a path") {
    const auto g = build_graph(path_bundle(8));
    const auto mg = ModelGraph::from(g);
    const auto params = QsgnnParameters::initialize(small_config(6, 2), 4);
    Rng rng(7);
    const auto base = random_states(mg, 6, rng);
    const Matrix q = rows({{0.3, 0.1, -0.4, 0.2, 0.9, -0.1}});
    const auto ref = forward(params, mg, base, q);

    auto perturbed_doc0 = [&](const std::string& entity) {
        auto s = base;
        const auto e = *g.find_entity(entity);
        for (double& x : s.entities.row(e)) x += 0.5;
        const auto out = forward(params, mg, s, q);
        return std::vector<double>(out.documents.row(0).begin(), out.documents.row(0).end());
    };
    const std::vector<double> doc0(ref.documents.row(0).begin(), ref.documents.row(0).end());
    // Document p0 touches node0 and node1; two layers reach two OO hops further.
    CHECK(perturbed_doc0("node5") == doc0);
    CHECK(perturbed_doc0("node4") == doc0);
    CHECK(perturbed_doc0("node3") != doc0);
}

TEST_CASE("forward: query sensitivity") {
    const auto g = build_graph(random_bundle(3, {4, 3, 8, 6}));
    const auto mg = ModelGraph::from(g);
    const auto params = QsgnnParameters::initialize(small_config(8, 2), 6);
    Rng rng(8);
    const auto s = random_states(mg, 8, rng);
    const auto a = forward(params, mg, s, rows({{1, 0, 0, 0, 0, 0, 0, 0}}));
    const auto b = forward(params, mg, s, rows({{0, 0, 0, 1, 0, 0, 1, 0}}));
    double diff = 0.0;
    for (std::size_t i = 0; i < a.documents.size(); ++i) {
        diff = std::max(diff, std::abs(a.documents.data()[i] - b.documents.data()[i]));
    }
    CHECK(diff > 1e-6);
}

TEST_CASE("initialization: shapes, bounds, gains") {
    const auto c = small_config(8, 2, 16);
    const auto p = QsgnnParameters::initialize(c, 11);
    CHECK(p.all_finite());
    CHECK(p == QsgnnParameters::initialize(c, 11));
    CHECK_FALSE(p == QsgnnParameters::initialize(c, 12));
    CHECK(p.at(p.slot("input.w_in")).rows() == 16);
    CHECK(p.at(p.slot("layer0.intra_entity.wk_beta")).rows() == 16);
    CHECK(p.at(p.slot("layer1.inter_document.wk_gamma")).rows() == 16);
    for (const auto& t : p.tensors()) {
        if (t.name.ends_with("norm_gain")) {
            for (double x : t.value.data()) CHECK(x == 1.0);
        } else if (t.value.rows() == 1) {
            for (double x : t.value.data()) CHECK(x == 0.0);
        } else {
            const double bound = std::sqrt(6.0 / static_cast<double>(t.value.rows() + t.value.cols()));
            for (double x : t.value.data()) CHECK(std::abs(x) <= bound);
        }
    }
}

TEST_CASE("checkpoint round trip and shape validation") {
    TempDir dir;
    const auto p = QsgnnParameters::initialize(small_config(8, 2, 16), 1);
    save_checkpoint(dir.file("ck"), p);
    const auto back = load_checkpoint(dir.file("ck"));
    CHECK(back == p);
    CHECK(load_checkpoint(dir.file("ck"), p.config()) == p);
    CHECK_THROWS_AS(load_checkpoint(dir.file("ck"), small_config(4, 2, 16)), ModelError);
    CHECK_THROWS(decode_parameters(encode_parameters(p), small_config(8, 1, 16)));
    auto bytes = encode_parameters(p);
    bytes.resize(bytes.size() - 8);
    CHECK_THROWS(decode_parameters(bytes, p.config()));
}

#include "fixtures.hpp"

#include <cstdlib>
#include <filesystem>
#include <set>
#include <stdexcept>

#include "mlkg/synthgen.hpp"
#include "mlkg/util.hpp"

namespace fs = std::filesystem;

namespace mlkg::testing {

CorpusBundle toy_bundle() {
    CorpusBundle b;
    b.documents = {{"d0", "Toy", "a r b. filler text"}};
    b.chunks = {{"c0", "d0", 0, "a r b."}, {"c1", "d0", 1, "filler text"}};
    b.triples = {{"a", "r", "b", "c0", "d0"}};
    return b;
}

CorpusBundle two_entity_bundle() {
    CorpusBundle b;
    b.documents = {{"d0", "", "alpha links beta"}};
    b.chunks = {{"c0", "d0", 0, "alpha links beta"}};
    b.triples = {{"alpha", "links", "beta", "c0", "d0"}};
    return b;
}

CorpusBundle one_of_each_bundle() {
    CorpusBundle b;
    b.documents = {{"d0", "", "omega is omega"}};
    b.chunks = {{"c0", "d0", 0, "omega is omega"}};
    b.triples = {{"omega", "is", "omega", "c0", "d0"}};
    return b;
}

CorpusBundle random_bundle(std::uint64_t seed, const RandomBundleShape& shape) {
    Rng rng = Rng::stream(seed, "fixture");
    CorpusBundle b;
    const std::size_t docs = 1 + rng.below(shape.max_documents);
    for (std::size_t d = 0; d < docs; ++d) {
        const std::string doc_id = "doc" + std::to_string(d);
        const std::size_t chunks = 1 + rng.below(shape.max_chunks_per_document);
        std::string doc_text;
        for (std::size_t c = 0; c < chunks; ++c) {
            const std::string text = pseudo_word(rng.below(40), seed) + " " + pseudo_word(rng.below(40), seed);
            b.chunks.push_back({doc_id + "_c" + std::to_string(c), doc_id, c, text});
            doc_text += text + " ";
        }
        b.documents.push_back({doc_id, rng.below(2) ? pseudo_word(d + 100, seed) : "", doc_text});
    }
    const std::size_t triples = rng.below(shape.max_triples + 1);
    for (std::size_t t = 0; t < triples; ++t) {
        const auto& chunk = b.chunks[rng.below(b.chunks.size())];
        b.triples.push_back({"e" + std::to_string(rng.below(shape.entity_pool)), "rel" + std::to_string(rng.below(3)),
                             "e" + std::to_string(rng.below(shape.entity_pool)), chunk.chunk_id, chunk.doc_id});
    }
    return b;
}

CorpusBundle path_bundle(std::size_t length) {
    CorpusBundle b;
    for (std::size_t i = 0; i < length; ++i) {
        const std::string d = "p" + std::to_string(i);
        const std::string s = "node" + std::to_string(i), o = "node" + std::to_string(i + 1);
        b.documents.push_back({d, "", s + " next " + o});
        b.chunks.push_back({d + "c", d, 0, s + " next " + o});
        b.triples.push_back({s, "next", o, d + "c", d});
    }
    return b;
}

QsgnnParameters identity_parameters(const ModelConfig& config) {
    QsgnnParameters p = QsgnnParameters::zeros(config);
    const std::size_t n = config.dim;
    for (auto& t : p.tensors()) {
        Matrix& m = t.value;
        const bool is_gain = t.name.ends_with("norm_gain");
        if (is_gain) {
            m.fill(1.0);
        } else if (m.rows() == 1) {
            m.fill(0.0);
        } else {
            for (std::size_t r = 0; r < m.rows(); ++r) {
                for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) = (r % n == c) ? 1.0 : 0.0;
            }
        }
    }
    return p;
}

std::string pseudo_word(std::size_t index, std::uint64_t salt) {
    static const char* kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "tr"};
    static const char* kVowels[] = {"a", "e", "i", "o", "u", "ai", "ou"};
    std::uint64_t x = index * 0x9e3779b97f4a7c15ULL + salt;
    std::string w;
    for (int s = 0; s < 3; ++s) {
        w += kOnsets[x % 16];
        x /= 16;
        w += kVowels[x % 7];
        x /= 7;
    }
    return w + std::to_string(index);
}

CorpusBundle overfit_corpus() {
    CorpusBundle b;
    std::size_t word = 0;
    auto fresh = [&] { return pseudo_word(word++, 11); };
    for (std::size_t pair = 0; pair < 6; ++pair) {
        const std::string bridge = fresh();
        for (std::size_t side = 0; side < 2; ++side) {
            const std::string doc_id = "doc" + std::to_string(2 * pair + side);
            const std::string s = side == 0 ? fresh() : bridge;
            const std::string o = side == 0 ? bridge : fresh();
            const std::string v = fresh();
            const std::string fact = s + " " + v + " " + o + ".";
            const std::string filler = fresh() + " " + fresh() + " " + fresh() + ".";
            b.documents.push_back({doc_id, fresh(), fact + " " + filler});
            b.chunks.push_back({doc_id + "-0", doc_id, 0, fact});
            b.chunks.push_back({doc_id + "-1", doc_id, 1, filler});
            b.triples.push_back({s, v, o, doc_id + "-0", doc_id});
        }
    }
    return b;
}

std::vector<TrainingExample> overfit_examples(const MultiLKG& graph, std::size_t negatives, std::uint64_t seed) {
    auto questions = gen_two_hop(graph, {0, seed});
    const auto one_hop = gen_one_hop(graph);
    for (const auto& q : one_hop) {
        if (questions.size() == 30) break;
        questions.push_back(q);
    }
    const auto source = EmbeddingSource::hashed(seed, 256);
    return emit_examples(questions, graph, source, negatives, seed);
}

CorpusBundle distractor_corpus(const DistractorSpec& spec) {
    Rng rng = Rng::stream(spec.seed, "distractor");
    std::vector<std::string> entities, relations;
    for (std::size_t i = 0; i < spec.entity_pool; ++i) entities.push_back(pseudo_word(i, 101 + spec.seed));
    for (std::size_t i = 0; i < spec.relations; ++i) relations.push_back(pseudo_word(1000 + i, 7 + spec.seed));

    CorpusBundle b;
    for (std::size_t d = 0; d < spec.documents; ++d) {
        const std::string doc_id = "doc" + std::to_string(d);
        std::string doc_text;
        for (std::size_t c = 0; c < spec.chunks_per_document; ++c) {
            const std::string& s = entities[rng.below(entities.size())];
            std::string o = entities[rng.below(entities.size())];
            while (o == s) o = entities[rng.below(entities.size())];
            const std::string& v = relations[rng.below(relations.size())];
            const std::string chunk_id = doc_id + "-" + std::to_string(c);
            const std::string text = s + " " + v + " " + o + ".";
            b.chunks.push_back({chunk_id, doc_id, c, text});
            b.triples.push_back({s, v, o, chunk_id, doc_id});
            doc_text += (c ? " " : "") + text;
        }
        b.documents.push_back({doc_id, "", doc_text});
    }
    return b;
}

TempDir::TempDir() {
    std::string pattern = (fs::temp_directory_path() / "mlkg-test-XXXXXX").string();
    if (!mkdtemp(pattern.data())) throw std::runtime_error("mkdtemp failed");
    path_ = pattern;
}

TempDir::~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
}

}  // namespace mlkg::testing

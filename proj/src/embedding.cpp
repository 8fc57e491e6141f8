#include "mlkg/embedding.hpp"

#include <cctype>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "mlkg/util.hpp"

namespace mlkg {

namespace {

void check_dim(std::size_t dim) {
    if (dim < kMinEmbeddingDim) {
        throw EmbeddingError("embedding dimension must be at least " + std::to_string(kMinEmbeddingDim));
    }
}

bool is_blank(std::string_view text) {
    for (unsigned char c : text) {
        if (!std::isspace(c)) return false;
    }
    return true;
}

// Lowercased whitespace tokens with ASCII punctuation trimmed from both ends.
std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    auto flush = [&] {
        std::size_t b = 0, e = cur.size();
        while (b < e && std::ispunct(static_cast<unsigned char>(cur[b]))) ++b;
        while (e > b && std::ispunct(static_cast<unsigned char>(cur[e - 1]))) --e;
        if (e > b) tokens.push_back(cur.substr(b, e - b));
        cur.clear();
    };
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            flush();
        } else {
            cur.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    flush();
    return tokens;
}

}  // namespace

std::vector<HashedFeature> hashed_features(std::string_view text, std::uint64_t seed, std::size_t dim) {
    std::string seed_bytes(8, '\0');
    for (int i = 0; i < 8; ++i) seed_bytes[i] = static_cast<char>((seed >> (8 * i)) & 0xff);
    const std::uint64_t basis = fnv1a64(seed_bytes);

    std::vector<HashedFeature> out;
    auto add = [&](std::string_view key) {
        const std::uint64_t h = fnv1a64(key, basis);
        out.push_back({static_cast<std::size_t>(h % dim), (h >> 63) ? -1 : 1});
    };
    for (const auto& tok : tokenize(text)) {
        add("w:" + tok);
        for (std::size_t i = 0; i + 3 <= tok.size(); ++i) add("g:" + tok.substr(i, 3));
    }
    return out;
}

EmbeddingSource EmbeddingSource::hashed(std::uint64_t seed, std::size_t dim) {
    check_dim(dim);
    return EmbeddingSource(seed, dim, nullptr);
}

EmbeddingSource EmbeddingSource::from_table(std::unordered_map<std::string, RawEmbedding> table,
                                            std::size_t dim) {
    check_dim(dim);
    for (auto& [key, v] : table) {
        if (v.size() != dim) {
            throw EmbeddingError("embedding for '" + key + "' has dimension " + std::to_string(v.size()) +
                                 ", expected " + std::to_string(dim));
        }
        double norm = 0.0;
        for (double x : v) {
            if (!std::isfinite(x)) throw EmbeddingError("non-finite embedding for '" + key + "'");
            norm += x * x;
        }
        norm = std::sqrt(norm);
        if (norm < kCosineNormFloor) throw EmbeddingError("zero embedding for '" + key + "'");
        for (double& x : v) x /= norm;
    }
    return EmbeddingSource(0, dim,
                           std::make_shared<const std::unordered_map<std::string, RawEmbedding>>(std::move(table)));
}

EmbeddingSource EmbeddingSource::from_file(const std::string& path, std::size_t dim) {
    std::unordered_map<std::string, RawEmbedding> table;
    std::istringstream in(read_file(path));
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto rec = nlohmann::json::parse(line);
            table[rec.at("key").get<std::string>()] = rec.at("vector").get<RawEmbedding>();
        } catch (const nlohmann::json::exception& e) {
            throw EmbeddingError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    auto src = from_table(std::move(table), dim);
    src.file_path_ = path;
    return src;
}

std::string EmbeddingSource::describe() const {
    if (is_hashed()) return "hashed(seed=" + std::to_string(seed_) + ",dim=" + std::to_string(dim_) + ")";
    return "file(" + file_path_ + ",dim=" + std::to_string(dim_) + ")";
}

RawEmbedding EmbeddingSource::embed(std::string_view text) const {
    if (is_blank(text)) throw EmbeddingError("cannot embed empty or all-whitespace text");
    if (!is_hashed()) {
        auto it = table_->find(std::string(text));
        if (it == table_->end()) throw EmbeddingError("missing embedding for key '" + std::string(text) + "'");
        return it->second;
    }
    RawEmbedding v(dim_, 0.0);
    for (const auto& f : hashed_features(text, seed_, dim_)) v[f.bucket] += f.sign;
    double norm = l2_norm(v);
    if (norm == 0.0) {
        v[0] += 1.0;
        norm = 1.0;
    }
    for (double& x : v) x /= norm;
    return v;
}

RawEmbedding embed_text(const EmbeddingSource& source, std::string_view text) { return source.embed(text); }

std::string document_embedding_text(const DocumentNode& d) {
    return d.title.empty() ? d.text : d.title + " " + d.text;
}

RawGraphEmbeddings embed_graph(const EmbeddingSource& source, const MultiLKG& g) {
    const std::size_t dim = source.dim();
    RawGraphEmbeddings out{Matrix(g.entities().size(), dim), Matrix(g.chunks().size(), dim),
                           Matrix(g.documents().size(), dim)};
    auto put = [](Matrix& m, std::size_t r, const RawEmbedding& v) {
        std::copy(v.begin(), v.end(), m.row(r).begin());
    };
    for (std::size_t i = 0; i < g.entities().size(); ++i) put(out.entities, i, source.embed(g.entities()[i].name));
    for (std::size_t i = 0; i < g.chunks().size(); ++i) put(out.chunks, i, source.embed(g.chunks()[i].text));
    for (std::size_t i = 0; i < g.documents().size(); ++i) {
        put(out.documents, i, source.embed(document_embedding_text(g.documents()[i])));
    }
    return out;
}

}  // namespace mlkg

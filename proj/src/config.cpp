#include "mlkg/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <sstream>

#include "mlkg/util.hpp"

extern char** environ;

namespace mlkg {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) {
        throw ConfigError("setting '" + key + "' expects a non-negative integer, got '" + v + "'");
    }
    return out;
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("setting '" + key + "' expects a number, got '" + v + "'");
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    std::string s = v;
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
    if (s == "0" || s == "false" || s == "no" || s == "off") return false;
    throw ConfigError("setting '" + key + "' expects a boolean, got '" + v + "'");
}

template <typename T>
std::string opt_string(const std::optional<T>& v) {
    if (!v) return "default";
    std::ostringstream s;
    s.precision(17);
    s << *v;
    return s.str();
}

std::string num(double v) {
    std::ostringstream s;
    s.precision(17);
    s << v;
    return s.str();
}

}  // namespace

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = {
        "batch_size", "cap",   "checkpoint_every", "corpus",  "dim",     "embedding_dim", "embeddings",
        "epochs",     "examples", "graph",         "hash_dim", "hash_seed", "holdout",     "k",
        "layers",     "lr",    "negatives",        "out",     "params",  "query",         "query_attention",
        "seed",       "tau",   "threads"};
    return keys;
}

void apply_setting(RunConfig& c, const std::string& key, const std::string& raw) {
    const std::string v = trim(raw);
    if (key == "corpus") c.corpus = v;
    else if (key == "graph") c.graph = v;
    else if (key == "embeddings") c.embeddings = v;
    else if (key == "examples") c.examples = v;
    else if (key == "params") c.params = v;
    else if (key == "out") c.out = v;
    else if (key == "query") c.query = v;
    else if (key == "hash_dim") c.hash_dim = to_u64(key, v);
    else if (key == "hash_seed") c.hash_seed = to_u64(key, v);
    else if (key == "embedding_dim") c.embedding_dim = to_u64(key, v);
    else if (key == "dim") c.dim = to_u64(key, v);
    else if (key == "layers") c.layers = to_u64(key, v);
    else if (key == "query_attention") c.query_attention = to_bool(key, v);
    else if (key == "tau") c.tau = to_double(key, v);
    else if (key == "negatives") c.negatives = to_u64(key, v);
    else if (key == "lr") c.lr = to_double(key, v);
    else if (key == "epochs") c.epochs = to_u64(key, v);
    else if (key == "checkpoint_every") c.checkpoint_every = to_u64(key, v);
    else if (key == "holdout") c.holdout = to_double(key, v);
    else if (key == "batch_size") c.batch_size = to_u64(key, v);
    else if (key == "seed") c.seed = to_u64(key, v);
    else if (key == "threads") c.threads = to_u64(key, v);
    else if (key == "cap") c.cap = to_u64(key, v);
    else if (key == "k") c.k = to_u64(key, v);
    else throw ConfigError("unknown setting '" + key + "'");
}

void RunConfig::validate() const {
    if (!(tau > 0.0)) throw ConfigError("tau must be > 0");
    if (dim < 2) throw ConfigError("dim must be >= 2");
    if (negatives < 1) throw ConfigError("negatives must be >= 1");
    if (!(holdout >= 0.0 && holdout < 1.0)) throw ConfigError("holdout must be in [0, 1)");
    if (lr && !(*lr >= 0.0)) throw ConfigError("lr must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (checkpoint_every && *checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
    if (k < 1) throw ConfigError("k must be >= 1");
    if (embeddings.empty() && hash_dim < kMinEmbeddingDim) throw ConfigError("hash_dim must be >= 8");
    if (!embeddings.empty() && embedding_dim < kMinEmbeddingDim) {
        throw ConfigError("embedding_dim (>= 8) is required with an embedding file");
    }
}

EmbeddingSource RunConfig::embedding_source() const {
    if (embeddings.empty()) return EmbeddingSource::hashed(hash_seed, hash_dim);
    return EmbeddingSource::from_file(embeddings, embedding_dim);
}

ModelConfig RunConfig::model_config(std::size_t raw_dim) const {
    ModelConfig m;
    m.raw_dim = raw_dim;
    m.dim = dim;
    m.layers = layers;
    m.query_attention = query_attention;
    return m;
}

TrainConfig RunConfig::train_config(TrainMode mode) const {
    TrainConfig t = TrainConfig::defaults(mode);
    t.tau = tau;
    t.negatives_k = negatives;
    if (lr) t.lr = *lr;
    if (epochs) t.max_epochs = *epochs;
    if (checkpoint_every) t.checkpoint_every = *checkpoint_every;
    t.holdout_fraction = holdout;
    t.batch_size = batch_size;
    t.seed = seed;
    t.threads = threads;
    return t;
}

std::string RunConfig::canonical() const {
    std::map<std::string, std::string> kv{
        {"batch_size", std::to_string(batch_size)},
        {"cap", std::to_string(cap)},
        {"checkpoint_every", opt_string(checkpoint_every)},
        {"corpus", corpus},
        {"dim", std::to_string(dim)},
        {"embedding_dim", std::to_string(embedding_dim)},
        {"embeddings", embeddings},
        {"epochs", opt_string(epochs)},
        {"examples", examples},
        {"graph", graph},
        {"hash_dim", std::to_string(hash_dim)},
        {"hash_seed", std::to_string(hash_seed)},
        {"holdout", num(holdout)},
        {"k", std::to_string(k)},
        {"layers", std::to_string(layers)},
        {"lr", opt_string(lr)},
        {"negatives", std::to_string(negatives)},
        {"out", out},
        {"params", params},
        {"query", query},
        {"query_attention", query_attention ? "true" : "false"},
        {"seed", std::to_string(seed)},
        {"tau", num(tau)},
        {"threads", std::to_string(threads)},
    };
    std::string s;
    for (const auto& [k, v] : kv) s += k + "=" + v + "\n";
    return s;
}

std::string RunConfig::hash() const {
    RunConfig copy = *this;
    copy.threads = 0;
    return hex64(fnv1a64(copy.canonical()));
}

std::map<std::string, std::string> parse_config_text(const std::string& text) {
    std::map<std::string, std::string> out;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
        out[key] = trim(line.substr(eq + 1));
    }
    return out;
}

std::map<std::string, std::string> environment_overrides() {
    std::map<std::string, std::string> out;
    for (char** e = environ; e && *e; ++e) {
        const std::string entry(*e);
        if (entry.rfind("MLKG_", 0) != 0) continue;
        const auto eq = entry.find('=');
        if (eq == std::string::npos) continue;
        out[entry.substr(0, eq)] = entry.substr(eq + 1);
    }
    return out;
}

RunConfig load_config(const std::optional<std::string>& path, const std::map<std::string, std::string>& flags,
                      const std::map<std::string, std::string>& env) {
    RunConfig c;
    if (path) {
        std::string text;
        try {
            text = read_file(*path);
        } catch (const std::exception& e) {
            throw ConfigError(e.what());
        }
        for (const auto& [k, v] : parse_config_text(text)) apply_setting(c, k, v);
    }
    for (const auto& [name, v] : env) {
        if (name.rfind("MLKG_", 0) != 0) continue;
        std::string key = name.substr(5);
        std::transform(key.begin(), key.end(), key.begin(), [](unsigned char ch) { return std::tolower(ch); });
        apply_setting(c, key, v);
    }
    for (const auto& [k, v] : flags) apply_setting(c, k, v);
    c.validate();
    return c;
}

}  // namespace mlkg

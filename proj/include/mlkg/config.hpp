#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlkg/embedding.hpp"
#include "mlkg/model.hpp"
#include "mlkg/training.hpp"

namespace mlkg {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Flat run configuration. Every field has a key of the same name in the
// key = value file format, a MLKG_<KEY> environment override and a
// --<key> flag (underscores become dashes).
struct RunConfig {
    std::string corpus;
    std::string graph;
    std::string embeddings;  // embedding file; hashed embeddings when empty
    std::string examples;
    std::string params;      // checkpoint directory to start from / evaluate
    std::string out;
    std::string query;

    std::size_t hash_dim = 512;
    std::uint64_t hash_seed = 0;
    std::size_t embedding_dim = 0;  // required with an embedding file

    std::size_t dim = 128;
    std::size_t layers = 2;
    bool query_attention = true;

    double tau = 1.0;
    std::size_t negatives = 30;
    std::optional<double> lr;                    // per-mode default when unset
    std::optional<std::size_t> epochs;           // per-mode default when unset
    std::optional<std::size_t> checkpoint_every; // per-mode default when unset
    double holdout = 0.05;
    std::size_t batch_size = 32;

    std::uint64_t seed = 0;
    std::size_t threads = 0;  // 0 = machine parallelism
    std::size_t cap = 10;     // two-hop chains per bridge entity (0 = no cap)
    std::size_t k = 5;

    void validate() const;

    EmbeddingSource embedding_source() const;
    ModelConfig model_config(std::size_t raw_dim) const;
    TrainConfig train_config(TrainMode mode) const;

    // Canonical "key=value" listing of every setting, sorted by key.
    std::string canonical() const;
    // FNV-1a of canonical() without run-local keys (threads).
    std::string hash() const;
};

// All recognized keys.
const std::vector<std::string>& config_keys();

// Applies one setting; throws ConfigError on unknown keys or bad values.
void apply_setting(RunConfig& config, const std::string& key, const std::string& value);

// Parses "key = value" lines ('#' starts a comment).
std::map<std::string, std::string> parse_config_text(const std::string& text);

// Defaults, then the file (if any), then MLKG_* variables from `env`, then
// `flags`. Validates the result.
RunConfig load_config(const std::optional<std::string>& path, const std::map<std::string, std::string>& flags,
                      const std::map<std::string, std::string>& env);

// MLKG_* variables from the process environment.
std::map<std::string, std::string> environment_overrides();

}  // namespace mlkg

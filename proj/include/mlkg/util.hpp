#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace mlkg {

// 64-bit FNV-1a. Stable across platforms; used for feature hashing,
// config hashes and output digests.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

// Digest of a file's bytes (FNV-1a 64), hex-encoded.
std::string file_digest(const std::string& path);

// splitmix64-based generator. Bit-exact everywhere, unlike the
// standard distributions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    // Independent stream derived from a run seed and a stream name
    // ("init", "shuffle", "negatives", "graph", ...).
    static Rng stream(std::uint64_t seed, std::string_view name);

    std::uint64_t next_u64();
    // Uniform in [0, 1).
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    // Uniform integer in [0, bound).
    std::uint64_t below(std::uint64_t bound);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
};

// Runs body(begin, end) over [0, count) split into contiguous ranges on up to
// `threads` threads. Callers must write disjoint outputs per index so the
// result is independent of the thread count.
void parallel_for(std::size_t count, std::size_t threads,
                  const std::function<void(std::size_t, std::size_t)>& body);

// Process-wide default used by kernels that do not take an explicit count.
void set_default_threads(std::size_t threads);
std::size_t default_threads();

// Writes `content` to `path` via a temporary file and rename.
void write_file_atomic(const std::string& path, std::string_view content);
std::string read_file(const std::string& path);

}  // namespace mlkg

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <tuple>
#include <vector>

#include "mlkg/matrix.hpp"

namespace mlkg::ad {

using Index = std::vector<std::uint32_t>;
using IndexPtr = std::shared_ptr<const Index>;

inline IndexPtr make_index(Index ix) { return std::make_shared<const Index>(std::move(ix)); }

struct Var {
    std::uint32_t id = 0;
};

// Reverse-mode tape over dense matrix operations. Every op has a fixed
// summation order, so values and gradients are bit-reproducible and do
// not depend on the thread count. Pure ops are memoized on their inputs:
// building the same expression twice returns the same Var, which lets a
// batch of queries share every query-independent product.
class Tape {
public:
    explicit Tape(bool record_gradients = true, std::size_t threads = 0);

    Var input(Matrix value, bool requires_grad = false);

    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    Var scale(Var a, double factor);
    // a + row broadcast over every row of a.
    Var add_row(Var a, Var row);
    Var relu(Var a);
    Var slice_rows(Var a, std::size_t begin, std::size_t count);
    Var concat_rows(std::span<const Var> parts);

    // out[e] = cos(a[left[e]], b[right[e]])  (E x 1)
    Var pair_cosine(Var a, Var b, const IndexPtr& left, const IndexPtr& right);
    // out[e] = cos(q, a[left[e]] + b[right[e]])  with q a 1 x n row (E x 1)
    Var query_pair_cosine(Var q, Var a, Var b, const IndexPtr& left, const IndexPtr& right);
    // out[e] = cos(q, a[rows[e]])  (E x 1)
    Var row_cosine(Var q, Var a, const IndexPtr& rows);
    // Softmax of an E x 1 column within segments [offsets[i], offsets[i+1]).
    Var segment_softmax(Var logits, const IndexPtr& offsets);
    // out[i] = sum_{e in segment i} weights[e] * values[source[e]]  (S x n)
    Var attend(Var values, Var weights, const IndexPtr& source, const IndexPtr& offsets);
    // Per-row layer normalization with gain/bias rows.
    Var layer_norm(Var x, Var gain, Var bias, double eps);
    // -log softmax of scores[positive]/tau against scores[negatives]/tau.
    Var nt_xent(Var scores, std::uint32_t positive, const IndexPtr& negatives, double tau);
    // factor * sum of 1 x 1 terms.
    Var sum(std::span<const Var> terms, double factor = 1.0);

    const Matrix& value(Var v) const { return nodes_[v.id].value; }
    // Gradient of the last backward() root; zero-shaped if never reached.
    const Matrix& grad(Var v) const { return nodes_[v.id].grad; }
    bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

    void backward(Var root);

    std::size_t size() const { return nodes_.size(); }
    std::size_t threads() const { return threads_; }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        bool requires_grad = false;
        std::function<void(Tape&, std::uint32_t)> backprop;
    };

    using Key = std::tuple<int, std::uint32_t, std::uint32_t, std::uint32_t, const void*, const void*, double,
                           std::uint64_t>;

    Var push(Matrix value, bool requires_grad, std::function<void(Tape&, std::uint32_t)> backprop);
    Var memo(const Key& key, const std::function<Var()>& build);
    Matrix& grad_ref(std::uint32_t id);
    bool needs(std::initializer_list<Var> vars) const;
    // Memo keys use index addresses; the tape keeps those indexes alive.
    const void* hold(const IndexPtr& ix);

    bool record_;
    std::size_t threads_;
    std::vector<Node> nodes_;
    std::map<Key, Var> memo_;
    std::map<const void*, IndexPtr> held_;
};

}  // namespace mlkg::ad

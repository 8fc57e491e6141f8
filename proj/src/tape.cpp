#include "mlkg/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mlkg/util.hpp"

namespace mlkg::ad {

namespace {

enum Op : int {
    kMatmul = 1,
    kAdd,
    kScale,
    kAddRow,
    kRelu,
    kSlice,
    kConcat,
    kPairCos,
    kQueryPairCos,
    kRowCos,
    kSoftmax,
    kAttend,
    kLayerNorm,
};

void require(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
}

struct CosParts {
    double cos = 0.0;
    double inv = 0.0;     // 1 / (|u| |v|)
    double u_norm2 = 0.0;
    double v_norm2 = 0.0;
    bool defined = false;
};

CosParts cos_parts(const double* u, const double* v, std::size_t n) {
    double uu = 0.0, vv = 0.0, uv = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        uu += u[j] * u[j];
        vv += v[j] * v[j];
        uv += u[j] * v[j];
    }
    CosParts p;
    p.u_norm2 = uu;
    p.v_norm2 = vv;
    const double nu = std::sqrt(uu), nv = std::sqrt(vv);
    if (nu < kCosineNormFloor || nv < kCosineNormFloor) return p;
    p.defined = true;
    p.inv = 1.0 / (nu * nv);
    p.cos = uv * p.inv;
    return p;
}

// d cos / d u scaled by g, accumulated into du.
void cos_grad(const CosParts& p, double g, const double* u, const double* v, double* du, std::size_t n) {
    if (!p.defined || g == 0.0) return;
    const double a = g * p.inv;
    const double b = g * p.cos / p.u_norm2;
    for (std::size_t j = 0; j < n; ++j) du[j] += a * v[j] - b * u[j];
}

}  // namespace

Tape::Tape(bool record_gradients, std::size_t threads)
    : record_(record_gradients), threads_(threads == 0 ? default_threads() : threads) {
    nodes_.reserve(1024);
}

Var Tape::push(Matrix value, bool requires_grad, std::function<void(Tape&, std::uint32_t)> backprop) {
    Node node;
    node.value = std::move(value);
    node.requires_grad = record_ && requires_grad;
    if (node.requires_grad) node.backprop = std::move(backprop);
    nodes_.push_back(std::move(node));
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::memo(const Key& key, const std::function<Var()>& build) {
    auto it = memo_.find(key);
    if (it != memo_.end()) return it->second;
    Var v = build();
    memo_.emplace(key, v);
    return v;
}

Matrix& Tape::grad_ref(std::uint32_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty() && !n.value.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
    return n.grad;
}

bool Tape::needs(std::initializer_list<Var> vars) const {
    if (!record_) return false;
    for (auto v : vars) {
        if (nodes_[v.id].requires_grad) return true;
    }
    return false;
}

const void* Tape::hold(const IndexPtr& ix) {
    held_.emplace(ix.get(), ix);
    return ix.get();
}

Var Tape::input(Matrix value, bool requires_grad) { return push(std::move(value), requires_grad, {}); }

Var Tape::matmul(Var a, Var b) {
    return memo({kMatmul, a.id, b.id, 0, nullptr, nullptr, 0.0, 0}, [&] {
        const Matrix& A = value(a);
        const Matrix& B = value(b);
        if (A.cols() != B.rows()) {
            throw std::invalid_argument("matmul shape mismatch: " + A.shape_string() + " * " + B.shape_string());
        }
        Matrix out(A.rows(), B.cols());
        const std::size_t inner = A.cols(), width = B.cols();
        parallel_for(A.rows(), threads_, [&](std::size_t rb, std::size_t re) {
            for (std::size_t i = rb; i < re; ++i) {
                double* o = out.row(i).data();
                const double* ar = A.row(i).data();
                for (std::size_t k = 0; k < inner; ++k) {
                    const double av = ar[k];
                    if (av == 0.0) continue;
                    const double* br = B.row(k).data();
                    for (std::size_t j = 0; j < width; ++j) o[j] += av * br[j];
                }
            }
        });
        return push(std::move(out), needs({a, b}), [a, b](Tape& t, std::uint32_t self) {
            const Matrix& G = t.nodes_[self].grad;
            const Matrix& A = t.value(a);
            const Matrix& B = t.value(b);
            const std::size_t inner = A.cols(), width = B.cols();
            if (t.requires_grad(a)) {
                Matrix& dA = t.grad_ref(a.id);
                parallel_for(A.rows(), t.threads_, [&](std::size_t rb, std::size_t re) {
                    for (std::size_t i = rb; i < re; ++i) {
                        const double* g = G.row(i).data();
                        double* da = dA.row(i).data();
                        for (std::size_t k = 0; k < inner; ++k) {
                            const double* br = B.row(k).data();
                            double s = 0.0;
                            for (std::size_t j = 0; j < width; ++j) s += g[j] * br[j];
                            da[k] += s;
                        }
                    }
                });
            }
            if (t.requires_grad(b)) {
                Matrix& dB = t.grad_ref(b.id);
                parallel_for(inner, t.threads_, [&](std::size_t kb, std::size_t ke) {
                    for (std::size_t i = 0; i < A.rows(); ++i) {
                        const double* g = G.row(i).data();
                        const double* ar = A.row(i).data();
                        for (std::size_t k = kb; k < ke; ++k) {
                            const double av = ar[k];
                            if (av == 0.0) continue;
                            double* db = dB.row(k).data();
                            for (std::size_t j = 0; j < width; ++j) db[j] += av * g[j];
                        }
                    }
                });
            }
        });
    });
}

Var Tape::add(Var a, Var b) {
    return memo({kAdd, a.id, b.id, 0, nullptr, nullptr, 0.0, 0}, [&] {
        const Matrix& A = value(a);
        const Matrix& B = value(b);
        require(A.same_shape(B), "add: shape mismatch");
        Matrix out = A;
        for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += B.data()[i];
        return push(std::move(out), needs({a, b}), [a, b](Tape& t, std::uint32_t self) {
            const Matrix& G = t.nodes_[self].grad;
            for (Var v : {a, b}) {
                if (!t.requires_grad(v)) continue;
                Matrix& d = t.grad_ref(v.id);
                for (std::size_t i = 0; i < d.size(); ++i) d.data()[i] += G.data()[i];
            }
        });
    });
}

Var Tape::scale(Var a, double factor) {
    return memo({kScale, a.id, 0, 0, nullptr, nullptr, factor, 0}, [&] {
        Matrix out = value(a);
        for (double& x : out.data()) x *= factor;
        return push(std::move(out), needs({a}), [a, factor](Tape& t, std::uint32_t self) {
            const Matrix& G = t.nodes_[self].grad;
            Matrix& d = t.grad_ref(a.id);
            for (std::size_t i = 0; i < d.size(); ++i) d.data()[i] += factor * G.data()[i];
        });
    });
}

Var Tape::add_row(Var a, Var row) {
    return memo({kAddRow, a.id, row.id, 0, nullptr, nullptr, 0.0, 0}, [&] {
        const Matrix& A = value(a);
        const Matrix& R = value(row);
        require(R.rows() == 1 && R.cols() == A.cols(), "add_row: shape mismatch");
        Matrix out = A;
        for (std::size_t i = 0; i < out.rows(); ++i) {
            auto r = out.row(i);
            for (std::size_t j = 0; j < r.size(); ++j) r[j] += R(0, j);
        }
        return push(std::move(out), needs({a, row}), [a, row](Tape& t, std::uint32_t self) {
            const Matrix& G = t.nodes_[self].grad;
            if (t.requires_grad(a)) {
                Matrix& d = t.grad_ref(a.id);
                for (std::size_t i = 0; i < d.size(); ++i) d.data()[i] += G.data()[i];
            }
            if (t.requires_grad(row)) {
                Matrix& d = t.grad_ref(row.id);
                for (std::size_t i = 0; i < G.rows(); ++i) {
                    for (std::size_t j = 0; j < G.cols(); ++j) d(0, j) += G(i, j);
                }
            }
        });
    });
}

Var Tape::relu(Var a) {
    return memo({kRelu, a.id, 0, 0, nullptr, nullptr, 0.0, 0}, [&] {
        Matrix out = value(a);
        for (double& x : out.data()) x = x > 0.0 ? x : 0.0;
        return push(std::move(out), needs({a}), [a](Tape& t, std::uint32_t self) {
            const Matrix& G = t.nodes_[self].grad;
            const Matrix& X = t.value(a);
            Matrix& d = t.grad_ref(a.id);
            for (std::size_t i = 0; i < d.size(); ++i) {
                if (X.data()[i] > 0.0) d.data()[i] += G.data()[i];
            }
        });
    });
}

Var Tape::slice_rows(Var a, std::size_t begin, std::size_t count) {
    return memo({kSlice, a.id, static_cast<std::uint32_t>(begin), static_cast<std::uint32_t>(count), nullptr,
                 nullptr, 0.0, 0},
                [&] {
                    const Matrix& A = value(a);
                    require(begin + count <= A.rows(), "slice_rows: out of range");
                    Matrix out(count, A.cols());
                    std::copy(A.data().begin() + static_cast<std::ptrdiff_t>(begin * A.cols()),
                              A.data().begin() + static_cast<std::ptrdiff_t>((begin + count) * A.cols()),
                              out.data().begin());
                    return push(std::move(out), needs({a}), [a, begin](Tape& t, std::uint32_t self) {
                        const Matrix& G = t.nodes_[self].grad;
                        Matrix& d = t.grad_ref(a.id);
                        const std::size_t off = begin * d.cols();
                        for (std::size_t i = 0; i < G.size(); ++i) d.data()[off + i] += G.data()[i];
                    });
                });
}

Var Tape::concat_rows(std::span<const Var> parts) {
    require(!parts.empty(), "concat_rows: no parts");
    if (parts.size() == 1) return parts[0];
    // Memoized on a hash of the part ids.
    std::uint64_t h = 1469598103934665603ULL;
    for (auto p : parts) h = (h ^ p.id) * 1099511628211ULL;
    return memo({kConcat, parts[0].id, static_cast<std::uint32_t>(parts.size()),
                 0, nullptr, nullptr, 0.0, h},
                [&] {
                    const std::size_t cols = value(parts[0]).cols();
                    std::size_t rows = 0;
                    bool grad = false;
                    for (auto p : parts) {
                        require(value(p).cols() == cols, "concat_rows: column mismatch");
                        rows += value(p).rows();
                        grad = grad || needs({p});
                    }
                    Matrix out(rows, cols);
                    std::size_t at = 0;
                    for (auto p : parts) {
                        const auto& d = value(p).data();
                        std::copy(d.begin(), d.end(), out.data().begin() + static_cast<std::ptrdiff_t>(at));
                        at += d.size();
                    }
                    std::vector<Var> ps(parts.begin(), parts.end());
                    return push(std::move(out), grad, [ps](Tape& t, std::uint32_t self) {
                        const Matrix& G = t.nodes_[self].grad;
                        std::size_t at = 0;
                        for (auto p : ps) {
                            const std::size_t n = t.value(p).size();
                            if (t.requires_grad(p)) {
                                Matrix& d = t.grad_ref(p.id);
                                for (std::size_t i = 0; i < n; ++i) d.data()[i] += G.data()[at + i];
                            }
                            at += n;
                        }
                    });
                });
}

Var Tape::pair_cosine(Var a, Var b, const IndexPtr& left, const IndexPtr& right) {
    return memo({kPairCos, a.id, b.id, 0, hold(left), hold(right), 0.0, 0}, [&] {
        const Matrix& A = value(a);
        const Matrix& B = value(b);
        require(A.cols() == B.cols() && left->size() == right->size(), "pair_cosine: shape mismatch");
        const std::size_t n = A.cols();
        Matrix out(left->size(), 1);
        for (std::size_t e = 0; e < left->size(); ++e) {
            out(e, 0) = cos_parts(A.row((*left)[e]).data(), B.row((*right)[e]).data(), n).cos;
        }
        return push(std::move(out), needs({a, b}), [a, b, left, right](Tape& t, std::uint32_t self) {
            const Matrix& G = t.nodes_[self].grad;
            const Matrix& A = t.value(a);
            const Matrix& B = t.value(b);
            const std::size_t n = A.cols();
            Matrix* dA = t.requires_grad(a) ? &t.grad_ref(a.id) : nullptr;
            Matrix* dB = t.requires_grad(b) ? &t.grad_ref(b.id) : nullptr;
            for (std::size_t e = 0; e < left->size(); ++e) {
                const double* u = A.row((*left)[e]).data();
                const double* v = B.row((*right)[e]).data();
                const CosParts p = cos_parts(u, v, n);
                if (dA) cos_grad(p, G(e, 0), u, v, dA->row((*left)[e]).data(), n);
                if (dB) {
                    CosParts q = p;
                    std::swap(q.u_norm2, q.v_norm2);
                    cos_grad(q, G(e, 0), v, u, dB->row((*right)[e]).data(), n);
                }
            }
        });
    });
}

Var Tape::query_pair_cosine(Var q, Var a, Var b, const IndexPtr& left, const IndexPtr& right) {
    return memo({kQueryPairCos, q.id, a.id, b.id, hold(left), hold(right), 0.0, 0}, [&] {
        const Matrix& Q = value(q);
        const Matrix& A = value(a);
        const Matrix& B = value(b);
        require(Q.rows() == 1 && Q.cols() == A.cols() && A.cols() == B.cols() && left->size() == right->size(),
                "query_pair_cosine: shape mismatch");
        const std::size_t n = A.cols();
        Matrix out(left->size(), 1);
        std::vector<double> k(n);
        for (std::size_t e = 0; e < left->size(); ++e) {
            const double* ar = A.row((*left)[e]).data();
            const double* br = B.row((*right)[e]).data();
            for (std::size_t j = 0; j < n; ++j) k[j] = ar[j] + br[j];
            out(e, 0) = cos_parts(Q.row(0).data(), k.data(), n).cos;
        }
        return push(std::move(out), needs({q, a, b}), [q, a, b, left, right](Tape& t, std::uint32_t self) {
            const Matrix& G = t.nodes_[self].grad;
            const Matrix& Q = t.value(q);
            const Matrix& A = t.value(a);
            const Matrix& B = t.value(b);
            const std::size_t n = A.cols();
            Matrix* dQ = t.requires_grad(q) ? &t.grad_ref(q.id) : nullptr;
            Matrix* dA = t.requires_grad(a) ? &t.grad_ref(a.id) : nullptr;
            Matrix* dB = t.requires_grad(b) ? &t.grad_ref(b.id) : nullptr;
            std::vector<double> k(n), dk(n);
            const double* qv = Q.row(0).data();
            for (std::size_t e = 0; e < left->size(); ++e) {
                const double g = G(e, 0);
                if (g == 0.0) continue;
                const double* ar = A.row((*left)[e]).data();
                const double* br = B.row((*right)[e]).data();
                for (std::size_t j = 0; j < n; ++j) k[j] = ar[j] + br[j];
                const CosParts p = cos_parts(qv, k.data(), n);
                if (dQ) cos_grad(p, g, qv, k.data(), dQ->row(0).data(), n);
                if (dA || dB) {
                    std::fill(dk.begin(), dk.end(), 0.0);
                    CosParts r = p;
                    std::swap(r.u_norm2, r.v_norm2);
                    cos_grad(r, g, k.data(), qv, dk.data(), n);
                    if (dA) {
                        double* d = dA->row((*left)[e]).data();
                        for (std::size_t j = 0; j < n; ++j) d[j] += dk[j];
                    }
                    if (dB) {
                        double* d = dB->row((*right)[e]).data();
                        for (std::size_t j = 0; j < n; ++j) d[j] += dk[j];
                    }
                }
            }
        });
    });
}

Var Tape::row_cosine(Var q, Var a, const IndexPtr& rows) {
    return memo({kRowCos, q.id, a.id, 0, hold(rows), nullptr, 0.0, 0}, [&] {
        const Matrix& Q = value(q);
        const Matrix& A = value(a);
        require(Q.rows() == 1 && Q.cols() == A.cols(), "row_cosine: shape mismatch");
        const std::size_t n = A.cols();
        Matrix out(rows->size(), 1);
        for (std::size_t e = 0; e < rows->size(); ++e) {
            out(e, 0) = cos_parts(Q.row(0).data(), A.row((*rows)[e]).data(), n).cos;
        }
        return push(std::move(out), needs({q, a}), [q, a, rows](Tape& t, std::uint32_t self) {
            const Matrix& G = t.nodes_[self].grad;
            const Matrix& Q = t.value(q);
            const Matrix& A = t.value(a);
            const std::size_t n = A.cols();
            Matrix* dQ = t.requires_grad(q) ? &t.grad_ref(q.id) : nullptr;
            Matrix* dA = t.requires_grad(a) ? &t.grad_ref(a.id) : nullptr;
            const double* qv = Q.row(0).data();
            for (std::size_t e = 0; e < rows->size(); ++e) {
                const double* av = A.row((*rows)[e]).data();
                const CosParts p = cos_parts(qv, av, n);
                if (dQ) cos_grad(p, G(e, 0), qv, av, dQ->row(0).data(), n);
                if (dA) {
                    CosParts r = p;
                    std::swap(r.u_norm2, r.v_norm2);
                    cos_grad(r, G(e, 0), av, qv, dA->row((*rows)[e]).data(), n);
                }
            }
        });
    });
}

Var Tape::segment_softmax(Var logits, const IndexPtr& offsets) {
    return memo({kSoftmax, logits.id, 0, 0, hold(offsets), nullptr, 0.0, 0}, [&] {
        const Matrix& X = value(logits);
        require(X.cols() == 1 && !offsets->empty() && offsets->back() == X.rows(), "segment_softmax: bad offsets");
        Matrix out(X.rows(), 1);
        for (std::size_t s = 0; s + 1 < offsets->size(); ++s) {
            const std::size_t b = (*offsets)[s], e = (*offsets)[s + 1];
            if (b == e) continue;
            double mx = X(b, 0);
            for (std::size_t i = b + 1; i < e; ++i) mx = std::max(mx, X(i, 0));
            double z = 0.0;
            for (std::size_t i = b; i < e; ++i) {
                out(i, 0) = std::exp(X(i, 0) - mx);
                z += out(i, 0);
            }
            for (std::size_t i = b; i < e; ++i) out(i, 0) /= z;
        }
        return push(std::move(out), needs({logits}), [logits, offsets](Tape& t, std::uint32_t self) {
            const Matrix& G = t.nodes_[self].grad;
            const Matrix& Y = t.nodes_[self].value;
            Matrix& d = t.grad_ref(logits.id);
            for (std::size_t s = 0; s + 1 < offsets->size(); ++s) {
                const std::size_t b = (*offsets)[s], e = (*offsets)[s + 1];
                double inner = 0.0;
                for (std::size_t i = b; i < e; ++i) inner += G(i, 0) * Y(i, 0);
                for (std::size_t i = b; i < e; ++i) d(i, 0) += Y(i, 0) * (G(i, 0) - inner);
            }
        });
    });
}

Var Tape::attend(Var values, Var weights, const IndexPtr& source, const IndexPtr& offsets) {
    return memo({kAttend, values.id, weights.id, 0, hold(source), hold(offsets), 0.0, 0}, [&] {
        const Matrix& V = value(values);
        const Matrix& W = value(weights);
        require(W.cols() == 1 && W.rows() == source->size() && offsets->back() == source->size(),
                "attend: shape mismatch");
        const std::size_t n = V.cols();
        Matrix out(offsets->size() - 1, n);
        for (std::size_t s = 0; s + 1 < offsets->size(); ++s) {
            double* o = out.row(s).data();
            for (std::size_t e = (*offsets)[s]; e < (*offsets)[s + 1]; ++e) {
                const double w = W(e, 0);
                const double* v = V.row((*source)[e]).data();
                for (std::size_t j = 0; j < n; ++j) o[j] += w * v[j];
            }
        }
        return push(std::move(out), needs({values, weights}),
                    [values, weights, source, offsets](Tape& t, std::uint32_t self) {
                        const Matrix& G = t.nodes_[self].grad;
                        const Matrix& V = t.value(values);
                        const Matrix& W = t.value(weights);
                        const std::size_t n = V.cols();
                        Matrix* dV = t.requires_grad(values) ? &t.grad_ref(values.id) : nullptr;
                        Matrix* dW = t.requires_grad(weights) ? &t.grad_ref(weights.id) : nullptr;
                        for (std::size_t s = 0; s + 1 < offsets->size(); ++s) {
                            const double* g = G.row(s).data();
                            for (std::size_t e = (*offsets)[s]; e < (*offsets)[s + 1]; ++e) {
                                const std::uint32_t src = (*source)[e];
                                if (dW) {
                                    const double* v = V.row(src).data();
                                    double acc = 0.0;
                                    for (std::size_t j = 0; j < n; ++j) acc += g[j] * v[j];
                                    (*dW)(e, 0) += acc;
                                }
                                if (dV) {
                                    const double w = W(e, 0);
                                    double* dv = dV->row(src).data();
                                    for (std::size_t j = 0; j < n; ++j) dv[j] += w * g[j];
                                }
                            }
                        }
                    });
    });
}

Var Tape::layer_norm(Var x, Var gain, Var bias, double eps) {
    return memo({kLayerNorm, x.id, gain.id, bias.id, nullptr, nullptr, eps, 0}, [&] {
        const Matrix& X = value(x);
        const Matrix& Gn = value(gain);
        const Matrix& Bs = value(bias);
        const std::size_t n = X.cols();
        require(Gn.rows() == 1 && Gn.cols() == n && Bs.rows() == 1 && Bs.cols() == n, "layer_norm: shape mismatch");
        Matrix out(X.rows(), n);
        for (std::size_t i = 0; i < X.rows(); ++i) {
            const double* xr = X.row(i).data();
            double mean = 0.0;
            for (std::size_t j = 0; j < n; ++j) mean += xr[j];
            mean /= static_cast<double>(n);
            double var = 0.0;
            for (std::size_t j = 0; j < n; ++j) var += (xr[j] - mean) * (xr[j] - mean);
            var /= static_cast<double>(n);
            const double r = 1.0 / std::sqrt(var + eps);
            double* o = out.row(i).data();
            for (std::size_t j = 0; j < n; ++j) o[j] = Gn(0, j) * (xr[j] - mean) * r + Bs(0, j);
        }
        return push(std::move(out), needs({x, gain, bias}), [x, gain, bias, eps](Tape& t, std::uint32_t self) {
            const Matrix& G = t.nodes_[self].grad;
            const Matrix& X = t.value(x);
            const Matrix& Gn = t.value(gain);
            const std::size_t n = X.cols();
            const double nn = static_cast<double>(n);
            Matrix* dX = t.requires_grad(x) ? &t.grad_ref(x.id) : nullptr;
            Matrix* dG = t.requires_grad(gain) ? &t.grad_ref(gain.id) : nullptr;
            Matrix* dB = t.requires_grad(bias) ? &t.grad_ref(bias.id) : nullptr;
            std::vector<double> xhat(n), dxhat(n);
            for (std::size_t i = 0; i < X.rows(); ++i) {
                const double* xr = X.row(i).data();
                const double* g = G.row(i).data();
                double mean = 0.0;
                for (std::size_t j = 0; j < n; ++j) mean += xr[j];
                mean /= nn;
                double var = 0.0;
                for (std::size_t j = 0; j < n; ++j) var += (xr[j] - mean) * (xr[j] - mean);
                var /= nn;
                const double r = 1.0 / std::sqrt(var + eps);
                double sum_d = 0.0, sum_dx = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    xhat[j] = (xr[j] - mean) * r;
                    dxhat[j] = g[j] * Gn(0, j);
                    sum_d += dxhat[j];
                    sum_dx += dxhat[j] * xhat[j];
                }
                if (dG) {
                    for (std::size_t j = 0; j < n; ++j) (*dG)(0, j) += g[j] * xhat[j];
                }
                if (dB) {
                    for (std::size_t j = 0; j < n; ++j) (*dB)(0, j) += g[j];
                }
                if (dX) {
                    double* d = dX->row(i).data();
                    for (std::size_t j = 0; j < n; ++j) d[j] += r / nn * (nn * dxhat[j] - sum_d - xhat[j] * sum_dx);
                }
            }
        });
    });
}

Var Tape::nt_xent(Var scores, std::uint32_t positive, const IndexPtr& negatives, double tau) {
    const Matrix& S = value(scores);
    require(S.cols() == 1 && positive < S.rows() && !negatives->empty(), "nt_xent: bad arguments");
    require(tau > 0.0, "nt_xent: tau must be positive");
    double mx = S(positive, 0) / tau;
    for (auto j : *negatives) mx = std::max(mx, S(j, 0) / tau);
    double z = std::exp(S(positive, 0) / tau - mx);
    for (auto j : *negatives) z += std::exp(S(j, 0) / tau - mx);
    const double loss = -(S(positive, 0) / tau - mx) + std::log(z);
    Matrix out(1, 1, loss);
    return push(std::move(out), needs({scores}), [scores, positive, negatives, tau, mx, z](Tape& t, std::uint32_t self) {
        const double g = t.nodes_[self].grad(0, 0);
        const Matrix& S = t.value(scores);
        Matrix& d = t.grad_ref(scores.id);
        d(positive, 0) += g * (std::exp(S(positive, 0) / tau - mx) / z - 1.0) / tau;
        for (auto j : *negatives) d(j, 0) += g * (std::exp(S(j, 0) / tau - mx) / z) / tau;
    });
}

Var Tape::sum(std::span<const Var> terms, double factor) {
    double total = 0.0;
    bool grad = false;
    for (auto v : terms) {
        require(value(v).rows() == 1 && value(v).cols() == 1, "sum: terms must be scalars");
        total += value(v)(0, 0);
        grad = grad || needs({v});
    }
    std::vector<Var> ts(terms.begin(), terms.end());
    return push(Matrix(1, 1, factor * total), grad, [ts, factor](Tape& t, std::uint32_t self) {
        const double g = t.nodes_[self].grad(0, 0);
        for (auto v : ts) {
            if (t.requires_grad(v)) t.grad_ref(v.id)(0, 0) += factor * g;
        }
    });
}

void Tape::backward(Var root) {
    require(record_, "backward on a tape that does not record gradients");
    for (auto& n : nodes_) n.grad = Matrix();
    require(value(root).rows() == 1 && value(root).cols() == 1, "backward root must be a scalar");
    grad_ref(root.id)(0, 0) = 1.0;
    for (std::uint32_t id = root.id + 1; id-- > 0;) {
        Node& n = nodes_[id];
        if (!n.requires_grad || !n.backprop || n.grad.empty()) continue;
        n.backprop(*this, id);
    }
}

}  // namespace mlkg::ad

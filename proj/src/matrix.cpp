#include "mlkg/matrix.hpp"

#include <cmath>

namespace mlkg {

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("matmul shape mismatch: " + a.shape_string() + " * " +
                                    b.shape_string());
    }
    Matrix out(a.rows(), b.cols());
    const std::size_t inner = a.cols();
    const std::size_t width = b.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* o = out.row(i).data();
        const double* ar = a.row(i).data();
        for (std::size_t k = 0; k < inner; ++k) {
            const double av = ar[k];
            if (av == 0.0) continue;
            const double* br = b.row(k).data();
            for (std::size_t j = 0; j < width; ++j) o[j] += av * br[j];
        }
    }
    return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double cosine(std::span<const double> a, std::span<const double> b) {
    const double na = l2_norm(a);
    const double nb = l2_norm(b);
    if (na < kCosineNormFloor || nb < kCosineNormFloor) return 0.0;
    return dot(a, b) / (na * nb);
}

bool all_finite(const Matrix& m) {
    for (double v : m.data()) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

}  // namespace mlkg

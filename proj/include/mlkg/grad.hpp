#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlkg/embedding.hpp"
#include "mlkg/model.hpp"

namespace mlkg {

class GradientError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Everything the loss needs besides parameters: attention layouts and the
// raw (pre-bottleneck) node embeddings.
struct ModelInputs {
    const ModelGraph* graph = nullptr;
    const RawGraphEmbeddings* raw = nullptr;
};

// A training example resolved against a graph: raw query embedding and
// document row indices.
struct ResolvedExample {
    RawEmbedding query;
    std::vector<std::uint32_t> positives;
    std::vector<std::uint32_t> negatives;
};

struct LossConfig {
    double tau = 1.0;
    // Multiplies the batch-mean loss (used by linearity tests).
    double scale = 1.0;
};

// One gradient per parameter tensor, same order and shapes.
struct GradientBundle {
    std::vector<Matrix> grads;
};

struct LossAndGradient {
    double loss = 0.0;
    GradientBundle gradient;
};

// Mean NT-Xent over every (query, positive) pair in the batch.
double batch_loss(const QsgnnParameters& params, const ModelInputs& inputs, const std::vector<ResolvedExample>& batch,
                  const LossConfig& loss, std::size_t threads = 0);

// Exact reverse-mode gradient of batch_loss. Throws GradientError naming
// the tensor when the loss or a gradient is not finite.
LossAndGradient backward(const QsgnnParameters& params, const ModelInputs& inputs,
                         const std::vector<ResolvedExample>& batch, const LossConfig& loss, std::size_t threads = 0);

struct FdReport {
    double max_relative_error = 0.0;
    std::string worst_tensor;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t coordinates_checked = 0;
    // Coordinates at or above tolerance whose central difference moves by at
    // least half the discrepancy when the step shrinks to eps / 10: a ReLU
    // switches inside the stencil. These are judged by the eps / 10 value.
    std::size_t kink_coordinates = 0;
    double max_error_off_kinks = 0.0;
    double max_kink_recheck_error = 0.0;
};

// Below this both gradients are lost in finite-difference round-off
// (about 1e-16 |L| / eps).
inline constexpr double kFdResolution = 1e-8;

// Relative error |a - f| / max(|a|, |f|); 0 when |a| and |f| are both
// below kFdResolution.
double fd_relative_error(double analytic, double numeric);

// Central differences (L(theta + eps) - L(theta - eps)) / 2 eps on up to
// `samples_per_tensor` coordinates per tensor (all of them when the
// tensor is smaller), compared to the analytic gradient.
// Off-kink error and kink re-check error both below tolerance.
bool fd_passes(const FdReport& report, double tolerance);

FdReport fd_check(const QsgnnParameters& params, const ModelInputs& inputs, const std::vector<ResolvedExample>& batch,
                  const LossConfig& loss, double eps, std::size_t samples_per_tensor = 20, std::uint64_t seed = 0,
                  double tolerance = 1e-4);

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct OptimizerState {
    AdamConfig config;
    std::vector<Matrix> first_moment;
    std::vector<Matrix> second_moment;
    std::uint64_t step = 0;

    static OptimizerState for_parameters(const QsgnnParameters& params, const AdamConfig& config);
};

// Adam with bias correction, no weight decay.
void optimizer_step(OptimizerState& state, QsgnnParameters& params, const GradientBundle& grads);

}  // namespace mlkg

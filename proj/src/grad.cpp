#include "mlkg/grad.hpp"

#include <algorithm>
#include <cmath>

#include "mlkg/util.hpp"

namespace mlkg {

namespace {

struct LossGraph {
    ad::Tape tape;
    std::vector<ad::Var> slots;
    ad::Var loss;

    LossGraph(bool record, std::size_t threads) : tape(record, threads) {}
};

void build_loss(LossGraph& lg, const QsgnnParameters& params, const ModelInputs& inputs,
                const std::vector<ResolvedExample>& batch, const LossConfig& config, bool record) {
    if (batch.empty()) throw GradientError("empty batch");
    if (!(config.tau > 0.0)) throw GradientError("tau must be positive");
    ad::Tape& tape = lg.tape;
    lg.slots = bind_parameters(tape, params, record);
    const LevelVars raw{tape.input(inputs.raw->entities), tape.input(inputs.raw->chunks),
                        tape.input(inputs.raw->documents)};
    const LevelVars initial = build_projection(tape, lg.slots, raw);

    std::vector<ad::Var> terms;
    for (const auto& ex : batch) {
        if (ex.positives.empty() || ex.negatives.empty()) {
            throw GradientError("each example needs at least one positive and one negative");
        }
        const ad::Var q = build_query_projection(tape, lg.slots, tape.input(Matrix::row_vector(ex.query)));
        const LevelVars out = build_forward(tape, params, lg.slots, *inputs.graph, initial, q);

        // Score rows: positives first, then the shared negatives.
        ad::Index rows(ex.positives.begin(), ex.positives.end());
        rows.insert(rows.end(), ex.negatives.begin(), ex.negatives.end());
        ad::Index negs(ex.negatives.size());
        for (std::size_t j = 0; j < negs.size(); ++j) negs[j] = static_cast<std::uint32_t>(ex.positives.size() + j);
        const ad::Var scores = tape.row_cosine(q, out.documents, ad::make_index(std::move(rows)));
        const auto neg_index = ad::make_index(std::move(negs));
        for (std::size_t p = 0; p < ex.positives.size(); ++p) {
            terms.push_back(tape.nt_xent(scores, static_cast<std::uint32_t>(p), neg_index, config.tau));
        }
    }
    lg.loss = tape.sum(terms, config.scale / static_cast<double>(terms.size()));
    if (!std::isfinite(tape.value(lg.loss)(0, 0))) throw GradientError("non-finite loss");
}

}  // namespace

double batch_loss(const QsgnnParameters& params, const ModelInputs& inputs, const std::vector<ResolvedExample>& batch,
                  const LossConfig& loss, std::size_t threads) {
    LossGraph lg(false, threads);
    build_loss(lg, params, inputs, batch, loss, false);
    return lg.tape.value(lg.loss)(0, 0);
}

LossAndGradient backward(const QsgnnParameters& params, const ModelInputs& inputs,
                         const std::vector<ResolvedExample>& batch, const LossConfig& loss, std::size_t threads) {
    LossGraph lg(true, threads);
    build_loss(lg, params, inputs, batch, loss, true);
    lg.tape.backward(lg.loss);

    LossAndGradient out;
    out.loss = lg.tape.value(lg.loss)(0, 0);
    out.gradient.grads.reserve(params.tensors().size());
    for (std::size_t i = 0; i < params.tensors().size(); ++i) {
        const Matrix& g = lg.tape.grad(lg.slots[i]);
        const Matrix& p = params.tensors()[i].value;
        Matrix grad = g.empty() ? Matrix(p.rows(), p.cols()) : g;
        if (!all_finite(grad)) throw GradientError("non-finite gradient for " + params.tensors()[i].name);
        out.gradient.grads.push_back(std::move(grad));
    }
    return out;
}

double fd_relative_error(double analytic, double numeric) {
    if (std::abs(analytic) < kFdResolution && std::abs(numeric) < kFdResolution) return 0.0;
    const double denom = std::max(std::abs(analytic), std::abs(numeric));
    if (denom == 0.0) return 0.0;
    return std::abs(analytic - numeric) / denom;
}

bool fd_passes(const FdReport& report, double tolerance) {
    return report.max_error_off_kinks < tolerance && report.max_kink_recheck_error < tolerance;
}

FdReport fd_check(const QsgnnParameters& params, const ModelInputs& inputs, const std::vector<ResolvedExample>& batch,
                  const LossConfig& loss, double eps, std::size_t samples_per_tensor, std::uint64_t seed,
                  double tolerance) {
    if (!(eps > 0.0)) throw GradientError("finite-difference step must be positive");
    const LossAndGradient analytic = backward(params, inputs, batch, loss, 1);
    QsgnnParameters probe = params;
    Rng rng = Rng::stream(seed, "fd-check");
    FdReport report;
    for (std::size_t t = 0; t < params.tensors().size(); ++t) {
        const std::size_t size = params.tensors()[t].value.size();
        std::vector<std::size_t> coords(size);
        for (std::size_t i = 0; i < size; ++i) coords[i] = i;
        if (size > samples_per_tensor) {
            rng.shuffle(coords);
            coords.resize(samples_per_tensor);
            std::sort(coords.begin(), coords.end());
        }
        for (std::size_t c : coords) {
            double& x = probe.at(t).data()[c];
            const double saved = x;
            x = saved + eps;
            const double up = batch_loss(probe, inputs, batch, loss, 1);
            x = saved - eps;
            const double down = batch_loss(probe, inputs, batch, loss, 1);
            x = saved;
            const double numeric = (up - down) / (2.0 * eps);
            const double a = analytic.gradient.grads[t].data()[c];
            const double err = fd_relative_error(a, numeric);
            ++report.coordinates_checked;

            bool kink = false;
            if (err >= tolerance) {
                const double fine = eps / 10.0;
                x = saved + fine;
                const double fine_up = batch_loss(probe, inputs, batch, loss, 1);
                x = saved - fine;
                const double fine_down = batch_loss(probe, inputs, batch, loss, 1);
                x = saved;
                const double refined = (fine_up - fine_down) / (2.0 * fine);
                if (std::abs(refined - numeric) >= 0.5 * std::abs(numeric - a)) {
                    kink = true;
                    ++report.kink_coordinates;
                    report.max_kink_recheck_error =
                        std::max(report.max_kink_recheck_error, fd_relative_error(a, refined));
                }
            }
            if (!kink) report.max_error_off_kinks = std::max(report.max_error_off_kinks, err);
            if (report.coordinates_checked == 1 || err > report.max_relative_error) {
                report.max_relative_error = err;
                report.worst_tensor = params.tensors()[t].name;
                report.worst_index = c;
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    return report;
}

OptimizerState OptimizerState::for_parameters(const QsgnnParameters& params, const AdamConfig& config) {
    OptimizerState s;
    s.config = config;
    for (const auto& t : params.tensors()) {
        s.first_moment.emplace_back(t.value.rows(), t.value.cols());
        s.second_moment.emplace_back(t.value.rows(), t.value.cols());
    }
    return s;
}

void optimizer_step(OptimizerState& state, QsgnnParameters& params, const GradientBundle& grads) {
    const auto& tensors = params.tensors();
    if (grads.grads.size() != tensors.size() || state.first_moment.size() != tensors.size()) {
        throw GradientError("optimizer: tensor count mismatch");
    }
    for (std::size_t t = 0; t < tensors.size(); ++t) {
        if (!grads.grads[t].same_shape(tensors[t].value) || !state.first_moment[t].same_shape(tensors[t].value)) {
            throw GradientError("optimizer: shape mismatch for " + tensors[t].name);
        }
    }
    const auto& c = state.config;
    const std::uint64_t step = state.step + 1;
    const double correction1 = 1.0 - std::pow(c.beta1, static_cast<double>(step));
    const double correction2 = 1.0 - std::pow(c.beta2, static_cast<double>(step));
    for (std::size_t t = 0; t < tensors.size(); ++t) {
        auto& value = params.at(t).data();
        auto& m = state.first_moment[t].data();
        auto& v = state.second_moment[t].data();
        const auto& g = grads.grads[t].data();
        for (std::size_t i = 0; i < value.size(); ++i) {
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
            const double m_hat = m[i] / correction1;
            const double v_hat = v[i] / correction2;
            const double updated = value[i] - c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
            if (!std::isfinite(updated)) throw GradientError("non-finite update for " + tensors[t].name);
            value[i] = updated;
        }
    }
    state.step = step;
}

}  // namespace mlkg

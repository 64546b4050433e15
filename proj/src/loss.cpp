#include "splitkit/loss.hpp"

#include <cmath>

#include "splitkit/errors.hpp"

namespace splitkit {

namespace {

void check_loss_inputs(const Tensor& logits, const std::vector<int>& targets,
                       bool need_classes) {
    if (logits.rank() != 2) {
        throw ShapeError("loss expects batch x classes logits, got " +
                         shape_to_string(logits.shape()));
    }
    const std::size_t batch = logits.dim(0);
    const std::size_t classes = logits.dim(1);
    if (need_classes && classes < 2) {
        throw InvalidArgument("loss needs at least 2 classes");
    }
    if (targets.size() != batch) {
        throw ShapeError("target count " + std::to_string(targets.size()) +
                         " does not match batch size " +
                         std::to_string(batch));
    }
    for (int t : targets) {
        if (t < 0 || static_cast<std::size_t>(t) >= classes) {
            throw InvalidArgument("target class " + std::to_string(t) +
                                  " out of range for " +
                                  std::to_string(classes) + " classes");
        }
    }
    if (!logits.all_finite()) throw NumericError("non-finite logits");
}

// Row log-sum-exp, numerically stable.
double row_lse(const double* row, std::size_t classes) {
    double zmax = row[0];
    for (std::size_t k = 1; k < classes; ++k) zmax = std::max(zmax, row[k]);
    double sum = 0.0;
    for (std::size_t k = 0; k < classes; ++k) sum += std::exp(row[k] - zmax);
    return zmax + std::log(sum);
}

}  // namespace

double label_smoothed_ce(const Tensor& logits, const std::vector<int>& targets,
                         double epsilon) {
    check_loss_inputs(logits, targets, true);
    if (epsilon < 0.0 || epsilon >= 1.0) {
        throw InvalidArgument("label smoothing epsilon must lie in [0, 1)");
    }
    const std::size_t batch = logits.dim(0);
    const std::size_t classes = logits.dim(1);
    const double uniform = epsilon / static_cast<double>(classes);

    double total = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        const double* row = logits.data() + b * classes;
        const double lse = row_lse(row, classes);
        double row_sum = 0.0;
        for (std::size_t k = 0; k < classes; ++k) row_sum += row[k];
        total += lse - (1.0 - epsilon) * row[targets[b]] - uniform * row_sum;
    }
    return total / static_cast<double>(batch);
}

double squared_error_loss(const Tensor& logits,
                          const std::vector<int>& targets) {
    check_loss_inputs(logits, targets, false);
    const std::size_t batch = logits.dim(0);
    const std::size_t classes = logits.dim(1);
    double total = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        const double* row = logits.data() + b * classes;
        for (std::size_t k = 0; k < classes; ++k) {
            const double t =
                static_cast<std::size_t>(targets[b]) == k ? 1.0 : 0.0;
            const double d = row[k] - t;
            total += d * d;
        }
    }
    return total / (2.0 * static_cast<double>(batch));
}

Tensor loss_gradient(const Tensor& logits, const std::vector<int>& targets,
                     const LossSpec& spec, double* loss_out) {
    check_loss_inputs(logits, targets,
                      spec.kind == LossSpec::Kind::LabelSmoothedCE);
    const std::size_t batch = logits.dim(0);
    const std::size_t classes = logits.dim(1);
    Tensor grad(logits.spec());

    if (spec.kind == LossSpec::Kind::SquaredError) {
        double total = 0.0;
        for (std::size_t b = 0; b < batch; ++b) {
            const double* row = logits.data() + b * classes;
            double* grow = grad.data() + b * classes;
            for (std::size_t k = 0; k < classes; ++k) {
                const double t =
                    static_cast<std::size_t>(targets[b]) == k ? 1.0 : 0.0;
                const double d = row[k] - t;
                total += d * d;
                grow[k] = d / static_cast<double>(batch);
            }
        }
        if (loss_out) *loss_out = total / (2.0 * static_cast<double>(batch));
        return grad;
    }

    const double epsilon = spec.epsilon;
    if (epsilon < 0.0 || epsilon >= 1.0) {
        throw InvalidArgument("label smoothing epsilon must lie in [0, 1)");
    }
    const double uniform = epsilon / static_cast<double>(classes);
    double total = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        const double* row = logits.data() + b * classes;
        double* grow = grad.data() + b * classes;
        const double lse = row_lse(row, classes);
        for (std::size_t k = 0; k < classes; ++k) {
            const double p = std::exp(row[k] - lse);
            const double q =
                (static_cast<std::size_t>(targets[b]) == k ? 1.0 - epsilon
                                                           : 0.0) +
                uniform;
            grow[k] = (p - q) / static_cast<double>(batch);
            total -= q * (row[k] - lse);
        }
    }
    if (loss_out) *loss_out = total / static_cast<double>(batch);
    return grad;
}

std::vector<int> predict_classes(const Tensor& logits) {
    if (logits.rank() != 2) {
        throw ShapeError("predictions expect batch x classes logits");
    }
    const std::size_t batch = logits.dim(0);
    const std::size_t classes = logits.dim(1);
    std::vector<int> out(batch);
    for (std::size_t b = 0; b < batch; ++b) {
        const double* row = logits.data() + b * classes;
        std::size_t best = 0;
        for (std::size_t k = 1; k < classes; ++k) {
            if (row[k] > row[best]) best = k;
        }
        out[b] = static_cast<int>(best);
    }
    return out;
}

}  // namespace splitkit

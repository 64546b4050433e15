#include "splitkit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "splitkit/errors.hpp"

namespace splitkit {

namespace {

void require_unit(double value, const char* name) {
    if (!std::isfinite(value) || value < 0.0 || value > 1.0) {
        throw InvalidArgument(std::string(name) +
                              " must be a finite accuracy in [0, 1], got " +
                              std::to_string(value));
    }
}

}  // namespace

ClampedRatio compute_pa(double accuracy_u_prime, double accuracy_u) {
    require_unit(accuracy_u_prime, "accuracy_u_prime");
    require_unit(accuracy_u, "accuracy_u");
    if (accuracy_u <= 0.0) {
        throw InvalidArgument(
            "accuracy_u must be positive; a zero baseline makes the ratio "
            "undefined");
    }
    ClampedRatio out;
    out.raw = accuracy_u_prime / accuracy_u;
    out.value = std::clamp(out.raw, 0.0, 1.0);
    return out;
}

ClampedRatio compute_pi(double accuracy_a, double accuracy_a_prime,
                        double accuracy_r) {
    require_unit(accuracy_a, "accuracy_a");
    require_unit(accuracy_a_prime, "accuracy_a_prime");
    require_unit(accuracy_r, "accuracy_r");
    if (accuracy_a <= accuracy_r) {
        throw InvalidArgument(
            "accuracy_a must exceed accuracy_r; an attacker no better than "
            "random leaves the index undefined");
    }
    ClampedRatio out;
    out.raw = (accuracy_a - accuracy_a_prime) / (accuracy_a - accuracy_r);
    out.value = std::clamp(out.raw, 0.0, 1.0);
    return out;
}

PrivacyReport build_report(const std::string& cut, double accuracy_u,
                           double accuracy_u_prime, double accuracy_a,
                           double accuracy_a_prime, double accuracy_r,
                           double mi_reduction, double flops_ratio,
                           double params_ratio, const Provenance& provenance) {
    if (cut.empty()) throw InvalidArgument("report needs a cut label");
    if (!std::isfinite(mi_reduction)) {
        throw InvalidArgument("mi_reduction must be finite");
    }
    require_unit(flops_ratio, "flops_ratio");
    require_unit(params_ratio, "params_ratio");

    PrivacyReport report;
    report.cut = cut;
    report.accuracy_u = accuracy_u;
    report.accuracy_u_prime = accuracy_u_prime;
    report.accuracy_a = accuracy_a;
    report.accuracy_a_prime = accuracy_a_prime;
    report.accuracy_r = accuracy_r;
    report.mi_reduction = mi_reduction;
    report.flops_ratio = flops_ratio;
    report.params_ratio = params_ratio;
    report.provenance = provenance;

    ClampedRatio pa = compute_pa(accuracy_u_prime, accuracy_u);
    report.pa = pa.value;
    ClampedRatio pi = compute_pi(accuracy_a, accuracy_a_prime, accuracy_r);
    report.pi = pi.value;
    report.pi_raw = pi.raw;
    return report;
}

}  // namespace splitkit

#pragma once

#include <cstdint>
#include <string>

namespace splitkit {

// A ratio reported clamped to [0,1] with the unclamped value retained.
struct ClampedRatio {
    double value = 0.0;
    double raw = 0.0;
};

// Relative accuracy the user keeps under the defense:
// accuracy_u_prime / accuracy_u.  Requires accuracy_u > 0.
ClampedRatio compute_pa(double accuracy_u_prime, double accuracy_u);

// Share of the attacker's above-random advantage the defense removes:
// (accuracy_a - accuracy_a_prime) / (accuracy_a - accuracy_r).
// Requires accuracy_a > accuracy_r.
ClampedRatio compute_pi(double accuracy_a, double accuracy_a_prime,
                        double accuracy_r);

struct Provenance {
    std::string config_digest;
    std::uint64_t master_seed = 0;
    std::string defense_strategy;
    std::string head_arch;
};

// One cut's scored outcome.  pa/pi are recomputable from the stored
// accuracy fields exactly.
struct PrivacyReport {
    std::string cut;
    double pa = 0.0;
    double pi = 0.0;
    double pi_raw = 0.0;
    double mi_reduction = 0.0;
    double accuracy_u = 0.0;
    double accuracy_u_prime = 0.0;
    double accuracy_a = 0.0;
    double accuracy_a_prime = 0.0;
    double accuracy_r = 0.0;
    double flops_ratio = 0.0;
    double params_ratio = 0.0;
    Provenance provenance;
};

// Assembles and cross-checks a report; every accuracy must be a finite
// value in [0,1] and the ratios must be finite.
PrivacyReport build_report(const std::string& cut, double accuracy_u,
                           double accuracy_u_prime, double accuracy_a,
                           double accuracy_a_prime, double accuracy_r,
                           double mi_reduction, double flops_ratio,
                           double params_ratio, const Provenance& provenance);

}  // namespace splitkit

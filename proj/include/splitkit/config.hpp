#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "splitkit/data.hpp"
#include "splitkit/defense.hpp"
#include "splitkit/mi.hpp"
#include "splitkit/trainer.hpp"

namespace splitkit {

// Full experiment description parsed from a flat "key = value" file with
// dotted section keys.  '#' starts a comment; keys are single-assignment.
struct ExperimentConfig {
    std::uint64_t seed = 0;
    bool seed_set = false;  // a seed must come from the file or the CLI
    std::string out_dir = "runs/out";

    std::string arch = "mini5";

    std::string data_kind = "synthetic";  // or "idx"
    SyntheticParams synthetic;
    double val_fraction = 0.2;
    std::string user_images_path, user_labels_path;
    std::string attacker_images_path, attacker_labels_path;

    std::vector<std::string> cuts;  // empty means every enumerated cut

    DefenseConfig defense;

    std::string mi_estimator = "ksg";
    MIParams mi;
    std::size_t mi_samples = 2000;

    TrainConfig user_train;
    TrainConfig attack_train;
    std::string attack_head = "mirror";

    std::vector<std::string> report_formats = {"csv", "json"};
    bool plots = false;

    void validate() const;
};

ExperimentConfig parse_config_text(const std::string& text,
                                   const std::string& origin);
ExperimentConfig parse_config_file(const std::string& path);

// Canonical sorted key=value rendering of everything that affects results.
// The output directory and the cut selection are deliberately excluded:
// every per-cut stage is seeded by its own cut label, so neither changes
// any number, and relocated or re-scoped runs compare equal.
std::string canonical_config_text(const ExperimentConfig& config);

// SHA-256 of the canonical text; the identity carried in report provenance.
std::string config_digest(const ExperimentConfig& config);

// Documented key list (name, default, description) for --help and the
// README; parsing rejects keys outside this list.
std::string config_key_reference();

}  // namespace splitkit

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "splitkit/data.hpp"
#include "splitkit/defense.hpp"
#include "splitkit/model.hpp"
#include "splitkit/split.hpp"
#include "splitkit/trainer.hpp"

namespace splitkit {

enum class HeadKind { Mirror, Mlp };

std::string head_kind_name(HeadKind kind);
HeadKind head_kind_from_name(const std::string& name);

// Adversary model operating on the transmitted activation.
struct AttackerHead {
    ModelGraph graph;  // input_spec equals the cut interface spec
    ParamStore params;
    std::string arch;  // "mirror" or "mlp" or "custom"
};

// Frozen defended edge plus a trainable head.  Only head parameters may
// change during an attack; the edge half and noise bank are fixed.
struct JointModel {
    ModelGraph edge;
    ParamStore edge_params;
    Defense defense;
    AttackerHead head;
    TensorSpec interface_spec;
};

// "mirror" clones the cloud half with the output layer resized to the
// attacker's class count; "mlp" is flatten -> 256 -> relu -> output.
AttackerHead make_attacker_head(const SplitModel& split,
                                std::size_t attacker_classes, HeadKind kind,
                                std::uint64_t seed);

JointModel build_joint(const SplitModel& split, const Defense& defense,
                       AttackerHead head);

// SHA-256 over the serialized edge parameters and noise bank; anything the
// attack must not touch.
std::string frozen_digest(const JointModel& joint);

struct AttackOutcome {
    double best_val_accuracy = 0.0;
    std::string frozen_digest_before;
    std::string frozen_digest_after;
    std::vector<EpochStats> epoch_log;
};

// Fine-tunes the head on defended edge activations; noise is re-drawn for
// every batch presentation, validation uses one fixed noise draw.  Restores
// the best-validation head parameters into the joint model.
AttackOutcome train_attack(JointModel& joint, const Dataset& train_set,
                           const Dataset& val_set, const TrainConfig& config);

// Accuracy of edge -> defense -> head on a labeled dataset (fixed noise).
double joint_accuracy(const JointModel& joint, const Dataset& dataset,
                      std::uint64_t noise_seed);

// Edge and head layers composed into one fully trainable model over raw
// inputs: the unconstrained ceiling the joint attack is measured against.
BuiltModel compose_unconstrained(const JointModel& joint,
                                 const TensorSpec& raw_input_spec,
                                 std::uint64_t seed);

// Structural identity of a graph (kinds and dimensions, not names); equal
// signatures let one baseline run serve several cuts.
std::string arch_signature(const ModelGraph& graph);

// End-to-end training with every parameter free; returns best val accuracy.
double train_best_baseline(const ModelGraph& graph, ParamStore& params,
                           const Dataset& train_set, const Dataset& val_set,
                           const TrainConfig& config);

enum class RandomBaselineMode { Uniform, Empirical };

// Uniform mode: analytic 1/C.  Empirical mode: seeded uniform guesses scored
// against the labels.
double random_baseline(const Dataset& dataset, RandomBaselineMode mode,
                       std::uint64_t seed);

}  // namespace splitkit

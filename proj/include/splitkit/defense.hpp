#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "splitkit/data.hpp"
#include "splitkit/split.hpp"
#include "splitkit/tensor.hpp"
#include "splitkit/trainer.hpp"

namespace splitkit {

enum class DefenseStrategy { CalibratedGaussian, LearnedBank, None };

std::string defense_strategy_name(DefenseStrategy strategy);
DefenseStrategy defense_strategy_from_name(const std::string& name);

struct DefenseConfig {
    DefenseStrategy strategy = DefenseStrategy::CalibratedGaussian;
    double pa_target = 0.95;
    std::size_t bank_size = 8;   // learned_bank K
    double lambda = 0.05;        // noise-magnitude reward weight
    std::uint64_t seed = 1;
    // Samples drawn from the eval set for calibration.
    std::size_t calibration_samples = 512;
    TrainConfig bank_train;

    void validate() const;
};

// Additive noise source: gaussian scale for the calibrated strategy,
// per-sample tensors for the learned bank.
struct NoiseBank {
    std::vector<Tensor> tensors;
    double sigma = 0.0;
};

struct CalibrationResult {
    double sigma = 0.0;
    double achieved_accuracy_u_prime = 0.0;
    int iterations = 0;
    double clean_accuracy = 0.0;
};

struct Defense {
    DefenseConfig config;
    NoiseBank bank;
};

// Largest sigma in [0, 10 * activation std] whose defended user-task
// accuracy keeps PA >= pa_target, found by bisection (depth 20) with a
// common noise sample across sigmas.  The bracket is re-sampled up to three
// times if the accuracy-vs-sigma sweep comes out non-monotone.
CalibrationResult calibrate_gaussian(const SplitModel& split,
                                     const Dataset& eval_set,
                                     double pa_target, std::uint64_t seed,
                                     std::size_t calibration_samples = 512);

// Trains K additive noise tensors at the cut against the frozen cloud half:
// minimize label-smoothed CE of cloud(a + n_k) minus lambda * mean |n_k|.
NoiseBank train_noise_bank(const SplitModel& split, const Dataset& train_set,
                           const DefenseConfig& config);

// a' = a + noise; shape preserving; deterministic per (defense, a, seed).
// Strategy none returns the input unchanged.
Tensor apply_defense(const Defense& defense, const Tensor& a,
                     std::uint64_t seed);

// Defended accuracy of a split model on a labeled dataset (edge -> defense
// -> cloud, eval mode, fixed noise seed).
double defended_accuracy(const SplitModel& split, const Defense& defense,
                         const Dataset& dataset, std::uint64_t noise_seed);

// Noise-bank tensors under "defense.noise.<k>" plus "defense.sigma" for
// persistence in the checkpoint container.
ParamStore defense_params(const Defense& defense);
NoiseBank noise_bank_from_params(const ParamStore& params);

}  // namespace splitkit

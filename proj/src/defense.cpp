#include "splitkit/defense.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "splitkit/errors.hpp"
#include "splitkit/forward.hpp"
#include "splitkit/loss.hpp"
#include "splitkit/rng.hpp"

namespace splitkit {

namespace {

constexpr std::size_t kEvalBatch = 256;

std::vector<std::size_t> index_range(std::size_t begin, std::size_t end) {
    std::vector<std::size_t> out(end - begin);
    std::iota(out.begin(), out.end(), begin);
    return out;
}

Tensor edge_activation(const SplitModel& split, const Dataset& dataset,
                       const std::vector<std::size_t>& indices) {
    Tensor x = assemble_batch(dataset, indices);
    ForwardOptions opts;
    opts.mode = Mode::Eval;
    opts.keep_activations = false;
    return forward(split.edge, split.edge_params, x, opts).logits();
}

std::size_t cloud_correct(const SplitModel& split, const Tensor& noised,
                          const std::vector<int>& labels) {
    ForwardOptions opts;
    opts.mode = Mode::Eval;
    opts.keep_activations = false;
    Tensor logits =
        forward(split.cloud, split.cloud_params, noised, opts).logits();
    std::vector<int> pred = predict_classes(logits);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] == labels[i]) ++correct;
    }
    return correct;
}

// Population standard deviation over every element of every tensor.
double activation_std(const std::vector<Tensor>& batches) {
    double sum = 0.0;
    double sumsq = 0.0;
    std::size_t count = 0;
    for (const Tensor& t : batches) {
        for (double v : t.values()) {
            sum += v;
            sumsq += v * v;
        }
        count += t.numel();
    }
    if (count == 0) throw InvalidArgument("no activations to calibrate on");
    double mean = sum / static_cast<double>(count);
    double var = sumsq / static_cast<double>(count) - mean * mean;
    return std::sqrt(std::max(var, 0.0));
}

}  // namespace

std::string defense_strategy_name(DefenseStrategy strategy) {
    switch (strategy) {
        case DefenseStrategy::CalibratedGaussian: return "calibrated_gaussian";
        case DefenseStrategy::LearnedBank: return "learned_bank";
        case DefenseStrategy::None: return "none";
    }
    throw InvalidArgument("unknown defense strategy");
}

DefenseStrategy defense_strategy_from_name(const std::string& name) {
    if (name == "calibrated_gaussian") return DefenseStrategy::CalibratedGaussian;
    if (name == "learned_bank") return DefenseStrategy::LearnedBank;
    if (name == "none") return DefenseStrategy::None;
    throw InvalidArgument("unknown defense strategy '" + name + "'");
}

void DefenseConfig::validate() const {
    if (!(pa_target > 0.0 && pa_target <= 1.0)) {
        throw InvalidArgument("pa_target must be in (0, 1], got " +
                              std::to_string(pa_target));
    }
    if (bank_size < 1) throw InvalidArgument("bank_size must be >= 1");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
        throw InvalidArgument("lambda must be finite and >= 0");
    }
    if (calibration_samples < 32) {
        throw InvalidArgument("calibration_samples must be >= 32");
    }
    bank_train.validate();
}

CalibrationResult calibrate_gaussian(const SplitModel& split,
                                     const Dataset& eval_set,
                                     double pa_target, std::uint64_t seed,
                                     std::size_t calibration_samples) {
    if (!(pa_target > 0.0 && pa_target <= 1.0)) {
        throw InvalidArgument("pa_target must be in (0, 1]");
    }
    eval_set.validate();
    std::size_t n = std::min(calibration_samples, eval_set.samples());
    if (n < 32) throw InvalidArgument("calibration needs at least 32 samples");

    std::vector<std::size_t> order = index_range(0, eval_set.samples());
    Rng pick(derive_seed(seed, "calib_pick"));
    pick.shuffle(order);
    order.resize(n);
    std::sort(order.begin(), order.end());

    struct Batch {
        Tensor acts;
        std::vector<int> labels;
        std::vector<double> unit_noise;
    };
    std::vector<Batch> batches;
    std::vector<Tensor> act_only;
    for (std::size_t begin = 0; begin < n; begin += kEvalBatch) {
        std::size_t end = std::min(begin + kEvalBatch, n);
        std::vector<std::size_t> chunk(order.begin() + begin,
                                       order.begin() + end);
        Batch b;
        b.acts = edge_activation(split, eval_set, chunk);
        b.labels = gather_labels(eval_set, chunk);
        batches.push_back(std::move(b));
        act_only.push_back(batches.back().acts);
    }

    double act_std = activation_std(act_only);
    if (act_std <= 0.0) {
        throw NumericError(
            "edge activations are constant; noise calibration is undefined");
    }
    double sigma_max = 10.0 * act_std;

    // One noise draw shared across every sigma probe keeps the accuracy
    // curve a deterministic function of sigma during the bisection.
    auto draw_noise = [&](int attempt) {
        for (std::size_t b = 0; b < batches.size(); ++b) {
            Rng rng(derive_seed(seed, "calib_noise",
                                std::to_string(attempt) + "_" +
                                    std::to_string(b)));
            batches[b].unit_noise.resize(batches[b].acts.numel());
            rng.fill_normal(batches[b].unit_noise, 0.0, 1.0);
        }
    };
    int evals = 0;
    auto accuracy_at = [&](double sigma) {
        ++evals;
        std::size_t correct = 0;
        for (const Batch& b : batches) {
            Tensor noised = b.acts;
            if (sigma != 0.0) {
                for (std::size_t j = 0; j < noised.numel(); ++j) {
                    noised[j] += sigma * b.unit_noise[j];
                }
            }
            correct += cloud_correct(split, noised, b.labels);
        }
        return static_cast<double>(correct) / static_cast<double>(n);
    };

    for (int attempt = 0; attempt < 3; ++attempt) {
        draw_noise(attempt);
        double clean = accuracy_at(0.0);
        if (clean <= 0.0) {
            throw NumericError(
                "clean accuracy on the calibration set is zero; a relative "
                "accuracy target cannot be met");
        }
        double target = pa_target * clean;
        double acc_max = accuracy_at(sigma_max);
        if (acc_max > clean + 0.02) continue;  // noise helped; re-draw
        if (acc_max >= target) {
            return CalibrationResult{sigma_max, acc_max, evals, clean};
        }
        double lo = 0.0;
        double acc_lo = clean;
        double hi = sigma_max;
        for (int iter = 0; iter < 20; ++iter) {
            double mid = 0.5 * (lo + hi);
            double acc = accuracy_at(mid);
            if (acc >= target) {
                lo = mid;
                acc_lo = acc;
            } else {
                hi = mid;
            }
        }
        return CalibrationResult{lo, acc_lo, evals, clean};
    }
    throw NumericError(
        "defended accuracy exceeded clean accuracy on three independent "
        "noise draws; accuracy is not monotone in the noise scale");
}

NoiseBank train_noise_bank(const SplitModel& split, const Dataset& train_set,
                           const DefenseConfig& config) {
    config.validate();
    if (config.strategy != DefenseStrategy::LearnedBank) {
        throw InvalidArgument("train_noise_bank requires strategy learned_bank");
    }
    train_set.validate();
    const TrainConfig& tc = config.bank_train;
    std::size_t n = train_set.samples();
    std::size_t slots = config.bank_size;
    const std::vector<std::size_t>& slot_shape = split.interface_spec.shape;
    std::size_t per = TensorSpec{slot_shape, Dtype::Float64}.numel();

    std::size_t probe_n = std::min<std::size_t>(kEvalBatch, n);
    Tensor probe = edge_activation(split, train_set, index_range(0, probe_n));
    double act_std = activation_std({probe});
    double init_scale = 0.05 * std::max(act_std, 1e-3);

    Rng init_rng(derive_seed(config.seed, "bank_init"));
    std::vector<Tensor> bank(slots);
    std::vector<Tensor> velocity(slots);
    for (std::size_t k = 0; k < slots; ++k) {
        bank[k] = Tensor(slot_shape);
        velocity[k] = Tensor(slot_shape);
        init_rng.fill_normal(bank[k].values(), 0.0, init_scale);
    }

    LossSpec loss{LossSpec::Kind::LabelSmoothedCE, tc.epsilon};
    ParamMask frozen;  // no cloud parameter receives a gradient
    for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
        double lr = scheduled_lr(tc, epoch);
        std::vector<std::size_t> order = index_range(0, n);
        Rng shuffle_rng(
            derive_seed(config.seed, "bank_shuffle", std::to_string(epoch)));
        shuffle_rng.shuffle(order);
        std::size_t batch_index = 0;
        for (std::size_t begin = 0; begin < n;
             begin += tc.batch_size, ++batch_index) {
            std::size_t end = std::min(begin + tc.batch_size, n);
            std::vector<std::size_t> chunk(order.begin() + begin,
                                           order.begin() + end);
            Tensor acts = edge_activation(split, train_set, chunk);
            std::vector<int> labels = gather_labels(train_set, chunk);
            std::size_t batch = acts.dim(0);

            Rng assign_rng(derive_seed(config.seed, "bank_assign",
                                       std::to_string(epoch) + "_" +
                                           std::to_string(batch_index)));
            std::vector<std::size_t> slot_of(batch);
            Tensor noised = acts;
            for (std::size_t i = 0; i < batch; ++i) {
                slot_of[i] = assign_rng.uniform_int(slots);
                const Tensor& nk = bank[slot_of[i]];
                for (std::size_t j = 0; j < per; ++j) {
                    noised[i * per + j] += nk[j];
                }
            }

            GradResult gr = backprop(split.cloud, split.cloud_params, noised,
                                     labels, loss, frozen, true, Mode::Eval);
            if (!std::isfinite(gr.loss)) {
                throw NumericError("noise bank training diverged at epoch " +
                                   std::to_string(epoch));
            }
            std::vector<Tensor> slot_grad(slots, Tensor(slot_shape));
            for (std::size_t i = 0; i < batch; ++i) {
                Tensor& g = slot_grad[slot_of[i]];
                for (std::size_t j = 0; j < per; ++j) {
                    g[j] += gr.input_grad[i * per + j];
                }
            }
            double reward = config.lambda / static_cast<double>(per);
            for (std::size_t k = 0; k < slots; ++k) {
                Tensor& nk = bank[k];
                Tensor& vk = velocity[k];
                const Tensor& gk = slot_grad[k];
                for (std::size_t j = 0; j < per; ++j) {
                    double sign = (nk[j] > 0.0) - (nk[j] < 0.0);
                    double g = gk[j] - reward * sign;
                    vk[j] = tc.momentum * vk[j] + g;
                    nk[j] -= lr * vk[j];
                }
                if (!nk.all_finite()) {
                    throw NumericError(
                        "noise bank training diverged at epoch " +
                        std::to_string(epoch));
                }
            }
        }
    }
    NoiseBank out;
    out.tensors = std::move(bank);
    out.sigma = 0.0;
    return out;
}

Tensor apply_defense(const Defense& defense, const Tensor& a,
                     std::uint64_t seed) {
    if (defense.config.strategy == DefenseStrategy::None) return a;
    Tensor out = a;
    if (defense.config.strategy == DefenseStrategy::CalibratedGaussian) {
        double sigma = defense.bank.sigma;
        if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
            throw InvalidArgument("gaussian defense sigma must be finite and >= 0");
        }
        if (sigma == 0.0) return out;
        Rng rng(seed);
        for (std::size_t j = 0; j < out.numel(); ++j) {
            out[j] += sigma * rng.normal();
        }
        return out;
    }
    // learned_bank
    const std::vector<Tensor>& bank = defense.bank.tensors;
    if (bank.empty()) {
        throw InvalidArgument("learned_bank defense has an empty noise bank");
    }
    const std::vector<std::size_t>& slot_shape = bank.front().shape();
    for (const Tensor& t : bank) {
        t.require_shape(slot_shape, "noise bank slot");
    }
    std::vector<std::size_t> expect = slot_shape;
    expect.insert(expect.begin(), a.dim(0));
    a.require_shape(expect, "defended activation");
    std::size_t per = bank.front().numel();
    Rng rng(seed);
    for (std::size_t i = 0; i < a.dim(0); ++i) {
        const Tensor& nk = bank[rng.uniform_int(bank.size())];
        for (std::size_t j = 0; j < per; ++j) {
            out[i * per + j] += nk[j];
        }
    }
    return out;
}

double defended_accuracy(const SplitModel& split, const Defense& defense,
                         const Dataset& dataset, std::uint64_t noise_seed) {
    dataset.validate();
    std::size_t n = dataset.samples();
    std::size_t correct = 0;
    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < n; begin += kEvalBatch, ++batch_index) {
        std::size_t end = std::min(begin + kEvalBatch, n);
        std::vector<std::size_t> chunk = index_range(begin, end);
        Tensor acts = edge_activation(split, dataset, chunk);
        Tensor noised = apply_defense(
            defense, acts,
            derive_seed(noise_seed, "defense_batch", std::to_string(batch_index)));
        correct += cloud_correct(split, noised, gather_labels(dataset, chunk));
    }
    return static_cast<double>(correct) / static_cast<double>(n);
}

ParamStore defense_params(const Defense& defense) {
    ParamStore store;
    store.version = 1;
    Tensor sigma({1});
    sigma[0] = defense.bank.sigma;
    store.tensors["defense.sigma"] = sigma;
    for (std::size_t k = 0; k < defense.bank.tensors.size(); ++k) {
        store.tensors["defense.noise." + std::to_string(k)] =
            defense.bank.tensors[k];
    }
    return store;
}

NoiseBank noise_bank_from_params(const ParamStore& params) {
    NoiseBank bank;
    auto it = params.tensors.find("defense.sigma");
    if (it == params.tensors.end()) {
        throw FormatError("defense parameters are missing defense.sigma");
    }
    it->second.require_shape({1}, "defense.sigma");
    bank.sigma = it->second[0];
    for (std::size_t k = 0;; ++k) {
        auto slot = params.tensors.find("defense.noise." + std::to_string(k));
        if (slot == params.tensors.end()) break;
        bank.tensors.push_back(slot->second);
    }
    return bank;
}

}  // namespace splitkit

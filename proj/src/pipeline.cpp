#include "splitkit/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "splitkit/digest.hpp"
#include "splitkit/errors.hpp"
#include "splitkit/forward.hpp"
#include "splitkit/report.hpp"
#include "splitkit/rng.hpp"
#include "splitkit/trainer.hpp"

namespace splitkit {

namespace {

using nlohmann::json;

constexpr std::size_t kEvalBatch = 256;

class StageTimer {
public:
    double seconds() const {
        return std::chrono::duration<double>(Clock::now() - start_).count();
    }

private:
    using Clock = std::chrono::steady_clock;
    Clock::time_point start_ = Clock::now();
};

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw Error("short write to '" + path + "'");
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read '" + path + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

json parse_json_file(const std::string& path) {
    try {
        return json::parse(read_text_file(path));
    } catch (const json::exception& err) {
        throw FormatError("malformed JSON in '" + path + "': " + err.what());
    }
}

json source_to_json(const SourceInfo& source) {
    return json{{"kind", source.kind},
                {"seed", source.seed},
                {"params", source.params},
                {"images_digest", source.images_digest},
                {"labels_digest", source.labels_digest}};
}

Tensor edge_forward(const SplitModel& split, const Tensor& x) {
    ForwardOptions opts;
    opts.mode = Mode::Eval;
    opts.keep_activations = false;
    return forward(split.edge, split.edge_params, x, opts).logits();
}

std::vector<std::size_t> index_range(std::size_t begin, std::size_t end) {
    std::vector<std::size_t> out(end - begin);
    std::iota(out.begin(), out.end(), begin);
    return out;
}

Dataset load_idx_with_task(const std::string& images, const std::string& labels,
                           TaskKind kind, const std::string& description) {
    TaskSpec probe{kind, 256, description};
    Dataset ds = load_idx(images, labels, probe);
    int max_label = 0;
    for (int label : ds.labels) max_label = std::max(max_label, label);
    ds.task.num_classes =
        std::max<std::size_t>(2, static_cast<std::size_t>(max_label) + 1);
    ds.validate();
    return ds;
}

}  // namespace

DataBundle prepare_data(const ExperimentConfig& config) {
    config.validate();
    Dataset user_all, attacker_all;
    if (config.data_kind == "synthetic") {
        PairedDatasets pair =
            generate_synthetic(derive_seed(config.seed, "data"),
                               config.synthetic);
        user_all = std::move(pair.user);
        attacker_all = std::move(pair.attacker);
    } else {
        user_all = load_idx_with_task(config.user_images_path,
                                      config.user_labels_path, TaskKind::User,
                                      "idx user task");
        attacker_all = load_idx_with_task(config.attacker_images_path,
                                          config.attacker_labels_path,
                                          TaskKind::Attacker,
                                          "idx attacker task");
    }
    DataBundle out;
    TrainValSplit user_split =
        split_train_val(user_all, config.val_fraction,
                        derive_seed(config.seed, "split_user"));
    out.user_train = std::move(user_split.train);
    out.user_val = std::move(user_split.val);
    TrainValSplit attacker_split =
        split_train_val(attacker_all, config.val_fraction,
                        derive_seed(config.seed, "split_attacker"));
    out.attacker_train = std::move(attacker_split.train);
    out.attacker_val = std::move(attacker_split.val);
    out.model_input =
        TensorSpec{out.user_train.input_spec().shape, Dtype::Float64};
    return out;
}

PipelineEnv prepare_env(const ExperimentConfig& config) {
    PipelineEnv env;
    env.config = config;
    env.digest = config_digest(config);
    env.data = prepare_data(config);
    env.user = build_model(config.arch, env.data.model_input,
                           env.data.user_train.task.num_classes,
                           derive_seed(config.seed, "user_init"));
    TrainConfig tc = config.user_train;
    tc.seed = derive_seed(config.seed, "user_train");
    ParamMask mask = ParamMask::of(all_param_names(env.user.graph));
    TrainReport report = train(env.user.graph, env.user.params,
                               env.data.user_train, env.data.user_val, tc,
                               mask);
    env.accuracy_u = tc.epochs == 0
                         ? evaluate(env.user.graph, env.user.params,
                                    env.data.user_val)
                         : report.best_val_accuracy;
    return env;
}

PipelineEnv make_env(const ExperimentConfig& config, BuiltModel user,
                     double accuracy_u) {
    PipelineEnv env;
    env.config = config;
    env.digest = config_digest(config);
    env.data = prepare_data(config);
    env.user = std::move(user);
    env.accuracy_u = accuracy_u;
    return env;
}

std::vector<CutPoint> selected_cuts(const ExperimentConfig& config,
                                    const ModelGraph& graph) {
    std::vector<CutPoint> all = enumerate_cutpoints(graph);
    if (all.empty()) {
        throw InvalidArgument("model '" + config.arch +
                              "' exposes no cut points");
    }
    if (config.cuts.empty()) return all;
    std::vector<CutPoint> out;
    for (const std::string& label : config.cuts) {
        auto it = std::find_if(all.begin(), all.end(), [&](const CutPoint& c) {
            return c.label == label;
        });
        if (it == all.end()) {
            std::string known;
            for (const CutPoint& c : all) {
                if (!known.empty()) known += ", ";
                known += c.label;
            }
            throw InvalidArgument("unknown cut '" + label + "'; model '" +
                                  config.arch + "' offers: " + known);
        }
        if (std::none_of(out.begin(), out.end(), [&](const CutPoint& c) {
                return c.label == label;
            })) {
            out.push_back(*it);
        }
    }
    return out;
}

SplitModel split_cut(const PipelineEnv& env, const CutPoint& cut) {
    return split(env.user.graph, env.user.params, cut);
}

DefenseOutcome defend_cut(const PipelineEnv& env, const CutPoint& cut) {
    const ExperimentConfig& config = env.config;
    SplitModel sm = split_cut(env, cut);
    DefenseOutcome out;
    out.defense.config = config.defense;
    out.defense.config.seed = derive_seed(config.seed, "defense", cut.label);
    switch (config.defense.strategy) {
        case DefenseStrategy::None:
            break;
        case DefenseStrategy::CalibratedGaussian:
            out.calibration = calibrate_gaussian(
                sm, env.data.user_val, config.defense.pa_target,
                out.defense.config.seed, config.defense.calibration_samples);
            out.defense.bank.sigma = out.calibration.sigma;
            break;
        case DefenseStrategy::LearnedBank: {
            DefenseConfig dc = out.defense.config;
            dc.bank_train.seed =
                derive_seed(config.seed, "defense_train", cut.label);
            out.defense.bank = train_noise_bank(sm, env.data.user_train, dc);
            out.defense.config = dc;
            break;
        }
    }
    out.accuracy_u_prime = defended_accuracy(
        sm, out.defense, env.data.user_val,
        derive_seed(config.seed, "defense_eval", cut.label));
    return out;
}

MiOutcome measure_mi_cut(const PipelineEnv& env, const SplitModel& split,
                         const Defense& defense, const CutPoint& cut) {
    const ExperimentConfig& config = env.config;
    const Dataset& source = env.data.user_train;
    std::size_t n = std::min(config.mi_samples, source.samples());
    std::vector<std::size_t> order = index_range(0, source.samples());
    Rng pick(derive_seed(config.seed, "mi_sample", cut.label));
    pick.shuffle(order);
    order.resize(n);
    std::sort(order.begin(), order.end());

    ProjectionConfig projection;
    projection.dim = config.mi.projection_dim;
    projection.seed = derive_seed(config.seed, "mi_proj", cut.label);
    PairAccumulator clean(projection);
    PairAccumulator noised(projection);
    std::uint64_t noise_seed = derive_seed(config.seed, "mi_noise", cut.label);
    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < n; begin += kEvalBatch, ++batch_index) {
        std::size_t end = std::min(begin + kEvalBatch, n);
        std::vector<std::size_t> chunk(order.begin() + begin,
                                       order.begin() + end);
        Tensor x = assemble_batch(source, chunk);
        Tensor acts = edge_forward(split, x);
        Tensor defended = apply_defense(
            defense, acts,
            derive_seed(noise_seed, "batch", std::to_string(batch_index)));
        clean.add(x, acts);
        noised.add(x, defended);
    }

    MIParams params = config.mi;
    params.seed = derive_seed(config.seed, "mi_est", cut.label);
    MIEstimator estimator = mi_estimator_from_name(config.mi_estimator);
    MiOutcome out;
    out.original = estimate_mi(clean.take(), estimator, params);
    out.noised = estimate_mi(noised.take(), estimator, params);
    out.reduction = mi_reduction(out.original, out.noised);
    return out;
}

AttackStageOutcome attack_cut(const PipelineEnv& env, const SplitModel& split,
                              const Defense& defense, const CutPoint& cut,
                              BaselineCache& cache) {
    const ExperimentConfig& config = env.config;
    std::size_t attacker_classes = env.data.attacker_train.task.num_classes;
    AttackerHead head = make_attacker_head(
        split, attacker_classes, head_kind_from_name(config.attack_head),
        derive_seed(config.seed, "head_init", cut.label));
    JointModel joint = build_joint(split, defense, std::move(head));

    AttackStageOutcome out;
    out.head_arch = config.attack_head;

    BuiltModel composed = compose_unconstrained(
        joint, env.data.model_input, derive_seed(config.seed, "baseline_init"));
    std::string signature = arch_signature(composed.graph);
    auto cached = cache.accuracy_by_signature.find(signature);
    if (cached != cache.accuracy_by_signature.end()) {
        out.accuracy_a = cached->second;
    } else {
        TrainConfig bc = config.attack_train;
        bc.seed = derive_seed(config.seed, "baseline_train");
        out.accuracy_a =
            train_best_baseline(composed.graph, composed.params,
                                env.data.attacker_train,
                                env.data.attacker_val, bc);
        cache.accuracy_by_signature[signature] = out.accuracy_a;
    }

    TrainConfig ac = config.attack_train;
    ac.seed = derive_seed(config.seed, "attack", cut.label);
    out.joint = train_attack(joint, env.data.attacker_train,
                             env.data.attacker_val, ac);
    out.accuracy_a_prime = out.joint.best_val_accuracy;
    out.accuracy_r =
        random_baseline(env.data.attacker_val, RandomBaselineMode::Uniform, 0);
    return out;
}

CutRecord run_cut(const PipelineEnv& env, const CutPoint& cut,
                  BaselineCache& cache, const std::string& out_dir) {
    CutRecord rec;
    rec.cut = cut.label;
    try {
        SplitModel sm = split_cut(env, cut);
        EdgeRatios ratios = edge_ratio(env.user.graph, cut);

        DefenseOutcome defense = defend_cut(env, cut);
        rec.sigma = defense.defense.bank.sigma;
        if (!out_dir.empty()) {
            save_defense_artifacts(env, cut, defense, out_dir);
        }

        MiOutcome mi = measure_mi_cut(env, sm, defense.defense, cut);
        rec.mi_original = mi.original.value_nats;
        rec.mi_noised = mi.noised.value_nats;
        if (!out_dir.empty()) save_mi_artifacts(env, cut, mi, out_dir);

        AttackStageOutcome attack =
            attack_cut(env, sm, defense.defense, cut, cache);
        rec.frozen_digest_before = attack.joint.frozen_digest_before;
        rec.frozen_digest_after = attack.joint.frozen_digest_after;
        if (!out_dir.empty()) save_attack_artifacts(env, cut, attack, out_dir);

        Provenance prov;
        prov.config_digest = env.digest;
        prov.master_seed = env.config.seed;
        prov.defense_strategy =
            defense_strategy_name(env.config.defense.strategy);
        prov.head_arch = attack.head_arch;
        rec.report = build_report(
            cut.label, env.accuracy_u, defense.accuracy_u_prime,
            attack.accuracy_a, attack.accuracy_a_prime, attack.accuracy_r,
            mi.reduction, ratios.flops_ratio, ratios.params_ratio, prov);
        rec.ok = true;
    } catch (const std::exception& err) {
        rec.ok = false;
        rec.error = err.what();
    }
    return rec;
}

RunRecord run_pipeline(const ExperimentConfig& config) {
    config.validate();
    std::error_code ec;
    std::filesystem::create_directories(config.out_dir, ec);
    if (ec) {
        throw Error("cannot create output directory '" + config.out_dir +
                    "': " + ec.message());
    }

    RunRecord record;
    record.config_digest = config_digest(config);
    record.master_seed = config.seed;
    record.arch = config.arch;
    record.defense_strategy = defense_strategy_name(config.defense.strategy);
    record.head_arch = config.attack_head;
    record.out_dir = config.out_dir;

    StageTimer prep_timer;
    PipelineEnv env = prepare_env(config);
    record.accuracy_u = env.accuracy_u;
    record.user_model_digest = params_digest(env.user.params);
    record.user_source = env.data.user_train.source;
    record.attacker_source = env.data.attacker_train.source;
    save_user_model(env, config.out_dir);
    record.timings.push_back({"prepare", prep_timer.seconds()});

    // Validate requested cuts before any per-cut work.
    std::vector<CutPoint> cuts = selected_cuts(config, env.user.graph);
    BaselineCache cache;
    for (const CutPoint& cut : cuts) {
        StageTimer cut_timer;
        record.cuts.push_back(run_cut(env, cut, cache, config.out_dir));
        record.timings.push_back({"cut " + cut.label, cut_timer.seconds()});
    }

    emit_report(record, config.report_formats, config.plots, config.out_dir);
    return record;
}

std::string user_model_path(const std::string& out_dir) {
    return out_dir + "/user_model.splk";
}
std::string user_meta_path(const std::string& out_dir) {
    return out_dir + "/user_model.json";
}
std::string defense_store_path(const std::string& out_dir,
                               const std::string& cut) {
    return out_dir + "/defense_" + cut + ".splk";
}
std::string defense_meta_path(const std::string& out_dir,
                              const std::string& cut) {
    return out_dir + "/defense_" + cut + ".json";
}
std::string mi_meta_path(const std::string& out_dir, const std::string& cut) {
    return out_dir + "/mi_" + cut + ".json";
}
std::string attack_meta_path(const std::string& out_dir,
                             const std::string& cut) {
    return out_dir + "/attack_" + cut + ".json";
}
std::string run_record_path(const std::string& out_dir) {
    return out_dir + "/run_record.json";
}
std::string timings_path(const std::string& out_dir) {
    return out_dir + "/timings.txt";
}

void save_user_model(const PipelineEnv& env, const std::string& out_dir) {
    save_checkpoint(env.user.params, user_model_path(out_dir));
    json meta;
    meta["arch"] = env.config.arch;
    meta["accuracy_u"] = env.accuracy_u;
    meta["num_classes"] = env.user.graph.num_classes;
    meta["input_shape"] = env.user.graph.input_spec.shape;
    meta["params_digest"] = params_digest(env.user.params);
    meta["config_digest"] = env.digest;
    meta["user_source"] = source_to_json(env.data.user_train.source);
    meta["attacker_source"] = source_to_json(env.data.attacker_train.source);
    write_text_file(user_meta_path(out_dir), meta.dump(2) + "\n");
}

PipelineEnv load_user_model(const ExperimentConfig& config,
                            const std::string& out_dir) {
    json meta = parse_json_file(user_meta_path(out_dir));
    std::string stored_digest = meta.at("config_digest").get<std::string>();
    if (stored_digest != config_digest(config)) {
        throw InvalidArgument(
            "artifacts in '" + out_dir +
            "' were produced by a different config (digest mismatch)");
    }
    ParamStore params = load_checkpoint(user_model_path(out_dir));
    std::string expect = meta.at("params_digest").get<std::string>();
    if (params_digest(params) != expect) {
        throw FormatError("user model checkpoint does not match its manifest");
    }

    PipelineEnv env;
    env.config = config;
    env.digest = stored_digest;
    env.data = prepare_data(config);
    env.user = build_model(meta.at("arch").get<std::string>(),
                           env.data.model_input,
                           meta.at("num_classes").get<std::size_t>(),
                           derive_seed(config.seed, "user_init"));
    for (const std::string& name : all_param_names(env.user.graph)) {
        if (!params.contains(name)) {
            throw FormatError("user model checkpoint is missing tensor '" +
                              name + "'");
        }
    }
    env.user.params = std::move(params);
    env.accuracy_u = meta.at("accuracy_u").get<double>();
    return env;
}

void save_defense_artifacts(const PipelineEnv& env, const CutPoint& cut,
                            const DefenseOutcome& outcome,
                            const std::string& out_dir) {
    save_checkpoint(defense_params(outcome.defense),
                    defense_store_path(out_dir, cut.label));
    json meta;
    meta["cut"] = cut.label;
    meta["config_digest"] = env.digest;
    meta["strategy"] = defense_strategy_name(outcome.defense.config.strategy);
    meta["sigma"] = outcome.defense.bank.sigma;
    meta["accuracy_u_prime"] = outcome.accuracy_u_prime;
    meta["calibration"] = json{
        {"sigma", outcome.calibration.sigma},
        {"achieved_accuracy_u_prime",
         outcome.calibration.achieved_accuracy_u_prime},
        {"iterations", outcome.calibration.iterations},
        {"clean_accuracy", outcome.calibration.clean_accuracy}};
    write_text_file(defense_meta_path(out_dir, cut.label), meta.dump(2) + "\n");
}

DefenseOutcome load_defense_artifacts(const PipelineEnv& env,
                                      const CutPoint& cut,
                                      const std::string& out_dir) {
    json meta = parse_json_file(defense_meta_path(out_dir, cut.label));
    std::string strategy = meta.at("strategy").get<std::string>();
    if (strategy != defense_strategy_name(env.config.defense.strategy)) {
        throw InvalidArgument("defense artifact for cut '" + cut.label +
                              "' used strategy " + strategy +
                              " but the config requests " +
                              defense_strategy_name(
                                  env.config.defense.strategy));
    }
    DefenseOutcome out;
    out.defense.config = env.config.defense;
    out.defense.config.seed = derive_seed(env.config.seed, "defense", cut.label);
    out.defense.bank = noise_bank_from_params(
        load_checkpoint(defense_store_path(out_dir, cut.label)));
    out.accuracy_u_prime = meta.at("accuracy_u_prime").get<double>();
    const json& cal = meta.at("calibration");
    out.calibration.sigma = cal.at("sigma").get<double>();
    out.calibration.achieved_accuracy_u_prime =
        cal.at("achieved_accuracy_u_prime").get<double>();
    out.calibration.iterations = cal.at("iterations").get<int>();
    out.calibration.clean_accuracy = cal.at("clean_accuracy").get<double>();
    return out;
}

void save_mi_artifacts(const PipelineEnv& env, const CutPoint& cut,
                       const MiOutcome& outcome, const std::string& out_dir) {
    json meta;
    meta["cut"] = cut.label;
    meta["config_digest"] = env.digest;
    meta["estimator"] = outcome.original.estimator;
    meta["samples"] = outcome.original.n_samples;
    meta["projection_dim"] = env.config.mi.projection_dim;
    meta["k"] = env.config.mi.k;
    meta["bins"] = env.config.mi.bins;
    meta["per_dimension_sum"] = env.config.mi.per_dimension_sum;
    meta["mi_original"] = json{{"value_nats", outcome.original.value_nats},
                               {"raw_value", outcome.original.raw_value}};
    meta["mi_noised"] = json{{"value_nats", outcome.noised.value_nats},
                             {"raw_value", outcome.noised.raw_value}};
    meta["mi_reduction"] = outcome.reduction;
    write_text_file(mi_meta_path(out_dir, cut.label), meta.dump(2) + "\n");
}

void save_attack_artifacts(const PipelineEnv& env, const CutPoint& cut,
                           const AttackStageOutcome& outcome,
                           const std::string& out_dir) {
    json meta;
    meta["cut"] = cut.label;
    meta["config_digest"] = env.digest;
    meta["head"] = outcome.head_arch;
    meta["accuracy_a"] = outcome.accuracy_a;
    meta["accuracy_a_prime"] = outcome.accuracy_a_prime;
    meta["accuracy_r"] = outcome.accuracy_r;
    meta["frozen_digest_before"] = outcome.joint.frozen_digest_before;
    meta["frozen_digest_after"] = outcome.joint.frozen_digest_after;
    json epochs = json::array();
    for (const EpochStats& e : outcome.joint.epoch_log) {
        epochs.push_back(json{{"loss", e.loss},
                              {"val_accuracy", e.val_accuracy},
                              {"lr", e.lr}});
    }
    meta["epoch_log"] = epochs;
    json train;
    const TrainConfig& tc = env.config.attack_train;
    train["lr"] = tc.lr;
    train["momentum"] = tc.momentum;
    train["weight_decay"] = tc.weight_decay;
    train["epsilon"] = tc.epsilon;
    train["epochs"] = tc.epochs;
    train["batch_size"] = tc.batch_size;
    meta["train_config"] = train;
    write_text_file(attack_meta_path(out_dir, cut.label), meta.dump(2) + "\n");
}

RunRecord assemble_from_artifacts(const ExperimentConfig& config,
                                  const std::string& out_dir) {
    PipelineEnv env = load_user_model(config, out_dir);
    RunRecord record;
    record.config_digest = env.digest;
    record.master_seed = config.seed;
    record.arch = config.arch;
    record.defense_strategy = defense_strategy_name(config.defense.strategy);
    record.head_arch = config.attack_head;
    record.accuracy_u = env.accuracy_u;
    record.user_model_digest = params_digest(env.user.params);
    record.user_source = env.data.user_train.source;
    record.attacker_source = env.data.attacker_train.source;
    record.out_dir = out_dir;

    for (const CutPoint& cut : selected_cuts(config, env.user.graph)) {
        CutRecord rec;
        rec.cut = cut.label;
        try {
            EdgeRatios ratios = edge_ratio(env.user.graph, cut);
            json defense = parse_json_file(defense_meta_path(out_dir, cut.label));
            json mi = parse_json_file(mi_meta_path(out_dir, cut.label));
            json attack = parse_json_file(attack_meta_path(out_dir, cut.label));
            rec.sigma = defense.at("sigma").get<double>();
            rec.mi_original =
                mi.at("mi_original").at("value_nats").get<double>();
            rec.mi_noised = mi.at("mi_noised").at("value_nats").get<double>();
            rec.frozen_digest_before =
                attack.at("frozen_digest_before").get<std::string>();
            rec.frozen_digest_after =
                attack.at("frozen_digest_after").get<std::string>();
            Provenance prov;
            prov.config_digest = env.digest;
            prov.master_seed = config.seed;
            prov.defense_strategy = record.defense_strategy;
            prov.head_arch = attack.at("head").get<std::string>();
            rec.report = build_report(
                cut.label, env.accuracy_u,
                defense.at("accuracy_u_prime").get<double>(),
                attack.at("accuracy_a").get<double>(),
                attack.at("accuracy_a_prime").get<double>(),
                attack.at("accuracy_r").get<double>(),
                mi.at("mi_reduction").get<double>(), ratios.flops_ratio,
                ratios.params_ratio, prov);
            rec.ok = true;
        } catch (const std::exception& err) {
            rec.ok = false;
            rec.error = err.what();
        }
        record.cuts.push_back(rec);
    }
    return record;
}

}  // namespace splitkit

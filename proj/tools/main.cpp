#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "splitkit/attack.hpp"
#include "splitkit/config.hpp"
#include "splitkit/errors.hpp"
#include "splitkit/model.hpp"
#include "splitkit/pipeline.hpp"
#include "splitkit/report.hpp"
#include "splitkit/rng.hpp"
#include "splitkit/split.hpp"

namespace {

using namespace splitkit;

struct CommonFlags {
    std::string config_path;
    std::string out_dir;
    std::string cuts;
    std::optional<std::uint64_t> seed;
    std::string format;
};

std::vector<std::string> split_csv(const std::string& value) {
    std::vector<std::string> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

ExperimentConfig load_config(const CommonFlags& flags) {
    ExperimentConfig cfg = parse_config_file(flags.config_path);
    if (flags.seed) {
        cfg.seed = *flags.seed;
        cfg.seed_set = true;
    }
    if (!flags.out_dir.empty()) cfg.out_dir = flags.out_dir;
    if (!flags.cuts.empty()) {
        cfg.cuts = flags.cuts == "all" ? std::vector<std::string>{}
                                       : split_csv(flags.cuts);
    }
    if (!flags.format.empty()) cfg.report_formats = split_csv(flags.format);
    cfg.validate();
    return cfg;
}

void add_common(CLI::App* sub, CommonFlags& flags, bool config_required) {
    auto* config =
        sub->add_option("--config", flags.config_path, "experiment config file");
    if (config_required) config->required();
    sub->add_option("--out", flags.out_dir, "output directory override");
    sub->add_option("--cuts", flags.cuts,
                    "comma-separated cut labels, or 'all'");
    sub->add_option("--seed", flags.seed, "master seed override");
    sub->add_option("--format", flags.format, "report formats: csv,json");
}

void ensure_out_dir(const std::string& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) {
        throw Error("cannot create output directory '" + out_dir +
                    "': " + ec.message());
    }
}

void print_cut_line(const CutRecord& rec) {
    if (rec.ok) {
        const PrivacyReport& r = rec.report;
        std::printf("%-10s pa=%.4f pi=%.4f mi_reduction=%+.4f "
                    "acc_u'=%.4f acc_a=%.4f acc_a'=%.4f\n",
                    rec.cut.c_str(), r.pa, r.pi, r.mi_reduction,
                    r.accuracy_u_prime, r.accuracy_a, r.accuracy_a_prime);
    } else {
        std::printf("%-10s FAILED: %s\n", rec.cut.c_str(), rec.error.c_str());
    }
}

int finish_record(const RunRecord& record) {
    std::size_t failed = 0;
    for (const CutRecord& rec : record.cuts) {
        print_cut_line(rec);
        if (!rec.ok) ++failed;
    }
    std::printf("artifacts: %s\n", record.out_dir.c_str());
    return failed == 0 ? 0 : 2;
}

int cmd_run(const CommonFlags& flags) {
    ExperimentConfig cfg = load_config(flags);
    RunRecord record = run_pipeline(cfg);
    std::printf("accuracy_u=%.4f (user model, clean)\n", record.accuracy_u);
    return finish_record(record);
}

int cmd_train_user(const CommonFlags& flags) {
    ExperimentConfig cfg = load_config(flags);
    ensure_out_dir(cfg.out_dir);
    PipelineEnv env = prepare_env(cfg);
    save_user_model(env, cfg.out_dir);
    std::printf("accuracy_u=%.4f\n", env.accuracy_u);
    std::printf("saved %s\n", user_model_path(cfg.out_dir).c_str());
    return 0;
}

int cmd_profile_cuts(const CommonFlags& flags) {
    ExperimentConfig cfg = load_config(flags);
    DataBundle data = prepare_data(cfg);
    BuiltModel model = build_model(cfg.arch, data.model_input,
                                   data.user_train.task.num_classes,
                                   derive_seed(cfg.seed, "user_init"));
    std::printf("%-10s %-14s %-14s %s\n", "cut", "flops_ratio",
                "params_ratio", "interface");
    for (const CutPoint& cut : selected_cuts(cfg, model.graph)) {
        EdgeRatios ratios = edge_ratio(model.graph, cut);
        SplitModel sm = split(model.graph, model.params, cut);
        std::printf("%-10s %-14.4f %-14.4f %s\n", cut.label.c_str(),
                    ratios.flops_ratio, ratios.params_ratio,
                    shape_to_string(sm.interface_spec.shape).c_str());
    }
    return 0;
}

int cmd_defend(const CommonFlags& flags) {
    ExperimentConfig cfg = load_config(flags);
    PipelineEnv env = load_user_model(cfg, cfg.out_dir);
    std::size_t failed = 0;
    for (const CutPoint& cut : selected_cuts(cfg, env.user.graph)) {
        try {
            DefenseOutcome outcome = defend_cut(env, cut);
            save_defense_artifacts(env, cut, outcome, cfg.out_dir);
            std::printf("%-10s sigma=%.6f accuracy_u'=%.4f\n",
                        cut.label.c_str(), outcome.defense.bank.sigma,
                        outcome.accuracy_u_prime);
        } catch (const std::exception& err) {
            ++failed;
            std::printf("%-10s FAILED: %s\n", cut.label.c_str(), err.what());
        }
    }
    return failed == 0 ? 0 : 2;
}

int cmd_measure_mi(const CommonFlags& flags) {
    ExperimentConfig cfg = load_config(flags);
    PipelineEnv env = load_user_model(cfg, cfg.out_dir);
    std::size_t failed = 0;
    for (const CutPoint& cut : selected_cuts(cfg, env.user.graph)) {
        try {
            SplitModel sm = split_cut(env, cut);
            DefenseOutcome defense =
                load_defense_artifacts(env, cut, cfg.out_dir);
            MiOutcome outcome = measure_mi_cut(env, sm, defense.defense, cut);
            save_mi_artifacts(env, cut, outcome, cfg.out_dir);
            std::printf("%-10s mi=%.4f mi_noised=%.4f reduction=%+.4f\n",
                        cut.label.c_str(), outcome.original.value_nats,
                        outcome.noised.value_nats, outcome.reduction);
        } catch (const std::exception& err) {
            ++failed;
            std::printf("%-10s FAILED: %s\n", cut.label.c_str(), err.what());
        }
    }
    return failed == 0 ? 0 : 2;
}

int cmd_attack(const CommonFlags& flags) {
    ExperimentConfig cfg = load_config(flags);
    PipelineEnv env = load_user_model(cfg, cfg.out_dir);
    BaselineCache cache;
    std::size_t failed = 0;
    for (const CutPoint& cut : selected_cuts(cfg, env.user.graph)) {
        try {
            SplitModel sm = split_cut(env, cut);
            DefenseOutcome defense =
                load_defense_artifacts(env, cut, cfg.out_dir);
            AttackStageOutcome outcome =
                attack_cut(env, sm, defense.defense, cut, cache);
            save_attack_artifacts(env, cut, outcome, cfg.out_dir);
            bool frozen = outcome.joint.frozen_digest_before ==
                          outcome.joint.frozen_digest_after;
            std::printf("%-10s acc_a=%.4f acc_a'=%.4f acc_r=%.4f "
                        "edge_frozen=%s\n",
                        cut.label.c_str(), outcome.accuracy_a,
                        outcome.accuracy_a_prime, outcome.accuracy_r,
                        frozen ? "yes" : "NO");
        } catch (const std::exception& err) {
            ++failed;
            std::printf("%-10s FAILED: %s\n", cut.label.c_str(), err.what());
        }
    }
    return failed == 0 ? 0 : 2;
}

int cmd_evaluate(const CommonFlags& flags) {
    ExperimentConfig cfg = load_config(flags);
    RunRecord record = assemble_from_artifacts(cfg, cfg.out_dir);
    emit_report(record, cfg.report_formats, cfg.plots, cfg.out_dir);
    return finish_record(record);
}

int cmd_report(const CommonFlags& flags) {
    if (flags.out_dir.empty()) {
        throw InvalidArgument("report requires --out <dir> with a run record");
    }
    std::ifstream in(run_record_path(flags.out_dir), std::ios::binary);
    if (!in) {
        throw InvalidArgument("no run record found in '" + flags.out_dir +
                              "'; run the pipeline first");
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    RunRecord record = parse_run_record(buffer.str());
    record.out_dir = flags.out_dir;
    std::vector<std::string> formats =
        flags.format.empty() ? std::vector<std::string>{"csv", "json"}
                             : split_csv(flags.format);
    std::vector<std::string> written =
        emit_report(record, formats, true, flags.out_dir);
    for (const std::string& path : written) {
        std::printf("wrote %s\n", path.c_str());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"privacy evaluation harness for split DNN inference"};
    app.footer("config keys:\n" + config_key_reference());
    app.require_subcommand(1);

    CommonFlags flags;
    CLI::App* run = app.add_subcommand("run", "full pipeline: data, user "
                                              "model, defend, mi, attack, "
                                              "score, report");
    add_common(run, flags, true);
    CLI::App* train_user =
        app.add_subcommand("train-user", "train and save the user model");
    add_common(train_user, flags, true);
    CLI::App* profile =
        app.add_subcommand("profile-cuts", "edge/cloud cost share per cut");
    add_common(profile, flags, true);
    CLI::App* defend = app.add_subcommand(
        "defend", "calibrate or train the defense at each cut");
    add_common(defend, flags, true);
    CLI::App* measure = app.add_subcommand(
        "measure-mi", "mutual information on clean and defended activations");
    add_common(measure, flags, true);
    CLI::App* attack = app.add_subcommand(
        "attack", "train the frozen-edge joint attack and baselines");
    add_common(attack, flags, true);
    CLI::App* evaluate = app.add_subcommand(
        "evaluate", "score stage artifacts into reports");
    add_common(evaluate, flags, true);
    CLI::App* report = app.add_subcommand(
        "report", "re-emit reports from a stored run record");
    add_common(report, flags, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (run->parsed()) return cmd_run(flags);
        if (train_user->parsed()) return cmd_train_user(flags);
        if (profile->parsed()) return cmd_profile_cuts(flags);
        if (defend->parsed()) return cmd_defend(flags);
        if (measure->parsed()) return cmd_measure_mi(flags);
        if (attack->parsed()) return cmd_attack(flags);
        if (evaluate->parsed()) return cmd_evaluate(flags);
        if (report->parsed()) return cmd_report(flags);
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 1;
    }
    std::cerr << "error: no subcommand\n";
    return 1;
}

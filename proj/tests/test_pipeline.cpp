#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "splitkit/config.hpp"
#include "splitkit/errors.hpp"
#include "splitkit/pipeline.hpp"
#include "splitkit/report.hpp"
#include "test_util.hpp"

using namespace splitkit;
using namespace splitkit::testutil;

namespace {

// Smallest run that exercises every stage: one cut, no noise, short budgets.
std::string tiny_config_text(const std::string& out_dir) {
    return "seed = 5\n"
           "out = " + out_dir + "\n"
           "model.arch = mini5\n"
           "data.n = 400\n"
           "data.user_classes = 4\n"
           "data.val_fraction = 0.2\n"
           "cuts = conv1\n"
           "defense.strategy = none\n"
           "mi.samples = 300\n"
           "mi.projection_dim = 4\n"
           "user.epochs = 1\n"
           "user.batch_size = 32\n"
           "user.lr = 0.05\n"
           "attack.head = mlp\n"
           "attack.epochs = 1\n"
           "attack.batch_size = 32\n"
           "attack.lr = 0.05\n"
           "report.plots = true\n";
}

struct TinyRun {
    TempDir dir;
    ExperimentConfig config;
    RunRecord record;

    TinyRun()
        : config(parse_config_text(tiny_config_text(dir.path()),
                                   "tiny.conf")),
          record(run_pipeline(config)) {}
};

// One pipeline execution shared by the read-only assertions below.
const TinyRun& tiny_run() {
    static TinyRun run;
    return run;
}

}  // namespace

TEST_CASE("prepare_data: deterministic and fraction-faithful") {
    ExperimentConfig cfg = parse_config_text(
        "seed = 9\ndata.n = 400\ndata.user_classes = 4\n"
        "data.val_fraction = 0.25\n",
        "t.conf");
    DataBundle a = prepare_data(cfg);
    DataBundle b = prepare_data(cfg);
    CHECK(a.user_train.images == b.user_train.images);
    CHECK(a.attacker_val.labels == b.attacker_val.labels);
    CHECK(a.model_input.shape == std::vector<std::size_t>{1, 28, 28});
    CHECK(a.user_train.samples() + a.user_val.samples() == 400);
    CHECK(a.user_val.samples() == 100);
    CHECK(a.attacker_val.samples() == 100);
    CHECK(a.user_train.task.num_classes == 4);
    CHECK(a.attacker_train.task.num_classes == 2);

    ExperimentConfig other = cfg;
    other.seed = 10;
    DataBundle c = prepare_data(other);
    CHECK_FALSE(a.user_train.images == c.user_train.images);
}

TEST_CASE("selected_cuts: resolves labels against the enumeration") {
    ExperimentConfig cfg = parse_config_text("seed = 1\n", "t.conf");
    BuiltModel model = build_model("mini5", TensorSpec{{1, 28, 28}}, 4, 2);

    auto all = selected_cuts(cfg, model.graph);
    REQUIRE(all.size() == 5);
    CHECK(all.front().label == "conv1");
    CHECK(all.back().label == "conv5");

    cfg.cuts = {"conv4", "conv2"};
    auto picked = selected_cuts(cfg, model.graph);
    REQUIRE(picked.size() == 2);
    CHECK(picked[0].label == "conv4");
    CHECK(picked[1].label == "conv2");

    cfg.cuts = {"conv9"};
    CHECK_THROWS_AS(selected_cuts(cfg, model.graph), InvalidArgument);

    BuiltModel mlp = build_model("mlp", TensorSpec{{1, 28, 28}}, 4, 2);
    cfg.cuts = {};
    CHECK_THROWS_AS(selected_cuts(cfg, mlp.graph), InvalidArgument);
}

TEST_CASE("run_pipeline: scores the cut and keeps the frozen half frozen") {
    const TinyRun& run = tiny_run();
    const RunRecord& record = run.record;

    CHECK(record.config_digest == config_digest(run.config));
    CHECK(record.master_seed == 5);
    CHECK(record.arch == "mini5");
    CHECK(record.defense_strategy == "none");
    CHECK(record.head_arch == "mlp");
    CHECK(record.accuracy_u > 0.0);
    CHECK(record.user_model_digest.size() == 64);
    CHECK(record.user_source.kind == "synthetic");

    REQUIRE(record.cuts.size() == 1);
    const CutRecord& cut = record.cuts[0];
    CAPTURE(cut.error);
    REQUIRE(cut.ok);
    CHECK(cut.cut == "conv1");
    CHECK(cut.sigma == 0.0);
    // No noise: the defended activation equals the original, so the two MI
    // estimates coincide and the reduction is exactly zero.
    CHECK(cut.report.mi_reduction == 0.0);
    CHECK(cut.mi_original == cut.mi_noised);
    CHECK(cut.frozen_digest_before == cut.frozen_digest_after);
    CHECK(cut.frozen_digest_before.size() == 64);

    const PrivacyReport& rep = cut.report;
    CHECK(rep.accuracy_u == record.accuracy_u);
    CHECK(rep.accuracy_u_prime == rep.accuracy_u);  // defense off
    CHECK(rep.pa == 1.0);
    CHECK(rep.accuracy_r == 0.5);
    CHECK(rep.accuracy_a >= rep.accuracy_r);
    CHECK(rep.flops_ratio > 0.0);
    CHECK(rep.flops_ratio < 1.0);
    CHECK(rep.provenance.config_digest == record.config_digest);
    CHECK(rep.provenance.defense_strategy == "none");
}

TEST_CASE("run_pipeline: artifacts and reports land in the output dir") {
    const TinyRun& run = tiny_run();
    const std::string& dir = run.record.out_dir;
    CHECK(dir == run.dir.path());
    for (const std::string& path :
         {user_model_path(dir), user_meta_path(dir),
          defense_store_path(dir, "conv1"), defense_meta_path(dir, "conv1"),
          mi_meta_path(dir, "conv1"), attack_meta_path(dir, "conv1"),
          run_record_path(dir), timings_path(dir), dir + "/report.csv",
          dir + "/report.json", dir + "/fig_profile.svg",
          dir + "/fig_attack.svg"}) {
        CAPTURE(path);
        CHECK(std::filesystem::exists(path));
    }

    std::string csv = read_file(dir + "/report.csv");
    CHECK(csv.rfind("cut,pa,pi,pi_raw,mi_reduction,accuracy_u,"
                    "accuracy_u_prime,accuracy_a,accuracy_a_prime,"
                    "accuracy_r,flops_ratio,params_ratio\n",
                    0) == 0);
    const bool has_conv1_row = csv.find("\nconv1,") != std::string::npos;
    CHECK(has_conv1_row);

    std::string svg = read_file(dir + "/fig_profile.svg");
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("polyline") != std::string::npos);
    std::string bars = read_file(dir + "/fig_attack.svg");
    CHECK(bars.find("<svg") != std::string::npos);
}

TEST_CASE("run_pipeline: reruns are byte-identical") {
    const TinyRun& run = tiny_run();
    TempDir second;
    ExperimentConfig again = run.config;
    again.out_dir = second.path();
    RunRecord record = run_pipeline(again);
    REQUIRE(record.cuts.size() == 1);
    CHECK(record.cuts[0].ok);

    for (const char* name : {"/report.csv", "/report.json",
                             "/run_record.json"}) {
        CAPTURE(name);
        CHECK(read_file(run.dir.path() + name) ==
              read_file(second.path() + name));
    }
}

TEST_CASE("run record json: round-trips and rejects garbage") {
    const TinyRun& run = tiny_run();
    std::string text = run_record_json_text(run.record);
    RunRecord back = parse_run_record(text);
    CHECK(run_record_json_text(back) == text);
    CHECK(back.cuts.size() == run.record.cuts.size());
    CHECK(back.cuts[0].report.pa == run.record.cuts[0].report.pa);
    CHECK(back.config_digest == run.record.config_digest);

    CHECK_THROWS_AS(parse_run_record("not json at all"), FormatError);
    CHECK_THROWS_AS(parse_run_record("{\"schema_version\": 1}"), FormatError);
}

TEST_CASE("emit_report: writes the requested formats") {
    const TinyRun& run = tiny_run();
    TempDir dir;
    auto paths = emit_report(run.record, {"csv"}, false, dir.path());
    bool has_csv = false, has_record = false, has_json = false;
    for (const std::string& p : paths) {
        has_csv = has_csv || p.find("report.csv") != std::string::npos;
        has_json = has_json || p.find("report.json") != std::string::npos;
        has_record =
            has_record || p.find("run_record.json") != std::string::npos;
        CHECK(std::filesystem::exists(p));
    }
    CHECK(has_csv);
    CHECK(has_record);
    CHECK_FALSE(has_json);
    CHECK_FALSE(std::filesystem::exists(dir.path() + "/fig_profile.svg"));
}

TEST_CASE("assemble_from_artifacts: rebuilds the scored reports") {
    const TinyRun& run = tiny_run();
    RunRecord assembled =
        assemble_from_artifacts(run.config, run.dir.path());
    CHECK(assembled.config_digest == run.record.config_digest);
    REQUIRE(assembled.cuts.size() == 1);
    REQUIRE(assembled.cuts[0].ok);
    CHECK(report_csv(assembled) == report_csv(run.record));
    CHECK(assembled.cuts[0].frozen_digest_after ==
          run.record.cuts[0].frozen_digest_after);

    // Artifacts from some other configuration must be refused.
    ExperimentConfig other = run.config;
    other.seed = 77;
    CHECK_THROWS_AS(load_user_model(other, run.dir.path()), InvalidArgument);

    // Missing per-cut artifacts come back as failed records, not throws.
    TempDir empty;
    ExperimentConfig cfg = run.config;
    cfg.out_dir = empty.path();
    PipelineEnv env = prepare_env(cfg);
    save_user_model(env, empty.path());
    RunRecord partial = assemble_from_artifacts(cfg, empty.path());
    REQUIRE(partial.cuts.size() == 1);
    CHECK_FALSE(partial.cuts[0].ok);
    CHECK_FALSE(partial.cuts[0].error.empty());
}

TEST_CASE("staged stages: save and load round-trip the user model") {
    const TinyRun& run = tiny_run();
    PipelineEnv env = load_user_model(run.config, run.dir.path());
    CHECK(env.accuracy_u == run.record.accuracy_u);
    CHECK(env.digest == run.record.config_digest);
    CHECK(params_digest(env.user.params) == run.record.user_model_digest);

    // The reloaded env reproduces the defended accuracy of the run.
    auto cuts = selected_cuts(run.config, env.user.graph);
    REQUIRE(cuts.size() == 1);
    DefenseOutcome defense = load_defense_artifacts(env, cuts[0],
                                                    run.dir.path());
    CHECK(defense.accuracy_u_prime ==
          run.record.cuts[0].report.accuracy_u_prime);
}

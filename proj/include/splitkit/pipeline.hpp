#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "splitkit/attack.hpp"
#include "splitkit/config.hpp"
#include "splitkit/data.hpp"
#include "splitkit/defense.hpp"
#include "splitkit/metrics.hpp"
#include "splitkit/mi.hpp"
#include "splitkit/model.hpp"
#include "splitkit/split.hpp"

namespace splitkit {

// Datasets and the model input spec, deterministic from the config alone.
struct DataBundle {
    Dataset user_train, user_val;
    Dataset attacker_train, attacker_val;
    TensorSpec model_input;
};

DataBundle prepare_data(const ExperimentConfig& config);

// Shared state every per-cut stage reads: config, data, trained user model.
struct PipelineEnv {
    ExperimentConfig config;
    std::string digest;  // config digest
    DataBundle data;
    BuiltModel user;
    double accuracy_u = 0.0;
};

// Data preparation plus user-model training.
PipelineEnv prepare_env(const ExperimentConfig& config);

// Env around an already trained model (loaded from artifacts).
PipelineEnv make_env(const ExperimentConfig& config, BuiltModel user,
                     double accuracy_u);

// Cut labels from config resolved against the enumeration; unknown labels
// are a config error.
std::vector<CutPoint> selected_cuts(const ExperimentConfig& config,
                                    const ModelGraph& graph);

SplitModel split_cut(const PipelineEnv& env, const CutPoint& cut);

struct DefenseOutcome {
    Defense defense;
    double accuracy_u_prime = 0.0;
    CalibrationResult calibration;  // zeros unless calibrated_gaussian
};

DefenseOutcome defend_cut(const PipelineEnv& env, const CutPoint& cut);

struct MiOutcome {
    MIEstimate original;
    MIEstimate noised;
    double reduction = 0.0;
};

MiOutcome measure_mi_cut(const PipelineEnv& env, const SplitModel& split,
                         const Defense& defense, const CutPoint& cut);

// One unconstrained baseline accuracy per composed-architecture signature.
struct BaselineCache {
    std::map<std::string, double> accuracy_by_signature;
};

struct AttackStageOutcome {
    double accuracy_a = 0.0;
    double accuracy_a_prime = 0.0;
    double accuracy_r = 0.0;
    AttackOutcome joint;
    std::string head_arch;
};

AttackStageOutcome attack_cut(const PipelineEnv& env, const SplitModel& split,
                              const Defense& defense, const CutPoint& cut,
                              BaselineCache& cache);

struct CutRecord {
    std::string cut;
    bool ok = false;
    std::string error;  // set when !ok
    PrivacyReport report;
    double sigma = 0.0;
    double mi_original = 0.0;
    double mi_noised = 0.0;
    std::string frozen_digest_before;
    std::string frozen_digest_after;
};

// All stages for one cut; failures are captured, not thrown.  When out_dir
// is nonempty, per-cut artifacts are written there.
CutRecord run_cut(const PipelineEnv& env, const CutPoint& cut,
                  BaselineCache& cache, const std::string& out_dir);

struct StageTiming {
    std::string stage;
    double seconds = 0.0;
};

struct RunRecord {
    std::string config_digest;
    std::uint64_t master_seed = 0;
    std::string arch;
    std::string defense_strategy;
    std::string head_arch;
    double accuracy_u = 0.0;
    std::string user_model_digest;
    SourceInfo user_source;
    SourceInfo attacker_source;
    std::vector<CutRecord> cuts;
    // Wall times and the output location never enter serialized reports.
    std::vector<StageTiming> timings;
    std::string out_dir;
};

// Full pipeline: data -> user model -> per-cut defend/measure/attack/score.
// Artifacts, reports and timings land in config.out_dir.  Per-cut failures
// are recorded and do not abort the run.
RunRecord run_pipeline(const ExperimentConfig& config);

// Artifact names inside an output directory.
std::string user_model_path(const std::string& out_dir);
std::string user_meta_path(const std::string& out_dir);
std::string defense_store_path(const std::string& out_dir,
                               const std::string& cut);
std::string defense_meta_path(const std::string& out_dir,
                              const std::string& cut);
std::string mi_meta_path(const std::string& out_dir, const std::string& cut);
std::string attack_meta_path(const std::string& out_dir,
                             const std::string& cut);
std::string run_record_path(const std::string& out_dir);
std::string timings_path(const std::string& out_dir);

void save_user_model(const PipelineEnv& env, const std::string& out_dir);
PipelineEnv load_user_model(const ExperimentConfig& config,
                            const std::string& out_dir);

void save_defense_artifacts(const PipelineEnv& env, const CutPoint& cut,
                            const DefenseOutcome& outcome,
                            const std::string& out_dir);
DefenseOutcome load_defense_artifacts(const PipelineEnv& env,
                                      const CutPoint& cut,
                                      const std::string& out_dir);

void save_mi_artifacts(const PipelineEnv& env, const CutPoint& cut,
                       const MiOutcome& outcome, const std::string& out_dir);
void save_attack_artifacts(const PipelineEnv& env, const CutPoint& cut,
                           const AttackStageOutcome& outcome,
                           const std::string& out_dir);

// Rebuilds per-cut reports from stage artifacts on disk (the evaluate
// subcommand); cuts with missing artifacts come back as failed records.
RunRecord assemble_from_artifacts(const ExperimentConfig& config,
                                  const std::string& out_dir);

}  // namespace splitkit

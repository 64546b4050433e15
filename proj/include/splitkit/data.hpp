#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "splitkit/tensor.hpp"

namespace splitkit {

enum class TaskKind { User, Attacker };

struct TaskSpec {
    TaskKind kind = TaskKind::User;
    std::size_t num_classes = 2;
    std::string description;
};

// Where a dataset came from, for provenance records.
struct SourceInfo {
    std::string kind;  // "synthetic" or "idx"
    // synthetic
    std::uint64_t seed = 0;
    std::string params;
    // idx
    std::string images_digest;
    std::string labels_digest;
};

// A dataset plus its manifest fields.  Images hold raw sample values in a
// single n x (input_spec) tensor; uint8-typed images are divided by 255
// when batches are assembled, float tensors pass through unscaled.
struct Dataset {
    std::string name;
    Tensor images;
    std::vector<int> labels;
    TaskSpec task;
    SourceInfo source;

    std::size_t samples() const;
    TensorSpec input_spec() const;

    void validate() const;
};

// Synthetic paired-task generator.  Every image carries:
//  - a user glyph: a bright block whose position on a grid encodes one of
//    user_classes classes (central region),
//  - an independent binary attacker attribute rendered away from the user
//    region: "corner_glyph" (block present/absent) or "stripe"
//    (horizontal/vertical bar).
// decodability controls how often the rendered attribute agrees with the
// attacker label, so a perfect attribute reader scores ~decodability.
struct SyntheticParams {
    std::size_t n = 5000;
    std::size_t user_classes = 10;
    std::string attribute = "corner_glyph";  // or "stripe"
    double decodability = 1.0;
    std::size_t image_size = 28;
    bool overlap = false;  // draw the attribute inside the user region
};

struct PairedDatasets {
    Dataset user;
    Dataset attacker;
};

PairedDatasets generate_synthetic(std::uint64_t seed,
                                  const SyntheticParams& params);

// Ridge-regression probe on raw pixels for a binary-labeled dataset;
// returns held-out accuracy.  Used to verify attribute decodability.
double linear_probe_accuracy(const Dataset& dataset, std::uint64_t seed);

// Pearson correlation between two label sequences.
double label_correlation(const std::vector<int>& a, const std::vector<int>& b);

// IDX ingestion: big-endian magic 0x00000803 (3-D uint8 images) and
// 0x00000801 (1-D uint8 labels), big-endian u32 dimension sizes, raw payload.
Dataset load_idx(const std::string& images_path,
                 const std::string& labels_path, const TaskSpec& task);
void save_idx(const Dataset& dataset, const std::string& images_path,
              const std::string& labels_path);

// Class-ratio-preserving split; per-class val counts are the rounded
// val_fraction share of that class.  Deterministic per seed.
struct TrainValSplit {
    Dataset train;
    Dataset val;
};
TrainValSplit split_train_val(const Dataset& dataset, double val_fraction,
                              std::uint64_t seed);

// Subset by sample indices, keeping task and source.
Dataset subset(const Dataset& dataset, const std::vector<std::size_t>& indices);

// n x input_spec batch of normalized sample values for the given indices.
Tensor assemble_batch(const Dataset& dataset,
                      const std::vector<std::size_t>& indices);
std::vector<int> gather_labels(const Dataset& dataset,
                               const std::vector<std::size_t>& indices);

}  // namespace splitkit

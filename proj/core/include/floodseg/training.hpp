#ifndef FLOODSEG_TRAINING_HPP
#define FLOODSEG_TRAINING_HPP

#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "floodseg/backbone.hpp"
#include "floodseg/dataset.hpp"
#include "floodseg/losses.hpp"
#include "floodseg/metrics.hpp"
#include "floodseg/models.hpp"

namespace floodseg {

struct TrainingConfig {
  double lr0 = 1e-3;
  double plateau_factor = 0.75;
  int plateau_patience = 5;
  int epochs = 70;
  int train_batch = 8;
  int eval_batch = 16;
  std::string optimizer = "adam";
  std::uint64_t seed = 0;
  LossConfig loss;
  ModelConfig model;
  AugmentationConfig augment;
  std::filesystem::path checkpoint_dir = "checkpoints";

  void validate() const;
};

struct SchedulerState {
  double current_lr = 1e-3;
  double best_val_loss = std::numeric_limits<double>::infinity();
  int epochs_since_improvement = 0;
};

/// Reduce-on-plateau: after `plateau_patience` epochs without a new best
/// validation loss, multiply the rate by `plateau_factor`.
SchedulerState lr_on_plateau(SchedulerState state, double val_loss, const TrainingConfig& cfg);

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_miou = 0.0;
  double lr = 0.0;
};

struct TrainingHistory {
  std::vector<EpochRecord> records;
  void write_csv(const std::filesystem::path& path) const;
};

struct CheckpointManifest {
  std::string variant;
  int num_classes = 0;
  int input_size = 0;
  std::uint64_t seed = 0;
  int epoch = 0;
  double val_miou = 0.0;
  double val_loss = 0.0;
  std::uint64_t blob_digest = 0;
};

/// Writes <path> (parameter blob) and <path>.json (manifest).
void save_checkpoint(SegmentationModel& model, const CheckpointManifest& manifest,
                     const std::filesystem::path& path);
/// Integrity-checks the blob digest and variant before loading parameters.
CheckpointManifest load_checkpoint(SegmentationModel& model, const std::filesystem::path& path);
CheckpointManifest read_manifest(const std::filesystem::path& checkpoint_path);

/// One optimization pass over shuffled, augmented training batches.
double train_epoch(SegmentationModel& model, const Backbone* backbone,
                   torch::optim::Optimizer& opt, const std::vector<Sample>& train_samples,
                   const TrainingConfig& cfg, int epoch);

struct EvalResult {
  double loss = 0.0;
  ConfusionMatrix confusion{1};
};

EvalResult eval_pass(SegmentationModel& model, const Backbone* backbone,
                     const std::vector<Sample>& samples, const TrainingConfig& cfg);

struct FitResult {
  TrainingHistory history;
  std::filesystem::path best_checkpoint;
  std::filesystem::path last_checkpoint;
  std::uint64_t backbone_digest_before = 0;
  std::uint64_t backbone_digest_after = 0;
};

FitResult fit(const TrainingConfig& cfg, const DatasetIndex& train_index,
              const DatasetIndex& val_index, const ClassCatalog& catalog,
              const std::filesystem::path& resume_checkpoint = {});

enum class AblationVariant { DiceOnly, FocalOnly, ModifiedFocal, DiceModifiedFocal };
std::string to_string(AblationVariant v);
AblationVariant ablation_variant_from_string(const std::string& s);

/// Effective loss config for one ablation variant.
LossConfig ablation_loss(AblationVariant v, const LossConfig& base, int num_classes);

/// Trains and evaluates one run per variant with identical seed and model.
std::vector<MetricsReport> run_ablation(const TrainingConfig& base_cfg,
                                        const std::vector<AblationVariant>& variants,
                                        const DatasetIndex& train_index,
                                        const DatasetIndex& val_index, const ClassCatalog& catalog,
                                        const std::filesystem::path& out_dir);

}  // namespace floodseg

#endif

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "cxr/data/augment.hpp"
#include "cxr/data/manifest.hpp"
#include "cxr/data/preprocess.hpp"
#include "cxr/metrics/metrics.hpp"
#include "cxr/models/model.hpp"
#include "cxr/training/controllers.hpp"

namespace cxr {

struct TrainConfig {
  int batch_size = 32;
  int max_epochs = 50;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  PlateauConfig plateau;
  int early_stop_patience = 10;
  double improvement_threshold = 1e-6;
  std::uint64_t seed = 42;
  int workers = 1;              ///< image-decoding threads
  bool cache_images = false;    ///< keep prepared images in memory across epochs
  PreprocessConfig preprocess;
  AugmentPolicy augment;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;  ///< 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
  std::vector<std::string> group_names;
  std::vector<double> lrs;  ///< rates in effect during this epoch, per optimizer group
  double wall_seconds = 0.0;
};

enum class StopReason { kEarlyStop, kMaxEpochs };
std::string_view to_string(StopReason reason);

struct TrainResult {
  std::vector<EpochRecord> history;
  std::filesystem::path best_checkpoint;
  StopReason stop_reason = StopReason::kMaxEpochs;
  int best_epoch = 0;
  double best_val_loss = 0.0;
};

struct Batch {
  torch::Tensor images;  ///< N x 3 x S x S, standardized
  torch::Tensor labels;  ///< N, int64 (0 = NORMAL, 1 = PNEUMONIA)
  std::vector<std::string> ids;
};

/// Loads records of one split. Augmentation is switched on only for TRAIN;
/// each record/epoch pair gets its own generator seeded from (seed, epoch, id).
class BatchLoader {
 public:
  BatchLoader(std::filesystem::path dataset_root, std::vector<ImageRecord> records, Split split,
              PreprocessConfig preprocess, AugmentPolicy augment, std::uint64_t seed,
              int workers = 1, bool cache_images = false);

  bool augments() const { return split_ == Split::kTrain; }
  Split split() const { return split_; }
  std::size_t size() const { return records_.size(); }
  const std::vector<ImageRecord>& records() const { return records_; }

  /// Shuffled (seeded by seed and epoch) for TRAIN, manifest order otherwise.
  std::vector<std::size_t> epoch_order(int epoch) const;

  Batch load(std::span<const std::size_t> indices, int epoch) const;

  /// The standardized tensor for a single record (no augmentation).
  torch::Tensor load_one(std::size_t index) const;

 private:
  Image prepared(std::size_t index) const;

  std::filesystem::path root_;
  std::vector<ImageRecord> records_;
  Split split_;
  PreprocessConfig preprocess_;
  AugmentPolicy augment_;
  std::uint64_t seed_;
  int workers_;
  bool cache_;
  mutable std::vector<std::optional<Image>> cache_store_;
};

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
  PredictionSet preds;
};

/// Eval-mode pass over every record; probabilities are softmax of the logits.
EvalResult evaluate(ModelHandle& model, const BatchLoader& loader, int batch_size);

/// Runs the optimisation loop and writes into `run_dir`:
/// history.csv, checkpoints/best.pt (+ best.json) and stop.json.
/// Throws TrainingError for empty TRAIN/VAL splits or a non-finite loss
/// (after writing diagnostics.json).
TrainResult train(ModelHandle& model, const SplitManifest& manifest,
                  const std::filesystem::path& dataset_root, const TrainConfig& cfg,
                  const std::filesystem::path& run_dir);

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history);

}  // namespace cxr

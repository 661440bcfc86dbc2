#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ratlesnet/dataset.h"
#include "ratlesnet/metrics.h"
#include "ratlesnet/model.h"
#include "ratlesnet/train.h"

namespace ratlesnet {

struct TrainConfig {
  TrainPolicy policy;
  AdamConfig adam;
  // Share of the training scans held out for the stopping rule.
  double val_fraction = 0.2;
};

// Which scans a fold trained on, validated on, and scored.
struct FoldAudit {
  std::size_t fold = 0;
  std::vector<std::string> train_ids;
  std::vector<std::string> val_ids;
  std::vector<std::string> test_ids;
};

using ProgressFn = std::function<void(const std::string&)>;

struct CrossvalResult {
  EvalReport report;
  std::vector<DiceResult> scans;  // fold order, then fold membership order
  std::vector<Mask> predictions;  // parallel to scans
  std::vector<Model<float>> models;
  std::vector<FoldAudit> audit;
  std::vector<std::vector<EpochRecord>> histories;
};

// k-fold cross-validation on a single-study manifest. Each fold trains a
// fresh model (config.seed) on the other folds minus a stratified validation
// hold-out, then scores its own scans. Training errors are rethrown naming
// the fold.
CrossvalResult crossval(const Manifest& manifest, std::size_t k, const ModelConfig& model_config,
                        const TrainConfig& train_config, std::uint64_t seed,
                        GroupBy group_by = GroupBy::kTimePoint, const ProgressFn& progress = {});

struct GeneralizationResult {
  EvalReport report;
  std::vector<DiceResult> scans;
  std::vector<Mask> predictions;  // parallel to scans
  Model<float> model;
  std::vector<EpochRecord> history;
  FoldAudit audit;
};

// Trains once on train_manifest and scores every test manifest, grouped by
// study. Throws ConfigError if any scan id or study name of a test manifest
// also appears in the training manifest.
GeneralizationResult generalization_eval(const Manifest& train_manifest,
                                         std::span<const Manifest> test_manifests,
                                         const ModelConfig& model_config,
                                         const TrainConfig& train_config, std::uint64_t seed,
                                         const ProgressFn& progress = {});

// Predicts and scores each sample against its labels. Predicted masks are
// appended to `predictions` when it is non-null.
std::vector<DiceResult> score_samples(const Model<float>& model, std::span<const Sample> samples,
                                      std::span<const ScanRecord> records,
                                      std::vector<Mask>* predictions = nullptr);

std::string format_audit(std::span<const FoldAudit> audit);

}  // namespace ratlesnet

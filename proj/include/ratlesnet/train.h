#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ratlesnet/adam.h"
#include "ratlesnet/model.h"

namespace ratlesnet {

struct TrainPolicy {
  std::size_t max_epochs = 1000;
  // Stop once the validation loss has strictly increased this many epochs in a row.
  std::size_t patience = 5;
  // Only a mini-batch of one scan is supported.
  std::size_t batch_size = 1;
};

// A standardized scan ready for the network.
struct Sample {
  std::string id;
  Tensor<float> input;                // (1, channels, x, y, z)
  std::vector<std::uint8_t> labels;   // (x, y, z) row-major
  Spacing3 voxel_size{1.0, 1.0, 1.0};
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  Model<float> model;  // best-validation snapshot
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  bool stopped_early = false;
};

// The stopping rule. An epoch counts as an increase when its validation loss
// is strictly greater than the previous epoch's; anything else resets the run.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  // Returns true when training should stop after this epoch.
  bool observe(double val_loss);
  std::size_t consecutive_increases() const { return increases_; }

 private:
  std::size_t patience_;
  std::size_t increases_ = 0;
  bool has_previous_ = false;
  double previous_ = 0.0;
};

// Runs one epoch and reports its losses; the loop owns the stopping rule and
// the best-snapshot bookkeeping.
using EpochFn = std::function<EpochRecord(std::size_t epoch)>;
using EpochObserver = std::function<void(const EpochRecord&)>;

TrainResult run_training_loop(Model<float>& model, const TrainPolicy& policy, const EpochFn& epoch,
                              const EpochObserver& observer = {});

// Forward, backward and one Adam update on a single scan. Returns the loss.
double train_step(Model<float>& model, AdamState& state, const Sample& sample);

// Mean loss over samples, summed in order.
double mean_loss(const Model<float>& model, std::span<const Sample> samples);

// Shuffled single-scan Adam epochs with validation after each; returns the
// best-validation snapshot. Throws ConfigError on empty sets and NumericError
// (naming the epoch) if a loss becomes non-finite.
TrainResult train(Model<float> model, std::span<const Sample> train_set,
                  std::span<const Sample> val_set, const TrainPolicy& policy,
                  const AdamConfig& adam, std::uint64_t seed, const EpochObserver& observer = {});

// Header line, then "epoch<TAB>train_loss<TAB>val_loss" per epoch.
std::string format_epoch_log(std::span<const EpochRecord> history);

}  // namespace ratlesnet

#include "ratlesnet/train.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "ratlesnet/ops.h"
#include "ratlesnet/parallel.h"

namespace ratlesnet {

bool EarlyStopping::observe(double val_loss) {
  if (has_previous_ && val_loss > previous_) {
    ++increases_;
  } else {
    increases_ = 0;
  }
  has_previous_ = true;
  previous_ = val_loss;
  return increases_ >= patience_;
}

TrainResult run_training_loop(Model<float>& model, const TrainPolicy& policy, const EpochFn& epoch,
                              const EpochObserver& observer) {
  if (policy.batch_size != 1) throw ConfigError("only a mini-batch size of 1 is supported");
  if (policy.max_epochs == 0) throw ConfigError("max_epochs must be positive");
  if (policy.patience == 0) throw ConfigError("patience must be positive");
  TrainResult result;
  EarlyStopping stopping(policy.patience);
  bool have_best = false;
  for (std::size_t e = 1; e <= policy.max_epochs; ++e) {
    EpochRecord rec = epoch(e);
    rec.epoch = e;
    if (!std::isfinite(rec.train_loss) || !std::isfinite(rec.val_loss)) {
      throw NumericError("non-finite loss in epoch " + std::to_string(e));
    }
    result.history.push_back(rec);
    if (observer) observer(rec);
    if (!have_best || rec.val_loss < result.best_val_loss) {
      have_best = true;
      result.best_val_loss = rec.val_loss;
      result.best_epoch = e;
      result.model = model;
    }
    if (stopping.observe(rec.val_loss)) {
      result.stopped_early = e < policy.max_epochs;
      break;
    }
  }
  return result;
}

double train_step(Model<float>& model, AdamState& state, const Sample& sample) {
  const FlushDenormals ftz;
  Graph<float> g;
  const NodeId x = g.constant(sample.input);
  const NodeId logits = model.forward(g, x);
  const NodeId loss = softmax_cross_entropy(g, logits, sample.labels);
  g.backward(loss);
  auto params = model.parameters();
  adam_step(params, state);
  for (Tensor<float>* p : params) p->zero_grad();
  return g.value(loss)[0];
}

double mean_loss(const Model<float>& model, std::span<const Sample> samples) {
  const FlushDenormals ftz;
  double total = 0.0;
  for (const Sample& s : samples) {
    total += kernels::softmax_cross_entropy<float>(model.infer(s.input), s.labels);
  }
  return samples.empty() ? 0.0 : total / static_cast<double>(samples.size());
}

TrainResult train(Model<float> model, std::span<const Sample> train_set,
                  std::span<const Sample> val_set, const TrainPolicy& policy,
                  const AdamConfig& adam, std::uint64_t seed, const EpochObserver& observer) {
  if (train_set.empty()) throw ConfigError("training set is empty");
  if (val_set.empty()) throw ConfigError("validation set is empty");
  for (Tensor<float>* p : model.parameters()) {
    p->set_requires_grad(true);
    p->clear_grad();
  }
  auto params = model.parameters();
  AdamState state(adam, params);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  auto epoch = [&](std::size_t e) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochRecord rec;
    double total = 0.0;
    try {
      for (std::size_t i : order) total += train_step(model, state, train_set[i]);
      rec.val_loss = mean_loss(model, val_set);
    } catch (const NumericError& err) {
      throw NumericError("epoch " + std::to_string(e) + ": " + err.what());
    }
    rec.train_loss = total / static_cast<double>(train_set.size());
    return rec;
  };
  return run_training_loop(model, policy, epoch, observer);
}

std::string format_epoch_log(std::span<const EpochRecord> history) {
  std::ostringstream out;
  out.precision(9);
  out << "epoch\ttrain_loss\tval_loss\n";
  for (const EpochRecord& r : history) {
    out << r.epoch << '\t' << r.train_loss << '\t' << r.val_loss << '\n';
  }
  return out.str();
}

}  // namespace ratlesnet

#include <doctest.h>

#include <cmath>
#include <limits>

#include "ratlesnet/adam.h"
#include "ratlesnet/error.h"
#include "ratlesnet/train.h"
#include "support/reference.h"

using namespace ratlesnet;
using testing_support::random_tensor;

namespace {

// Plain double-precision Adam on one coordinate.
struct AdamOracle {
  double lr, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double m = 0, v = 0;
  int t = 0;
  double step(double theta, double g) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    return theta - lr * mh / (std::sqrt(vh) + eps);
  }
};

Model<float> tiny_model(std::uint64_t seed = 0) {
  ModelConfig cfg;
  cfg.growth_rate = 2;
  cfg.levels = 1;
  cfg.seed = seed;
  return build_model<float>(cfg);
}

Sample blob_sample(const std::string& id, std::uint64_t seed) {
  Sample s;
  s.id = id;
  s.input = random_tensor<float>(Shape(1, 1, 6, 6, 4), seed, -0.3, 0.3);
  s.labels.assign(6 * 6 * 4, 0);
  for (std::size_t x = 2; x < 5; ++x)
    for (std::size_t y = 1; y < 4; ++y)
      for (std::size_t z = 1; z < 3; ++z) {
        const std::size_t i = (x * 6 + y) * 4 + z;
        s.labels[i] = 1;
        s.input[i] += 2.0f;
      }
  return s;
}

TrainResult run_trace(const std::vector<double>& val_losses, std::size_t max_epochs,
                      std::size_t patience = 5) {
  Model<float> model = tiny_model();
  TrainPolicy policy;
  policy.max_epochs = max_epochs;
  policy.patience = patience;
  return run_training_loop(model, policy, [&](std::size_t epoch) {
    // Stamp the epoch into a weight so the returned snapshot is identifiable.
    model.layers()[0].params.weight[0] = static_cast<float>(epoch);
    return EpochRecord{epoch, 1.0, val_losses.at(epoch - 1)};
  });
}

}  // namespace

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  Tensor<float> p = random_tensor<float>(Shape(1, 1, 2, 2, 2), 1);
  const Tensor<float> before = p;
  p.grad();
  Tensor<float>* params[] = {&p};
  AdamState state(AdamConfig{}, params);
  adam_step(params, state);
  CHECK(std::equal(p.data().begin(), p.data().end(), before.data().begin()));
  CHECK(state.step == 1);
}

TEST_CASE("adam: first step moves by about lr against the gradient sign") {
  for (double g : {0.5, -3.0, 1e-3}) {
    Tensor<float> p(Shape(1, 1, 1, 1, 1), 0.0f);
    p.grad()[0] = static_cast<float>(g);
    Tensor<float>* params[] = {&p};
    AdamState state(AdamConfig{}, params);
    adam_step(params, state);
    AdamOracle oracle{1e-5};
    const double expect = oracle.step(0.0, static_cast<float>(g));
    CHECK(p[0] == doctest::Approx(expect).epsilon(1e-6));
    CHECK(std::abs(p[0] + 1e-5 * (g > 0 ? 1 : -1)) < 1e-5 * 1e-4);
  }
}

TEST_CASE("adam: two steps with a constant gradient move about 2 lr") {
  Tensor<float> p(Shape(1, 1, 1, 1, 1), 0.0f);
  Tensor<float>* params[] = {&p};
  AdamState state(AdamConfig{}, params);
  AdamOracle oracle{1e-5};
  double theta = 0.0, previous = 0.0;
  for (int i = 0; i < 2; ++i) {
    p.grad()[0] = 0.5f;
    adam_step(params, state);
    theta = oracle.step(theta, 0.5);
    CHECK(p[0] == doctest::Approx(theta).epsilon(1e-6));
    CHECK(p[0] < previous);
    CHECK(previous - p[0] <= 1e-5 * (1 + 1e-6));
    previous = p[0];
  }
  CHECK(std::abs(p[0]) == doctest::Approx(2e-5).epsilon(1e-6));
}

TEST_CASE("adam: varying gradients follow the closed form") {
  Tensor<float> p(Shape(1, 1, 1, 1, 1), 0.25f);
  Tensor<float>* params[] = {&p};
  AdamConfig cfg;
  cfg.lr = 1e-2;
  AdamState state(cfg, params);
  AdamOracle oracle{1e-2};
  double theta = 0.25;
  const double grads[] = {0.3, -0.1, 0.7, 0.0, -1.2};
  for (double g : grads) {
    p.grad()[0] = static_cast<float>(g);
    adam_step(params, state);
    theta = oracle.step(theta, static_cast<float>(g));
    CHECK(p[0] == doctest::Approx(theta).epsilon(1e-5));
  }
}

TEST_CASE("adam: state must match the parameters") {
  Tensor<float> a(Shape(1, 1, 1, 1, 2)), b(Shape(1, 1, 1, 1, 3));
  Tensor<float>* one[] = {&a};
  Tensor<float>* two[] = {&a, &b};
  AdamState state(AdamConfig{}, one);
  CHECK_THROWS_AS(adam_step(two, state), StateError);
  Tensor<float>* wrong_size[] = {&b};
  CHECK_THROWS_AS(adam_step(wrong_size, state), StateError);
}

TEST_CASE("early stopping rule") {
  EarlyStopping rule(5);
  const double trace[] = {5, 4, 3, 3.1, 3.2, 3.3, 3.4};
  for (double v : trace) CHECK_FALSE(rule.observe(v));
  CHECK(rule.consecutive_increases() == 4);
  CHECK(rule.observe(3.5));

  EarlyStopping flat(2);
  CHECK_FALSE(flat.observe(1.0));
  CHECK_FALSE(flat.observe(2.0));
  CHECK_FALSE(flat.observe(2.0));  // equal is not an increase
  CHECK(flat.consecutive_increases() == 0);
}

TEST_CASE("training loop stops after five increases and restores the best epoch") {
  const TrainResult r = run_trace({5, 4, 3, 3.1, 3.2, 3.3, 3.4, 3.5, 0.1, 0.1}, 100);
  CHECK(r.history.size() == 8);
  CHECK(r.stopped_early);
  CHECK(r.best_epoch == 3);
  CHECK(r.best_val_loss == 3.0);
  CHECK(r.model.layers()[0].params.weight[0] == 3.0f);
}

TEST_CASE("strictly decreasing validation loss runs to max_epochs") {
  std::vector<double> losses;
  for (int i = 0; i < 12; ++i) losses.push_back(10.0 - i);
  const TrainResult r = run_trace(losses, 12);
  CHECK(r.history.size() == 12);
  CHECK_FALSE(r.stopped_early);
  CHECK(r.best_epoch == 12);
  CHECK(r.model.layers()[0].params.weight[0] == 12.0f);
}

TEST_CASE("alternating validation loss never stops early") {
  std::vector<double> losses;
  for (int i = 0; i < 40; ++i) losses.push_back(i % 2 ? 3.1 : 3.0);
  const TrainResult r = run_trace(losses, 40);
  CHECK(r.history.size() == 40);
  CHECK_FALSE(r.stopped_early);
  CHECK(r.best_epoch == 1);
}

TEST_CASE("training loop rejects bad policies and non-finite losses") {
  Model<float> model = tiny_model();
  auto fine = [](std::size_t e) { return EpochRecord{e, 1.0, 1.0}; };
  TrainPolicy p;
  p.max_epochs = 0;
  CHECK_THROWS_AS(run_training_loop(model, p, fine), ConfigError);
  p = {};
  p.patience = 0;
  CHECK_THROWS_AS(run_training_loop(model, p, fine), ConfigError);
  p = {};
  p.batch_size = 2;
  CHECK_THROWS_AS(run_training_loop(model, p, fine), ConfigError);
  p = {};
  CHECK_THROWS_AS(run_training_loop(model, p,
                                    [](std::size_t e) {
                                      return EpochRecord{e, 1.0, e == 3 ? std::nan("") : 1.0};
                                    }),
                  NumericError);
}

TEST_CASE("train steps reduce the loss on a single sample") {
  Model<float> model = tiny_model(3);
  const Sample s = blob_sample("a", 1);
  AdamConfig cfg;
  cfg.lr = 1e-2;
  AdamState state(cfg, model.parameters());
  const double first = train_step(model, state, s);
  CHECK(first == doctest::Approx(mean_loss(model, std::span(&s, 1))).epsilon(0.2));
  double last = first;
  for (int i = 0; i < 30; ++i) last = train_step(model, state, s);
  CHECK(last < 0.5 * first);
  for (const Tensor<float>* p : model.parameters()) {
    for (float g : p->grad()) CHECK(g == 0.0f);
  }
}

TEST_CASE("train is deterministic and validates its inputs") {
  const std::vector<Sample> train_set{blob_sample("a", 1), blob_sample("b", 2), blob_sample("c", 3)};
  const std::vector<Sample> val_set{blob_sample("v", 4)};
  TrainPolicy policy;
  policy.max_epochs = 4;
  AdamConfig adam;
  adam.lr = 1e-3;
  const TrainResult a = train(tiny_model(), train_set, val_set, policy, adam, 7);
  const TrainResult b = train(tiny_model(), train_set, val_set, policy, adam, 7);
  REQUIRE(a.history.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(a.history[i].epoch == i + 1);
    CHECK(a.history[i].train_loss == b.history[i].train_loss);
    CHECK(a.history[i].val_loss == b.history[i].val_loss);
  }
  CHECK(format_epoch_log(a.history) == format_epoch_log(b.history));
  CHECK(format_epoch_log(a.history).rfind("epoch\ttrain_loss\tval_loss\n", 0) == 0);

  CHECK_THROWS_AS(train(tiny_model(), {}, val_set, policy, adam, 7), ConfigError);
  CHECK_THROWS_AS(train(tiny_model(), train_set, {}, policy, adam, 7), ConfigError);
}

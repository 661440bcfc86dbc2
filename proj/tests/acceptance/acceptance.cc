// Acceptance gate: one PASS/FAIL line per criterion. Pass criterion numbers as
// arguments to run a subset.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ratlesnet/cli.h"
#include "ratlesnet/dataset.h"
#include "ratlesnet/eval.h"
#include "ratlesnet/grad_check.h"
#include "ratlesnet/io.h"
#include "ratlesnet/metrics.h"
#include "ratlesnet/model.h"
#include "ratlesnet/nifti.h"
#include "ratlesnet/ops.h"
#include "ratlesnet/train.h"
#include "support/reference.h"

using namespace ratlesnet;
using testing_support::max_rel_error;
using testing_support::naive_conv3d;
using testing_support::random_tensor;
using testing_support::TempDir;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
  void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// 1 -------------------------------------------------------------------------

Outcome gradient_correctness() {
  Outcome o;
  const auto t0 = Clock::now();
  struct Case {
    std::string label;
    std::string op;
    std::vector<Shape> shapes;
  };
  const std::vector<Case> cases = {
      {"conv3d k=3", "conv3d", {Shape(1, 2, 4, 3, 4), Shape(3, 2, 3, 3, 3), Shape(1, 3, 1, 1, 1)}},
      {"conv3d k=1", "conv3d", {Shape(2, 3, 3, 4, 3), Shape(2, 3, 1, 1, 1), Shape(1, 2, 1, 1, 1)}},
      {"relu", "relu", {Shape(1, 3, 3, 3, 3)}},
      {"concat_channels", "concat_channels", {Shape(1, 1, 3, 2, 3), Shape(1, 2, 3, 2, 3)}},
      {"maxpool3d", "maxpool3d", {Shape(1, 2, 5, 4, 5)}},
      {"unpool3d", "unpool3d", {Shape(1, 2, 4, 4, 5)}},
      {"softmax_cross_entropy", "softmax_cross_entropy", {Shape(1, 2, 3, 3, 3)}},
  };
  double worst_op = 0.0;
  for (const Case& c : cases) {
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      worst = std::max(worst, grad_check(c.op, c.shapes, seed));
    }
    o.require(worst < 1e-4, c.label + " " + fmt("%.2e", worst));
    worst_op = std::max(worst_op, worst);
  }

  // Tiny full model: growth 2, two levels, odd depth through both pools.
  ModelConfig cfg;
  cfg.growth_rate = 2;
  double worst_e2e = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    cfg.seed = seed;
    const Model<double> model = build_model<float>(cfg).cast<double>();
    GradCheckCase c;
    for (const Tensor<double>* p : model.parameters()) c.inputs.push_back(*p);
    for (std::size_t i = 1; i < c.inputs.size(); i += 2) {
      c.inputs[i] = random_tensor<double>(c.inputs[i].shape(), 100 * seed + i, -0.1, 0.1);
    }
    const Tensor<double> x = random_tensor<double>(Shape(1, 1, 6, 6, 5), 1000 + seed);
    std::mt19937_64 rng(seed);
    std::vector<std::uint8_t> labels(x.numel());
    for (auto& l : labels) l = rng() % 4 == 0;
    c.build = [&](Graph<double>& g, std::span<const NodeId> params) {
      return softmax_cross_entropy(g, model.forward(g, g.constant(x), params), labels);
    };
    worst_e2e = std::max(worst_e2e, grad_check(c, seed));
  }
  o.require(worst_e2e < 1e-3, "end-to-end " + fmt("%.2e", worst_e2e));
  const double secs = seconds_since(t0);
  o.require(secs < 120.0, "runtime over 2 min");
  o.note("ops max " + fmt("%.2e", worst_op) + ", end-to-end max " + fmt("%.2e", worst_e2e) +
         ", " + fmt("%.1f s", secs));
  return o;
}

// 2 -------------------------------------------------------------------------

Outcome conv_oracle() {
  Outcome o;
  std::mt19937_64 rng(2024);
  double worst_f = 0.0, worst_d = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    auto pick = [&](std::size_t hi) { return 1 + rng() % hi; };
    // trial 0 is the largest allowed shape
    const Shape xs = trial == 0 ? Shape(2, 3, 8, 8, 8)
                                : Shape(pick(2), pick(3), pick(8), pick(8), pick(8));
    const std::size_t k = trial % 3 == 2 ? 1 : 3;
    const std::size_t out = pick(4);
    const auto x = random_tensor<float>(xs, 10 + trial);
    const auto w = random_tensor<float>(Shape(out, xs.channels(), k, k, k), 50 + trial);
    const auto b = random_tensor<float>(Shape(1, out, 1, 1, 1), 90 + trial);
    const Tensor<double> ref = naive_conv3d(x, w, b);
    const Tensor<float> y = kernels::conv3d(x, w, b);
    if (y.shape() != ref.shape()) {
      o.require(false, "shape mismatch on " + xs.to_string());
      continue;
    }
    double scale = 0.0;
    for (double v : ref.data()) scale = std::max(scale, std::abs(v));
    worst_f = std::max(worst_f, max_rel_error(y.data(), ref.data(), scale));
    const Tensor<double> yd = kernels::conv3d(x.cast<double>(), w.cast<double>(), b.cast<double>());
    worst_d = std::max(worst_d, max_rel_error(yd.data(), ref.data(), 1e-12));
  }
  o.require(worst_f < 1e-5, "float32 " + fmt("%.2e", worst_f));
  o.require(worst_d < 1e-5, "float64 " + fmt("%.2e", worst_d));
  o.note("20 shapes, float32 rel to max output " + fmt("%.2e", worst_f) +
         ", float64 per element " + fmt("%.2e", worst_d));
  return o;
}

// 3 -------------------------------------------------------------------------

Outcome parameter_accounting() {
  Outcome o;
  const std::size_t n = param_count(build_model<float>(ModelConfig{}));
  o.require(n == 270980, "count " + std::to_string(n) + " != 270980");
  o.require(n >= 200000 && n <= 500000, "outside [0.2M, 0.5M]");
  o.note("param_count " + std::to_string(n));
  return o;
}

// 4 -------------------------------------------------------------------------

Outcome shape_contract() {
  Outcome o;
  const Model<float> model = build_model<float>(ModelConfig{});
  const Tensor<float> x = random_tensor<float>(Shape(1, 1, 256, 256, 18), 4);
  const auto t0 = Clock::now();
  const Tensor<float> y = model.infer(x);
  const double secs = seconds_since(t0);
  o.require(y.shape() == Shape(1, 2, 256, 256, 18), "output " + y.shape().to_string());
  o.require(secs < 60.0, "forward took over 60 s");
  o.note("output " + y.shape().to_string() + ", " + fmt("%.1f s", secs));
  return o;
}

// 5 -------------------------------------------------------------------------

Outcome overfit() {
  Outcome o;
  const auto t0 = Clock::now();
  PhantomConfig pc;  // 64 x 64 x 18
  std::vector<Sample> samples;
  const TimePoint tps[] = {TimePoint::k2h, TimePoint::k24h, TimePoint::k2h, TimePoint::k24h};
  for (int i = 0; i < 4; ++i) {
    const std::string id = "overfit_" + std::to_string(i);
    const Phantom p = generate_phantom(pc, tps[i], false, id);
    samples.push_back({id, to_tensor(standardize(p.volume)), p.mask.values, p.volume.voxel_size});
  }
  Model<float> model = build_model<float>(ModelConfig{});
  AdamConfig adam;
  adam.lr = 1e-3;
  AdamState state(adam, model.parameters());
  std::mt19937_64 rng(5);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);

  auto mean_dice = [&] {
    double s = 0.0;
    for (const Sample& smp : samples) {
      const Mask pred = argmax_mask(model.infer(smp.input), pc.shape, smp.voxel_size);
      s += dice(pred.values, smp.labels);
    }
    return s / samples.size();
  };
  double best = 0.0;
  std::size_t epoch = 0;
  while (epoch < 300 && best < 0.95) {
    ++epoch;
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i : order) train_step(model, state, samples[i]);
    if (epoch % 5 == 0) {
      best = mean_dice();
      std::cerr << "  overfit epoch " << epoch << " dice " << best << std::endl;
    }
  }
  const double secs = seconds_since(t0);
  o.require(best >= 0.95, "training Dice " + fmt("%.4f", best));
  o.require(secs < 600.0, "runtime over 10 min");
  o.note("training Dice " + fmt("%.4f", best) + " after " + std::to_string(epoch) + " epochs, " +
         fmt("%.0f s", secs));
  return o;
}

// 6 -------------------------------------------------------------------------

Outcome crossval_phantoms() {
  Outcome o;
  const auto t0 = Clock::now();
  TempDir dir("accept_cv");
  PhantomConfig pc;
  pc.shape = {32, 32, 16};
  const Manifest m = generate_phantom_study(pc, 48, dir.path(), "02NOV2016");
  std::size_t shams = 0, early = 0, late = 0;
  for (const ScanRecord& r : m.records) {
    if (r.sham) ++shams;
    else if (r.time_point == TimePoint::k2h) ++early;
    else if (r.time_point == TimePoint::k24h) ++late;
  }
  o.require(shams == 24 && early == 12 && late == 12, "composition");

  ModelConfig mc;
  TrainConfig tc;
  tc.adam.lr = 1e-3;
  tc.policy.max_epochs = 40;
  const CrossvalResult r = crossval(m, 5, mc, tc, 0, GroupBy::kTimePoint,
                                    [](const std::string& s) { std::cerr << "  " << s << std::endl; });
  std::cerr << format_report_text(r.report);
  const double without = r.report.row("Average", false).mean.value_or(0.0);
  const double with = r.report.row("Average", true).mean.value_or(0.0);
  const double secs = seconds_since(t0);
  o.require(without >= 0.7, "Dice without shams " + fmt("%.4f", without));
  o.require(with > without, "Dice with shams not above without");
  o.require(secs < 7200.0, "runtime over 2 h");
  o.note("32x32x16 phantoms, Dice without shams " + fmt("%.4f", without) + ", with shams " +
         fmt("%.4f", with) + ", " + fmt("%.0f s", secs));
  return o;
}

// 7 -------------------------------------------------------------------------

Outcome stopping_trace() {
  Outcome o;
  const std::vector<double> val = {5, 4, 3, 3.1, 3.2, 3.3, 3.4, 3.5, 3.6, 3.7};
  ModelConfig cfg;
  cfg.growth_rate = 1;
  cfg.levels = 1;
  Model<float> model = build_model<float>(cfg);
  TrainPolicy policy;
  policy.max_epochs = val.size();
  // Each epoch stamps its number into the first weight so the restored
  // snapshot identifies itself.
  const TrainResult r = run_training_loop(model, policy, [&](std::size_t epoch) {
    model.layers()[0].params.weight[0] = static_cast<float>(epoch);
    return EpochRecord{epoch, 0.0, val[epoch - 1]};
  });
  const float restored = r.model.layers()[0].params.weight[0];
  o.require(r.history.size() == 8, "ran " + std::to_string(r.history.size()) + " epochs");
  o.require(r.stopped_early, "did not stop early");
  o.require(r.best_epoch == 3, "best epoch " + std::to_string(r.best_epoch));
  o.require(restored == 3.0f, "restored snapshot from epoch " + fmt("%.0f", restored));
  o.note("stopped after " + std::to_string(r.history.size()) + " epochs, restored epoch " +
         fmt("%.0f", restored));
  return o;
}

// 8 -------------------------------------------------------------------------

template <typename U>
void put_bytes(std::vector<std::uint8_t>& b, std::size_t off, U v, bool little) {
  std::array<std::uint8_t, sizeof(U)> raw;
  std::memcpy(raw.data(), &v, sizeof(U));
  if (little != (std::endian::native == std::endian::little)) std::reverse(raw.begin(), raw.end());
  if (b.size() < off + sizeof(U)) b.resize(off + sizeof(U), 0);
  std::memcpy(b.data() + off, raw.data(), sizeof(U));
}

// The header the writer must produce, assembled field by field.
std::vector<std::uint8_t> expected_header(std::array<std::int16_t, 3> dims,
                                          std::array<float, 3> spacing, std::int16_t datatype,
                                          std::int16_t bitpix) {
  std::vector<std::uint8_t> h(352, 0);
  put_bytes<std::int32_t>(h, 0, 348, true);
  const std::int16_t dim[8] = {3, dims[0], dims[1], dims[2], 1, 1, 1, 1};
  for (int i = 0; i < 8; ++i) put_bytes(h, 40 + 2 * i, dim[i], true);
  put_bytes(h, 70, datatype, true);
  put_bytes(h, 72, bitpix, true);
  const float pixdim[8] = {1.0f, spacing[0], spacing[1], spacing[2], 0, 0, 0, 0};
  for (int i = 0; i < 8; ++i) put_bytes(h, 76 + 4 * i, pixdim[i], true);
  put_bytes(h, 108, 352.0f, true);
  put_bytes(h, 112, 1.0f, true);
  put_bytes(h, 116, 0.0f, true);
  h[123] = 2;  // xyzt_units mm
  std::memcpy(h.data() + 344, "n+1\0", 4);
  return h;
}

std::vector<std::uint8_t> byte_order_fixture(bool little) {
  std::vector<std::uint8_t> b(352, 0);
  put_bytes<std::int32_t>(b, 0, 348, little);
  const std::int16_t dim[8] = {3, 5, 4, 3, 1, 1, 1, 1};
  for (int i = 0; i < 8; ++i) put_bytes(b, 40 + 2 * i, dim[i], little);
  put_bytes<std::int16_t>(b, 70, 16, little);
  put_bytes<std::int16_t>(b, 72, 32, little);
  const float pixdim[8] = {1, 0.1172f, 0.1172f, 1.0f, 1, 1, 1, 1};
  for (int i = 0; i < 8; ++i) put_bytes(b, 76 + 4 * i, pixdim[i], little);
  put_bytes(b, 108, 352.0f, little);
  put_bytes(b, 112, 1.0f, little);
  std::memcpy(b.data() + 344, "n+1\0", 4);
  for (int i = 0; i < 60; ++i) put_bytes(b, b.size(), 0.5f * i - 7.25f, little);
  return b;
}

Outcome nifti_roundtrip() {
  Outcome o;
  Volume v({9, 7, 5}, {0.1172, 0.1172, 1.0});
  std::mt19937 rng(8);
  std::normal_distribution<float> n(0.0f, 50.0f);
  for (float& x : v.values) x = n(rng);
  v.values[1] = -0.0f;
  v.values[2] = std::numeric_limits<float>::denorm_min();
  v.values[3] = std::numeric_limits<float>::max();
  const auto vb = write_nifti(v);
  const Volume vback = read_volume(vb);
  o.require(vback.shape == v.shape &&
                std::memcmp(vback.values.data(), v.values.data(), v.values.size() * 4) == 0,
            "float32 roundtrip not bit-exact");

  Mask m({6, 5, 4}, {1, 1, 1});
  for (std::size_t i = 0; i < m.values.size(); ++i) m.values[i] = (i * 7) % 3 == 0;
  const auto mb = write_nifti(m);
  o.require(read_mask(mb) == m, "uint8 mask roundtrip differs");

  const auto le = byte_order_fixture(true);
  const auto be = byte_order_fixture(false);
  const Volume vle = read_volume(le), vbe = read_volume(be);
  o.require(le != be && vle == vbe, "byte orders disagree");
  o.require(vle.values[59] == 22.25f && vle.shape == Extent3{5, 4, 3}, "fixture values");

  const float sx = static_cast<float>(v.voxel_size[0]);
  const auto hv = expected_header({9, 7, 5}, {sx, sx, 1.0f}, 16, 32);
  o.require(vb.size() == 352 + v.values.size() * 4 && std::equal(hv.begin(), hv.end(), vb.begin()),
            "volume header bytes differ");
  const auto hm = expected_header({6, 5, 4}, {1, 1, 1}, 2, 8);
  o.require(mb.size() == 352 + m.values.size() && std::equal(hm.begin(), hm.end(), mb.begin()),
            "mask header bytes differ");
  o.note("float32 and uint8 roundtrips exact, LE and BE fixtures equal, 352 header bytes match");
  return o;
}

// 9 -------------------------------------------------------------------------

Mask bits(std::initializer_list<int> v) {
  Mask m({v.size(), 1, 1}, {1, 1, 1});
  std::size_t i = 0;
  for (int b : v) m.values[i++] = static_cast<std::uint8_t>(b);
  return m;
}

Outcome dice_suite() {
  Outcome o;
  const Mask a = bits({0, 1, 1, 0, 1, 1, 0});
  o.require(dice(a, a) == 1.0, "identity");
  o.require(dice(bits({1, 1, 0, 0}), bits({0, 0, 1, 1})) == 0.0, "disjoint");
  // |A| = 4, |B| = 6, |A n B| = 3: 2 * 3 / 10
  const double d = dice(bits({1, 1, 1, 1, 0, 0, 0, 0}), bits({0, 1, 1, 1, 1, 1, 1, 0}));
  o.require(std::abs(d - 0.6) < 1e-12, "(4,6,3) gave " + fmt("%.6f", d));
  o.require(dice(bits({0, 0, 0}), bits({0, 0, 0})) == 1.0, "empty-empty");
  std::mt19937_64 rng(99);
  int asym = 0;
  for (int i = 0; i < 100; ++i) {
    const std::size_t n = 1 + rng() % 500;
    std::bernoulli_distribution pa((rng() % 101) / 100.0), pb((rng() % 101) / 100.0);
    Mask x({n, 1, 1}, {1, 1, 1}), y({n, 1, 1}, {1, 1, 1});
    for (std::size_t j = 0; j < n; ++j) {
      x.values[j] = pa(rng);
      y.values[j] = pb(rng);
    }
    if (dice(x, y) != dice(y, x)) ++asym;
  }
  o.require(asym == 0, std::to_string(asym) + " asymmetric pairs");
  o.note("5 cases exact, 100 random pairs symmetric");
  return o;
}

// 10 ------------------------------------------------------------------------

int cli(std::vector<std::string> args, std::string* err = nullptr) {
  std::ostringstream out, e;
  const int code = run_cli(args, out, e);
  if (err) *err = e.str();
  return code;
}

std::vector<std::uint8_t> bytes_of(const std::filesystem::path& p) { return io::read_file(p); }

Outcome determinism() {
  Outcome o;
  TempDir dir("accept_det");
  io::write_text(dir / "run.cfg",
                 "phantom_shape = 16,16,8\n"
                 "growth_rate = 4\n"
                 "lr = 1e-3\n"
                 "max_epochs = 3\n"
                 "k = 3\n");
  const std::string cfg = (dir / "run.cfg").string();
  std::string err;
  if (cli({"generate", "--config", cfg, "--out", (dir / "data").string(), "--n", "12", "-q"},
          &err) != 0) {
    o.require(false, "generate failed: " + err);
    return o;
  }
  const std::string manifest = (dir / "data" / "manifest.tsv").string();
  for (const char* run : {"a", "b"}) {
    if (cli({"crossval", "--config", cfg, "--manifest", manifest, "--out", (dir / run).string(),
             "--threads", "1", "-q"},
            &err) != 0) {
      o.require(false, std::string("crossval run ") + run + " failed: " + err);
      return o;
    }
  }
  std::size_t compared = 0;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir / "a")) {
    if (!entry.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(entry.path(), dir / "a");
    const auto other = dir / "b" / rel;
    const bool same = std::filesystem::exists(other) && bytes_of(entry.path()) == bytes_of(other);
    o.require(same, rel.string() + " differs");
    ++compared;
  }
  for (const char* f : {"report.txt", "report.csv", "fold_0/model.rlnet", "fold_2/model.rlnet"}) {
    o.require(std::filesystem::exists(dir / "a" / f), std::string(f) + " missing");
  }
  o.note(std::to_string(compared) + " artifacts byte-identical across two runs");
  return o;
}

struct Criterion {
  int number;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "gradient correctness", gradient_correctness},
      {2, "convolution oracle", conv_oracle},
      {3, "parameter accounting", parameter_accounting},
      {4, "shape contract 256x256x18", shape_contract},
      {5, "overfit sanity", overfit},
      {6, "phantom cross-validation", crossval_phantoms},
      {7, "stopping-rule trace", stopping_trace},
      {8, "NIfTI roundtrip", nifti_roundtrip},
      {9, "Dice suite", dice_suite},
      {10, "determinism", determinism},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const Criterion& c : all) {
    if (!wanted.empty() && !wanted.count(c.number)) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << c.number << ". " << c.name << ": "
              << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}

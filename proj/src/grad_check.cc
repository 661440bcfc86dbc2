#include "ratlesnet/grad_check.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "ratlesnet/ops.h"

namespace ratlesnet {

namespace {

using Rng = std::mt19937_64;

Tensor<double> normal_tensor(const Shape& s, Rng& rng, double reject_below = 0.0) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Tensor<double> t(s);
  for (double& v : t.data()) {
    do {
      v = dist(rng);
    } while (std::abs(v) < reject_below);
  }
  return t;
}

// All values distinct and at least 0.08 apart, so no max-pool window is
// anywhere near a tie.
Tensor<double> distinct_tensor(const Shape& s, Rng& rng) {
  std::vector<std::size_t> order(s.numel());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::uniform_real_distribution<double> jitter(-0.01, 0.01);
  Tensor<double> t(s);
  for (std::size_t i = 0; i < order.size(); ++i) {
    t[i] = 0.1 * static_cast<double>(order[i]) - 0.05 * static_cast<double>(order.size()) +
           jitter(rng);
  }
  return t;
}

void expect_inputs(const std::string& op, std::span<const Shape> shapes, std::size_t n) {
  if (shapes.size() != n) {
    throw ContractError("grad_check " + op + ": expected " + std::to_string(n) +
                        " input shapes, got " + std::to_string(shapes.size()));
  }
}

using Factory = std::function<GradCheckCase(std::span<const Shape>, Rng&)>;

const std::map<std::string, Factory>& registry() {
  static const std::map<std::string, Factory> ops = {
      {"conv3d",
       [](std::span<const Shape> shapes, Rng& rng) {
         expect_inputs("conv3d", shapes, 3);
         GradCheckCase c;
         for (const Shape& s : shapes) c.inputs.push_back(normal_tensor(s, rng));
         c.build = [](Graph<double>& g, std::span<const NodeId> in) {
           return conv3d(g, in[0], in[1], in[2]);
         };
         return c;
       }},
      {"relu",
       [](std::span<const Shape> shapes, Rng& rng) {
         expect_inputs("relu", shapes, 1);
         GradCheckCase c;
         c.inputs.push_back(normal_tensor(shapes[0], rng, 1e-2));
         c.build = [](Graph<double>& g, std::span<const NodeId> in) { return relu(g, in[0]); };
         return c;
       }},
      {"concat_channels",
       [](std::span<const Shape> shapes, Rng& rng) {
         if (shapes.empty()) throw ContractError("grad_check concat_channels: no inputs");
         GradCheckCase c;
         for (const Shape& s : shapes) c.inputs.push_back(normal_tensor(s, rng));
         c.build = [](Graph<double>& g, std::span<const NodeId> in) {
           return concat_channels(g, in);
         };
         return c;
       }},
      {"maxpool3d",
       [](std::span<const Shape> shapes, Rng& rng) {
         expect_inputs("maxpool3d", shapes, 1);
         GradCheckCase c;
         c.inputs.push_back(distinct_tensor(shapes[0], rng));
         c.build = [](Graph<double>& g, std::span<const NodeId> in) {
           return maxpool3d(g, in[0]).output;
         };
         return c;
       }},
      {"unpool3d",
       // The shape is that of the pooling input; the checked input is the
       // pooled tensor, scattered with indices from a fixed random source.
       [](std::span<const Shape> shapes, Rng& rng) {
         expect_inputs("unpool3d", shapes, 1);
         auto ctx = std::make_shared<const PoolContext>(
             kernels::maxpool3d(distinct_tensor(shapes[0], rng)).second);
         GradCheckCase c;
         c.inputs.push_back(normal_tensor(ctx->output_shape, rng));
         c.build = [ctx](Graph<double>& g, std::span<const NodeId> in) {
           return unpool3d(g, in[0], ctx);
         };
         return c;
       }},
      {"softmax_cross_entropy",
       [](std::span<const Shape> shapes, Rng& rng) {
         expect_inputs("softmax_cross_entropy", shapes, 1);
         const Shape& s = shapes[0];
         std::vector<std::uint8_t> labels(s.batch() * s.spatial_size());
         std::uniform_int_distribution<int> pick(0, static_cast<int>(s.channels()) - 1);
         for (auto& l : labels) l = static_cast<std::uint8_t>(pick(rng));
         GradCheckCase c;
         c.inputs.push_back(normal_tensor(s, rng));
         c.build = [labels](Graph<double>& g, std::span<const NodeId> in) {
           return softmax_cross_entropy(g, in[0], labels);
         };
         return c;
       }},
      {"sum",
       [](std::span<const Shape> shapes, Rng& rng) {
         expect_inputs("sum", shapes, 1);
         GradCheckCase c;
         c.inputs.push_back(normal_tensor(shapes[0], rng));
         c.build = [](Graph<double>& g, std::span<const NodeId> in) { return sum(g, in[0]); };
         return c;
       }},
  };
  return ops;
}

// Builds the graph and reduces the output to a scalar loss node.
NodeId build_loss(Graph<double>& g, const GradCheckCase& c, std::vector<Tensor<double>>& inputs,
                  const Tensor<double>* reduce_weights, std::vector<NodeId>* leaves) {
  std::vector<NodeId> ids;
  for (auto& t : inputs) ids.push_back(g.leaf(t));
  NodeId out = c.build(g, ids);
  if (leaves) *leaves = ids;
  if (g.value(out).shape().is_scalar()) return out;
  return weighted_sum(g, out, *reduce_weights);
}

// Which linear piece the graph evaluated on: the sign of every ReLU input and
// the winning voxel of every max-pool window.
std::vector<std::uint8_t> branch_signature(const Graph<double>& g) {
  std::vector<std::uint8_t> sig;
  for (NodeId id = 0; id < g.size(); ++id) {
    const std::string& kind = g.kind(id);
    if (kind == "relu") {
      for (double v : g.value(g.inputs(id)[0]).data()) sig.push_back(v > 0.0);
    } else if (kind == "maxpool3d") {
      const Tensor<double>& in = g.value(g.inputs(id)[0]);
      const Tensor<double>& out = g.value(id);
      const Shape& os = out.shape();
      for (std::size_t n = 0; n < os.batch(); ++n)
        for (std::size_t c = 0; c < os.channels(); ++c)
          for (std::size_t x = 0; x < os.x(); ++x)
            for (std::size_t y = 0; y < os.y(); ++y)
              for (std::size_t z = 0; z < os.z(); ++z) {
                std::uint8_t k = 0, winner = 0;
                for (std::size_t a = 0; a < 2; ++a)
                  for (std::size_t b = 0; b < 2; ++b)
                    for (std::size_t d = 0; d < 2; ++d, ++k) {
                      if (in.at(n, c, 2 * x + a, 2 * y + b, 2 * z + d) == out.at(n, c, x, y, z)) {
                        winner = k;
                      }
                    }
                sig.push_back(winner);
              }
    }
  }
  return sig;
}

}  // namespace

GradCheckCase make_grad_check_case(const std::string& op, std::span<const Shape> input_shapes,
                                   std::uint64_t seed) {
  const auto& ops = registry();
  auto it = ops.find(op);
  if (it == ops.end()) throw UnsupportedOpError("grad_check: no registered backward for " + op);
  Rng rng(seed);
  return it->second(input_shapes, rng);
}

std::vector<std::string> grad_check_ops() {
  std::vector<std::string> names;
  for (const auto& [name, _] : registry()) names.push_back(name);
  return names;
}

double grad_check(const GradCheckCase& c, std::uint64_t seed, const GradCheckOptions& opt) {
  std::vector<Tensor<double>> inputs = c.inputs;
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.clear_grad();
  }

  // Analytic pass; also sizes the reduction weights.
  Tensor<double> weights;
  std::vector<NodeId> leaves;
  std::vector<std::uint8_t> base_branch;
  {
    Graph<double> g;
    std::vector<NodeId> ids;
    for (auto& t : inputs) ids.push_back(g.leaf(t));
    NodeId out = c.build(g, ids);
    for (NodeId id = 0; id < g.size(); ++id) {
      if (g.kind(id) != "leaf" && g.kind(id) != "constant" && !g.has_backward(id)) {
        throw UnsupportedOpError("grad_check: op " + g.kind(id) + " has no backward");
      }
    }
    NodeId loss = out;
    if (!g.value(out).shape().is_scalar()) {
      Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
      std::uniform_real_distribution<double> dist(0.5, 1.5);
      weights = Tensor<double>(g.value(out).shape());
      for (double& w : weights.data()) w = dist(rng);
      loss = weighted_sum(g, out, weights);
    }
    g.backward(loss);
    base_branch = branch_signature(g);
  }

  struct Eval {
    double loss;
    bool same_branch;
  };
  auto evaluate = [&]() {
    Graph<double> g;
    NodeId loss = build_loss(g, c, inputs, &weights, nullptr);
    return Eval{g.value(loss)[0], branch_signature(g) == base_branch};
  };

  double worst = 0.0;
  for (auto& t : inputs) {
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    for (std::size_t i = 0; i < t.numel(); ++i) {
      const double saved = t[i];
      double numeric = 0.0;
      // Shrink the step while the stencil straddles a kink, then fall back to
      // the one-sided difference on the analytic point's own piece.
      double h = opt.step;
      for (int attempt = 0;; ++attempt, h *= 0.1) {
        t[i] = saved + h;
        const Eval up = evaluate();
        t[i] = saved - h;
        const Eval down = evaluate();
        t[i] = saved;
        if (up.same_branch && down.same_branch) {
          numeric = (up.loss - down.loss) / (2.0 * h);
          break;
        }
        if (attempt < opt.max_shrinks) continue;
        const double mid = evaluate().loss;
        if (up.same_branch) numeric = (up.loss - mid) / h;
        else if (down.same_branch) numeric = (mid - down.loss) / h;
        else numeric = (up.loss - down.loss) / (2.0 * h);
        break;
      }
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), opt.floor});
      worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace ratlesnet

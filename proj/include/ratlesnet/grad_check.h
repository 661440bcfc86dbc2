#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ratlesnet/autodiff.h"

namespace ratlesnet {

// A differentiable computation over a set of double-precision leaf tensors.
// build() receives one leaf node per entry of `inputs` and returns the output
// node; non-scalar outputs are reduced with a fixed random weighting.
struct GradCheckCase {
  std::vector<Tensor<double>> inputs;
  std::function<NodeId(Graph<double>&, std::span<const NodeId>)> build;
};

struct GradCheckOptions {
  double step = 1e-4;
  // Denominator floor for the relative error, so coordinates whose true
  // gradient is zero are compared absolutely.
  double floor = 1e-6;
  // Times the step is divided by 10 when x+h and x-h fall on different sides
  // of a ReLU or max-pool kink.
  int max_shrinks = 2;
};

// Max over every input coordinate of |analytic - numeric| / max(|a|, |n|, floor)
// with a central difference numeric gradient, taken on the same linear piece
// as the analytic point (ReLU signs and max-pool winners unchanged). Throws UnsupportedOpError if the
// graph contains an op recorded without a backward function.
double grad_check(const GradCheckCase& c, std::uint64_t seed, const GradCheckOptions& opt = {});

// Builds a case for a registered op. Names: conv3d, relu, concat_channels,
// maxpool3d, unpool3d, softmax_cross_entropy, sum. Inputs are sampled away
// from kinks and ties. Unknown names throw UnsupportedOpError.
GradCheckCase make_grad_check_case(const std::string& op, std::span<const Shape> input_shapes,
                                   std::uint64_t seed);

inline double grad_check(const std::string& op, std::span<const Shape> input_shapes,
                         std::uint64_t seed, const GradCheckOptions& opt = {}) {
  return grad_check(make_grad_check_case(op, input_shapes, seed), seed, opt);
}

std::vector<std::string> grad_check_ops();

}  // namespace ratlesnet

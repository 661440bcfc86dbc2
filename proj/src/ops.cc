#include "ratlesnet/ops.h"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

#include "ratlesnet/parallel.h"

namespace ratlesnet {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ColMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;
using Strided = Eigen::OuterStride<>;

// Target number of voxels per GEMM chunk. Chunks are whole z-lines so the
// patch matrix can be filled with contiguous copies.
constexpr std::size_t kChunkVoxels = 192;

struct Spatial {
  std::size_t x, y, z;
  std::size_t size() const { return x * y * z; }
};

struct ChunkPlan {
  std::size_t lines_per_chunk;
  std::size_t num_chunks;
  std::size_t total_lines;

  explicit ChunkPlan(const Spatial& s)
      : lines_per_chunk(std::max<std::size_t>(1, kChunkVoxels / s.z)),
        num_chunks((s.x * s.y + lines_per_chunk - 1) / lines_per_chunk),
        total_lines(s.x * s.y) {}

  std::size_t first_line(std::size_t chunk) const { return chunk * lines_per_chunk; }
  std::size_t line_count(std::size_t chunk) const {
    return std::min(lines_per_chunk, total_lines - first_line(chunk));
  }
};

template <typename T>
std::vector<T>& scratch() {
  thread_local std::vector<T> buffer;
  return buffer;
}

// Patch matrix for a 3x3x3 zero-padded window, stored (channels*27) x n
// row-major, where n = line_count * z. Row index is ((c*3 + dx)*3 + dy)*3 + dz
// to match the weight layout.
template <typename T>
void im2col3(const T* in, std::size_t channels, const Spatial& s, std::size_t line0,
             std::size_t lines, T* col) {
  const std::size_t n = lines * s.z;
  const std::size_t z = s.z;
  for (std::size_t c = 0; c < channels; ++c) {
    const T* plane = in + c * s.size();
    for (std::size_t dx = 0; dx < 3; ++dx) {
      for (std::size_t dy = 0; dy < 3; ++dy) {
        T* rows = col + (((c * 3 + dx) * 3 + dy) * 3) * n;
        for (std::size_t l = 0; l < lines; ++l) {
          const std::size_t line = line0 + l;
          const std::size_t vx = line / s.y;
          const std::size_t vy = line % s.y;
          T* r0 = rows + l * z;
          T* r1 = r0 + n;
          T* r2 = r1 + n;
          const bool inside = vx + dx >= 1 && vx + dx - 1 < s.x && vy + dy >= 1 && vy + dy - 1 < s.y;
          if (!inside) {
            std::fill(r0, r0 + z, T{0});
            std::fill(r1, r1 + z, T{0});
            std::fill(r2, r2 + z, T{0});
            continue;
          }
          const T* src = plane + ((vx + dx - 1) * s.y + (vy + dy - 1)) * z;
          r0[0] = T{0};
          std::copy(src, src + z - 1, r0 + 1);
          std::copy(src, src + z, r1);
          std::copy(src + 1, src + z, r2);
          r2[z - 1] = T{0};
        }
      }
    }
  }
}

// out (batch, cout, s) = or += conv(in (batch, cin, s), w (cout, cin, k^3)).
template <typename T>
void conv_core(const T* in, std::size_t batch, std::size_t cin, const Spatial& s, const T* w,
               std::size_t cout, std::size_t k, T* out, bool accumulate) {
  if (s.size() == 0) return;
  const ChunkPlan plan(s);
  const std::size_t voxels = s.size();
  const std::size_t patch = cin * k * k * k;
  const Eigen::Map<const ColMat<T>> wt(w, static_cast<Eigen::Index>(patch),
                                       static_cast<Eigen::Index>(cout));
  parallel_for(batch * plan.num_chunks, [&](std::size_t task) {
    const std::size_t b = task / plan.num_chunks;
    const std::size_t chunk = task % plan.num_chunks;
    const std::size_t off = plan.first_line(chunk) * s.z;
    const auto n = static_cast<Eigen::Index>(plan.line_count(chunk) * s.z);
    const T* in_b = in + b * cin * voxels;
    Eigen::Map<ColMat<T>, 0, Strided> out_t(out + b * cout * voxels + off, n,
                                           static_cast<Eigen::Index>(cout),
                                           Strided(static_cast<Eigen::Index>(voxels)));
    if (k == 1) {
      Eigen::Map<const ColMat<T>, 0, Strided> col_t(in_b + off, n, static_cast<Eigen::Index>(cin),
                                                    Strided(static_cast<Eigen::Index>(voxels)));
      if (accumulate) {
        out_t.noalias() += col_t * wt;
      } else {
        out_t.noalias() = col_t * wt;
      }
      return;
    }
    auto& col = scratch<T>();
    col.resize(patch * static_cast<std::size_t>(n));
    im2col3(in_b, cin, s, plan.first_line(chunk), plan.line_count(chunk), col.data());
    Eigen::Map<const ColMat<T>> col_t(col.data(), n, static_cast<Eigen::Index>(patch));
    if (accumulate) {
      out_t.noalias() += col_t * wt;
    } else {
      out_t.noalias() = col_t * wt;
    }
  });
}

// grad_w (cout, cin*k^3) += sum over batch and voxels of grad_out x patches.
// Per-chunk partials are reduced in chunk order, which keeps the result
// independent of the thread count.
template <typename T>
void conv_weight_grad(const T* in, std::size_t batch, std::size_t cin, const Spatial& s,
                      const T* grad_out, std::size_t cout, std::size_t k, T* grad_w) {
  if (s.size() == 0) return;
  const ChunkPlan plan(s);
  const std::size_t voxels = s.size();
  const std::size_t patch = cin * k * k * k;
  const std::size_t tasks = batch * plan.num_chunks;
  std::vector<T> partials(tasks * cout * patch);
  parallel_for(tasks, [&](std::size_t task) {
    const std::size_t b = task / plan.num_chunks;
    const std::size_t chunk = task % plan.num_chunks;
    const std::size_t off = plan.first_line(chunk) * s.z;
    const auto n = static_cast<Eigen::Index>(plan.line_count(chunk) * s.z);
    const T* in_b = in + b * cin * voxels;
    Eigen::Map<const RowMat<T>, 0, Strided> g(grad_out + b * cout * voxels + off,
                                              static_cast<Eigen::Index>(cout), n,
                                              Strided(static_cast<Eigen::Index>(voxels)));
    Eigen::Map<RowMat<T>> part(partials.data() + task * cout * patch,
                               static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(patch));
    if (k == 1) {
      Eigen::Map<const ColMat<T>, 0, Strided> col_t(in_b + off, n, static_cast<Eigen::Index>(cin),
                                                    Strided(static_cast<Eigen::Index>(voxels)));
      part.noalias() = g * col_t;
      return;
    }
    auto& col = scratch<T>();
    col.resize(patch * static_cast<std::size_t>(n));
    im2col3(in_b, cin, s, plan.first_line(chunk), plan.line_count(chunk), col.data());
    Eigen::Map<const ColMat<T>> col_t(col.data(), n, static_cast<Eigen::Index>(patch));
    part.noalias() = g * col_t;
  });
  const std::size_t len = cout * patch;
  for (std::size_t task = 0; task < tasks; ++task) {
    const T* p = partials.data() + task * len;
    for (std::size_t i = 0; i < len; ++i) grad_w[i] += p[i];
  }
}

// Weights of the adjoint convolution: swap in/out channels and mirror the
// kernel, so the input gradient is itself a forward convolution of grad_out.
template <typename T>
std::vector<T> adjoint_weights(const T* w, std::size_t cout, std::size_t cin, std::size_t k) {
  const std::size_t taps = k * k * k;
  std::vector<T> flipped(cout * cin * taps);
  for (std::size_t o = 0; o < cout; ++o) {
    for (std::size_t i = 0; i < cin; ++i) {
      for (std::size_t t = 0; t < taps; ++t) {
        flipped[(i * cout + o) * taps + (taps - 1 - t)] = w[(o * cin + i) * taps + t];
      }
    }
  }
  return flipped;
}

void check_conv_shapes(const Shape& x, const Shape& w, const Shape& b) {
  const std::size_t k = w.x();
  if ((k != 1 && k != 3) || w.y() != k || w.z() != k) {
    throw ShapeError("conv3d: weight must be (out, in, k, k, k) with k in {1,3}, got " +
                     w.to_string());
  }
  if (b != Shape(1, w.batch(), 1, 1, 1)) {
    throw ShapeError("conv3d: bias shape " + b.to_string() + " does not match weight " +
                     w.to_string());
  }
  if (x.channels() != w.channels()) {
    throw ShapeError("conv3d: input has " + std::to_string(x.channels()) +
                     " channels, weight expects " + std::to_string(w.channels()));
  }
}

Spatial spatial_of(const Shape& s) { return {s.x(), s.y(), s.z()}; }

}  // namespace

template <typename T>
ConvParams<T>::ConvParams(std::size_t out_ch, std::size_t in_ch, std::size_t kernel)
    : weight(Shape(out_ch, in_ch, kernel, kernel, kernel)), bias(Shape(1, out_ch, 1, 1, 1)) {
  if (kernel != 1 && kernel != 3) throw ShapeError("conv kernel must be 1 or 3");
}

namespace kernels {

template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  check_conv_shapes(x.shape(), weight.shape(), bias.shape());
  const Shape& xs = x.shape();
  const std::size_t cout = weight.shape().batch();
  Tensor<T> out(Shape(xs.batch(), cout, xs.x(), xs.y(), xs.z()));
  if (out.numel() == 0) return out;
  const Spatial s = spatial_of(xs);
  conv_core(x.data().data(), xs.batch(), xs.channels(), s, weight.data().data(), cout,
            weight.shape().x(), out.data().data(), false);
  const std::size_t voxels = s.size();
  for (std::size_t b = 0; b < xs.batch(); ++b) {
    for (std::size_t o = 0; o < cout; ++o) {
      T* row = out.data().data() + (b * cout + o) * voxels;
      const T bo = bias[o];
      for (std::size_t v = 0; v < voxels; ++v) row[v] += bo;
    }
  }
  return out;
}

template <typename T>
void conv3d_backward(const Tensor<T>& x, const Tensor<T>& weight, std::span<const T> grad_out,
                     std::span<T> grad_x, std::span<T> grad_weight, std::span<T> grad_bias) {
  const Shape& xs = x.shape();
  const std::size_t cout = weight.shape().batch();
  const std::size_t cin = xs.channels();
  const std::size_t k = weight.shape().x();
  const Spatial s = spatial_of(xs);
  const std::size_t voxels = s.size();
  if (!grad_bias.empty()) {
    for (std::size_t o = 0; o < cout; ++o) {
      T acc{0};
      for (std::size_t b = 0; b < xs.batch(); ++b) {
        const T* row = grad_out.data() + (b * cout + o) * voxels;
        for (std::size_t v = 0; v < voxels; ++v) acc += row[v];
      }
      grad_bias[o] += acc;
    }
  }
  if (!grad_weight.empty()) {
    conv_weight_grad(x.data().data(), xs.batch(), cin, s, grad_out.data(), cout, k,
                     grad_weight.data());
  }
  if (!grad_x.empty()) {
    const std::vector<T> adj = adjoint_weights(weight.data().data(), cout, cin, k);
    conv_core(grad_out.data(), xs.batch(), cout, s, adj.data(), cin, k, grad_x.data(), true);
  }
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  auto src = x.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] > T{0} ? src[i] : T{0};
  return out;
}

template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>* const> xs) {
  if (xs.empty()) throw ShapeError("concat_channels: no inputs");
  const Shape& first = xs.front()->shape();
  std::size_t channels = 0;
  for (const Tensor<T>* t : xs) {
    const Shape& s = t->shape();
    if (s.batch() != first.batch() || !s.same_spatial(first)) {
      throw ShapeError("concat_channels: " + s.to_string() + " incompatible with " +
                       first.to_string());
    }
    channels += s.channels();
  }
  Tensor<T> out(Shape(first.batch(), channels, first.x(), first.y(), first.z()));
  const std::size_t voxels = first.spatial_size();
  T* dst = out.data().data();
  for (std::size_t b = 0; b < first.batch(); ++b) {
    for (const Tensor<T>* t : xs) {
      const std::size_t len = t->shape().channels() * voxels;
      const T* src = t->data().data() + b * len;
      dst = std::copy(src, src + len, dst);
    }
  }
  return out;
}

template <typename T>
std::pair<Tensor<T>, PoolContext> maxpool3d(const Tensor<T>& x) {
  const Shape& in = x.shape();
  if (in.x() < 2 || in.y() < 2 || in.z() < 2) {
    throw ShapeError("maxpool3d: every spatial extent must be >= 2, got " + in.to_string());
  }
  const Shape out_shape(in.batch(), in.channels(), in.x() / 2, in.y() / 2, in.z() / 2);
  Tensor<T> out(out_shape);
  PoolContext ctx{in, out_shape, std::vector<std::size_t>(out_shape.numel())};
  std::size_t j = 0;
  for (std::size_t b = 0; b < in.batch(); ++b) {
    for (std::size_t c = 0; c < in.channels(); ++c) {
      for (std::size_t ox = 0; ox < out_shape.x(); ++ox) {
        for (std::size_t oy = 0; oy < out_shape.y(); ++oy) {
          for (std::size_t oz = 0; oz < out_shape.z(); ++oz, ++j) {
            // Window visited in increasing flat order; strict '>' keeps the
            // lowest index on ties.
            std::size_t best = in.offset(b, c, 2 * ox, 2 * oy, 2 * oz);
            T best_value = x[best];
            for (std::size_t dx = 0; dx < 2; ++dx) {
              for (std::size_t dy = 0; dy < 2; ++dy) {
                for (std::size_t dz = 0; dz < 2; ++dz) {
                  const std::size_t idx = in.offset(b, c, 2 * ox + dx, 2 * oy + dy, 2 * oz + dz);
                  if (x[idx] > best_value) {
                    best_value = x[idx];
                    best = idx;
                  }
                }
              }
            }
            out[j] = best_value;
            ctx.argmax[j] = best;
          }
        }
      }
    }
  }
  return {std::move(out), std::move(ctx)};
}

template <typename T>
Tensor<T> unpool3d(const Tensor<T>& x, const PoolContext& ctx) {
  if (x.shape() != ctx.output_shape || ctx.argmax.size() != x.numel()) {
    throw ShapeError("unpool3d: input " + x.shape().to_string() +
                     " does not match pooled shape " + ctx.output_shape.to_string());
  }
  Tensor<T> out(ctx.input_shape);
  for (std::size_t j = 0; j < x.numel(); ++j) out[ctx.argmax[j]] = x[j];
  return out;
}

template <typename T>
T softmax_cross_entropy(const Tensor<T>& logits, std::span<const std::uint8_t> labels,
                        std::span<T> grad) {
  const Shape& s = logits.shape();
  const std::size_t classes = s.channels();
  const std::size_t voxels = s.spatial_size();
  const std::size_t count = s.batch() * voxels;
  if (classes < 2) throw ShapeError("softmax_cross_entropy: need at least 2 classes");
  if (labels.size() != count) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                     " labels for logits " + s.to_string());
  }
  if (count == 0) throw ShapeError("softmax_cross_entropy: empty input");
  const double scale = 1.0 / static_cast<double>(count);
  double total = 0.0;
  std::vector<double> z(classes);
  for (std::size_t b = 0; b < s.batch(); ++b) {
    const T* base = logits.data().data() + b * classes * voxels;
    for (std::size_t v = 0; v < voxels; ++v) {
      const std::uint8_t label = labels[b * voxels + v];
      if (label >= classes) {
        throw LabelError("softmax_cross_entropy: label " + std::to_string(label) +
                         " outside [0," + std::to_string(classes) + ")");
      }
      double peak = -INFINITY;
      for (std::size_t c = 0; c < classes; ++c) {
        z[c] = static_cast<double>(base[c * voxels + v]);
        peak = std::max(peak, z[c]);
      }
      double denom = 0.0;
      for (std::size_t c = 0; c < classes; ++c) denom += std::exp(z[c] - peak);
      const double log_denom = std::log(denom);
      total += log_denom - (z[label] - peak);
      if (!grad.empty()) {
        T* g = grad.data() + b * classes * voxels;
        for (std::size_t c = 0; c < classes; ++c) {
          const double p = std::exp(z[c] - peak - log_denom);
          g[c * voxels + v] += static_cast<T>((p - (c == label ? 1.0 : 0.0)) * scale);
        }
      }
    }
  }
  return static_cast<T>(total * scale);
}

}  // namespace kernels

template <typename T>
NodeId conv3d(Graph<T>& g, NodeId x, NodeId weight, NodeId bias) {
  Tensor<T> out = kernels::conv3d(g.value(x), g.value(weight), g.value(bias));
  return g.record("conv3d", {x, weight, bias}, std::move(out), [](BackwardContext<T>& ctx) {
    kernels::conv3d_backward(ctx.input(0), ctx.input(1), ctx.grad_output(), ctx.grad_input(0),
                             ctx.grad_input(1), ctx.grad_input(2));
  });
}

template <typename T>
NodeId relu(Graph<T>& g, NodeId x) {
  return g.record("relu", {x}, kernels::relu(g.value(x)), [](BackwardContext<T>& ctx) {
    auto gx = ctx.grad_input(0);
    if (gx.empty()) return;
    auto in = ctx.input(0).data();
    auto go = ctx.grad_output();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      if (in[i] > T{0}) gx[i] += go[i];
    }
  });
}

template <typename T>
NodeId concat_channels(Graph<T>& g, std::span<const NodeId> xs) {
  std::vector<const Tensor<T>*> values;
  values.reserve(xs.size());
  for (NodeId id : xs) values.push_back(&g.value(id));
  Tensor<T> out = kernels::concat_channels<T>(values);
  return g.record("concat_channels", {xs.begin(), xs.end()}, std::move(out),
                  [](BackwardContext<T>& ctx) {
                    const Shape& os = ctx.output().shape();
                    const std::size_t voxels = os.spatial_size();
                    auto go = ctx.grad_output();
                    std::size_t channel0 = 0;
                    for (std::size_t i = 0; i < ctx.num_inputs(); ++i) {
                      const std::size_t ch = ctx.input(i).shape().channels();
                      auto gx = ctx.grad_input(i);
                      if (!gx.empty()) {
                        for (std::size_t b = 0; b < os.batch(); ++b) {
                          const T* src = go.data() + (b * os.channels() + channel0) * voxels;
                          T* dst = gx.data() + b * ch * voxels;
                          for (std::size_t k = 0; k < ch * voxels; ++k) dst[k] += src[k];
                        }
                      }
                      channel0 += ch;
                    }
                  });
}

template <typename T>
PoolResult<T> maxpool3d(Graph<T>& g, NodeId x) {
  auto [out, ctx] = kernels::maxpool3d(g.value(x));
  auto shared = std::make_shared<const PoolContext>(std::move(ctx));
  NodeId id = g.record("maxpool3d", {x}, std::move(out), [shared](BackwardContext<T>& c) {
    auto gx = c.grad_input(0);
    if (gx.empty()) return;
    auto go = c.grad_output();
    for (std::size_t j = 0; j < go.size(); ++j) gx[shared->argmax[j]] += go[j];
  });
  return {id, std::move(shared)};
}

template <typename T>
NodeId unpool3d(Graph<T>& g, NodeId x, std::shared_ptr<const PoolContext> ctx) {
  if (!ctx) throw ContractError("unpool3d: missing pool context");
  Tensor<T> out = kernels::unpool3d(g.value(x), *ctx);
  return g.record("unpool3d", {x}, std::move(out), [ctx](BackwardContext<T>& c) {
    auto gx = c.grad_input(0);
    if (gx.empty()) return;
    auto go = c.grad_output();
    for (std::size_t j = 0; j < gx.size(); ++j) gx[j] += go[ctx->argmax[j]];
  });
}

template <typename T>
NodeId softmax_cross_entropy(Graph<T>& g, NodeId logits, std::vector<std::uint8_t> labels) {
  const T loss = kernels::softmax_cross_entropy<T>(g.value(logits), labels);
  Tensor<T> out(Shape(1, 1, 1, 1, 1), std::vector<T>{loss});
  return g.record("softmax_cross_entropy", {logits}, std::move(out),
                  [labels = std::move(labels)](BackwardContext<T>& c) {
                    auto gx = c.grad_input(0);
                    if (gx.empty()) return;
                    const T scale = c.grad_output()[0];
                    std::vector<T> local(gx.size(), T{0});
                    kernels::softmax_cross_entropy<T>(c.input(0), labels, local);
                    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += scale * local[i];
                  });
}

template <typename T>
NodeId sum(Graph<T>& g, NodeId x) {
  T acc{0};
  for (T v : g.value(x).data()) acc += v;
  return g.record("sum", {x}, Tensor<T>(Shape(1, 1, 1, 1, 1), std::vector<T>{acc}),
                  [](BackwardContext<T>& c) {
                    auto gx = c.grad_input(0);
                    const T go = c.grad_output()[0];
                    for (T& v : gx) v += go;
                  });
}

template <typename T>
NodeId weighted_sum(Graph<T>& g, NodeId x, Tensor<T> weights) {
  if (weights.shape() != g.value(x).shape()) {
    throw ShapeError("weighted_sum: weights " + weights.shape().to_string() +
                     " do not match input " + g.value(x).shape().to_string());
  }
  T acc{0};
  auto xv = g.value(x).data();
  for (std::size_t i = 0; i < xv.size(); ++i) acc += weights[i] * xv[i];
  return g.record("weighted_sum", {x}, Tensor<T>(Shape(1, 1, 1, 1, 1), std::vector<T>{acc}),
                  [w = std::move(weights)](BackwardContext<T>& c) {
                    auto gx = c.grad_input(0);
                    const T go = c.grad_output()[0];
                    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go * w[i];
                  });
}

#define RATLESNET_INSTANTIATE_OPS(T)                                                         \
  template struct ConvParams<T>;                                                             \
  template Tensor<T> kernels::conv3d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);  \
  template void kernels::conv3d_backward(const Tensor<T>&, const Tensor<T>&,                 \
                                         std::span<const T>, std::span<T>, std::span<T>,     \
                                         std::span<T>);                                      \
  template Tensor<T> kernels::relu(const Tensor<T>&);                                        \
  template Tensor<T> kernels::concat_channels(std::span<const Tensor<T>* const>);            \
  template std::pair<Tensor<T>, PoolContext> kernels::maxpool3d(const Tensor<T>&);           \
  template Tensor<T> kernels::unpool3d(const Tensor<T>&, const PoolContext&);                \
  template T kernels::softmax_cross_entropy(const Tensor<T>&, std::span<const std::uint8_t>, \
                                            std::span<T>);                                   \
  template NodeId conv3d(Graph<T>&, NodeId, NodeId, NodeId);                                 \
  template NodeId relu(Graph<T>&, NodeId);                                                   \
  template NodeId concat_channels(Graph<T>&, std::span<const NodeId>);                       \
  template PoolResult<T> maxpool3d(Graph<T>&, NodeId);                                       \
  template NodeId unpool3d(Graph<T>&, NodeId, std::shared_ptr<const PoolContext>);           \
  template NodeId softmax_cross_entropy(Graph<T>&, NodeId, std::vector<std::uint8_t>);       \
  template NodeId sum(Graph<T>&, NodeId);                                                    \
  template NodeId weighted_sum(Graph<T>&, NodeId, Tensor<T>);

RATLESNET_INSTANTIATE_OPS(float)
RATLESNET_INSTANTIATE_OPS(double)

}  // namespace ratlesnet

#include "ratlesnet/model.h"

#include <cmath>
#include <optional>
#include <random>

#include "ratlesnet/parallel.h"

namespace ratlesnet {

namespace {

// The topology, written once and run by three executors: a planner that
// creates layers, a graph recorder, and an eager evaluator.
template <typename Exec>
typename Exec::Value run_topology(const ModelConfig& cfg, Exec& ex, typename Exec::Value x) {
  using Value = typename Exec::Value;
  auto dense = [&](Value in, const std::string& name) {
    Value h1 = ex.relu(ex.conv(name + ".conv1", in, cfg.growth_rate, 3));
    Value c1 = ex.concat(std::move(in), std::move(h1));
    Value h2 = ex.relu(ex.conv(name + ".conv2", c1, cfg.growth_rate, 3));
    return ex.concat(std::move(c1), std::move(h2));
  };

  std::vector<typename Exec::Pool> pools;
  std::vector<std::size_t> pooled_channels;
  for (std::size_t i = 0; i < cfg.levels; ++i) {
    x = dense(std::move(x), "enc_block_" + std::to_string(i));
    pooled_channels.push_back(ex.channels(x));
    auto [pooled, ctx] = ex.pool(std::move(x));
    pools.push_back(std::move(ctx));
    x = std::move(pooled);
  }
  x = dense(std::move(x), "bridge");
  for (std::size_t i = cfg.levels; i-- > 0;) {
    const std::string tag = std::to_string(i);
    x = ex.relu(ex.conv("bottleneck_" + tag, x, pooled_channels[i], 1));
    x = ex.unpool(std::move(x), pools[i]);
    x = dense(std::move(x), "dec_block_" + tag);
  }
  return ex.conv("classifier", x, cfg.num_classes, 1);
}

template <typename T>
struct Planner {
  using Value = std::size_t;
  using Pool = int;
  std::vector<NamedConv<T>>& layers;

  Value conv(const std::string& name, Value in, std::size_t out, std::size_t k) {
    layers.push_back({name, ConvParams<T>(out, in, k)});
    return out;
  }
  Value relu(Value v) { return v; }
  Value concat(Value a, Value b) { return a + b; }
  std::size_t channels(Value v) const { return v; }
  std::pair<Value, Pool> pool(Value v) { return {v, 0}; }
  Value unpool(Value v, Pool) { return v; }
};

template <typename T>
struct GraphExec {
  using Value = NodeId;
  using Pool = std::shared_ptr<const PoolContext>;
  Graph<T>& g;
  std::span<const NodeId> params;
  std::size_t next = 0;

  Value conv(const std::string&, Value in, std::size_t, std::size_t) {
    const NodeId w = params[2 * next];
    const NodeId b = params[2 * next + 1];
    ++next;
    return conv3d(g, in, w, b);
  }
  Value relu(Value v) { return ratlesnet::relu(g, v); }
  Value concat(Value a, Value b) {
    const NodeId ids[] = {a, b};
    return concat_channels<T>(g, ids);
  }
  std::size_t channels(Value v) const { return g.value(v).shape().channels(); }
  std::pair<Value, Pool> pool(Value v) {
    auto r = maxpool3d(g, v);
    return {r.output, std::move(r.context)};
  }
  Value unpool(Value v, const Pool& ctx) { return unpool3d(g, v, ctx); }
};

template <typename T>
struct EagerExec {
  using Value = Tensor<T>;
  using Pool = PoolContext;
  const std::vector<NamedConv<T>>& layers;
  std::size_t next = 0;

  Value conv(const std::string&, const Value& in, std::size_t, std::size_t) {
    const ConvParams<T>& p = layers[next++].params;
    return kernels::conv3d(in, p.weight, p.bias);
  }
  Value relu(Value v) {
    for (T& x : v.data()) x = x > T{0} ? x : T{0};
    return v;
  }
  Value concat(Value a, Value b) {
    const Tensor<T>* parts[] = {&a, &b};
    return kernels::concat_channels<T>(parts);
  }
  std::size_t channels(const Value& v) const { return v.shape().channels(); }
  std::pair<Value, Pool> pool(Value v) { return kernels::maxpool3d(v); }
  Value unpool(Value v, const Pool& ctx) { return kernels::unpool3d(v, ctx); }
};

}  // namespace

void ModelConfig::validate() const {
  if (input_channels == 0 || num_classes == 0 || growth_rate == 0 || levels == 0) {
    throw ConfigError("model config: input_channels, num_classes, growth_rate and levels "
                      "must be positive");
  }
}

template <typename T>
Model<T>::Model(const ModelConfig& config) : config_(config) {
  config_.validate();
  Planner<T> planner{layers_};
  run_topology(config_, planner, config_.input_channels);
}

template <typename T>
std::vector<Tensor<T>*> Model<T>::parameters() {
  std::vector<Tensor<T>*> out;
  for (auto& l : layers_) {
    out.push_back(&l.params.weight);
    out.push_back(&l.params.bias);
  }
  return out;
}

template <typename T>
std::vector<const Tensor<T>*> Model<T>::parameters() const {
  std::vector<const Tensor<T>*> out;
  for (const auto& l : layers_) {
    out.push_back(&l.params.weight);
    out.push_back(&l.params.bias);
  }
  return out;
}

template <typename T>
std::size_t Model<T>::param_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.params.param_count();
  return n;
}

template <typename T>
void Model<T>::check_input(const Shape& x) const {
  if (x.channels() != config_.input_channels) {
    throw ShapeError("model expects " + std::to_string(config_.input_channels) +
                     " input channels, got " + x.to_string());
  }
  const std::size_t min_extent = std::size_t{1} << config_.levels;
  if (x.x() < min_extent || x.y() < min_extent || x.z() < min_extent) {
    throw ShapeError("input " + x.to_string() + " cannot be pooled " +
                     std::to_string(config_.levels) + " times (each spatial extent must be >= " +
                     std::to_string(min_extent) + ")");
  }
}

template <typename T>
NodeId Model<T>::forward(Graph<T>& g, NodeId x) {
  std::vector<NodeId> ids;
  for (Tensor<T>* p : parameters()) ids.push_back(g.leaf(*p));
  return forward(g, x, ids);
}

template <typename T>
NodeId Model<T>::forward(Graph<T>& g, NodeId x, std::span<const NodeId> params) const {
  check_input(g.value(x).shape());
  if (params.size() != 2 * layers_.size()) {
    throw ContractError("forward: expected " + std::to_string(2 * layers_.size()) +
                        " parameter nodes, got " + std::to_string(params.size()));
  }
  GraphExec<T> ex{g, params};
  return run_topology(config_, ex, x);
}

template <typename T>
Tensor<T> Model<T>::infer(const Tensor<T>& x) const {
  check_input(x.shape());
  const FlushDenormals ftz;
  EagerExec<T> ex{layers_};
  Tensor<T> logits = run_topology(config_, ex, x);
  if (!logits.all_finite()) throw NumericError("non-finite logits");
  return logits;
}

template <typename T>
Model<T> build_model(const ModelConfig& config) {
  Model<T> model(config);
  std::mt19937_64 rng(config.seed);
  for (auto& layer : model.layers()) {
    ConvParams<T>& p = layer.params;
    const double fan_in = static_cast<double>(p.in_channels() * p.kernel() * p.kernel() * p.kernel());
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    for (T& w : p.weight.data()) w = static_cast<T>(dist(rng));
    p.weight.set_requires_grad(true);
    p.bias.set_requires_grad(true);
  }
  return model;
}

Mask argmax_mask(const Tensor<float>& logits, const Extent3& shape, const Spacing3& spacing) {
  const Shape& s = logits.shape();
  if (s.batch() != 1 || s.channels() != 2 || s.x() != shape[0] || s.y() != shape[1] ||
      s.z() != shape[2]) {
    throw ShapeError("argmax_mask: logits " + s.to_string() + " do not match the volume");
  }
  Mask mask(shape, spacing);
  const std::size_t n = s.spatial_size();
  const float* background = logits.data().data();
  const float* lesion = background + n;
  for (std::size_t i = 0; i < n; ++i) mask.values[i] = lesion[i] > background[i] ? 1 : 0;
  return mask;
}

Mask predict_mask(const Model<float>& model, const Volume& volume) {
  return argmax_mask(model.infer(to_tensor(volume)), volume.shape, volume.voxel_size);
}

template class Model<float>;
template class Model<double>;
template Model<float> build_model<float>(const ModelConfig&);
template Model<double> build_model<double>(const ModelConfig&);

}  // namespace ratlesnet

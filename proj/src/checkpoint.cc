#include "ratlesnet/checkpoint.h"

#include "ratlesnet/io.h"

namespace ratlesnet {

namespace {

constexpr char kMagic[] = "RLNET1";
constexpr std::size_t kMagicSize = 6;

std::vector<std::string> tensor_names(const Model<float>& model) {
  std::vector<std::string> names;
  for (const auto& l : model.layers()) {
    names.push_back(l.name + ".weight");
    names.push_back(l.name + ".bias");
  }
  return names;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Model<float>& model) {
  io::ByteWriter w;
  w.put_string(std::string(kMagic, kMagicSize));
  const ModelConfig& c = model.config();
  w.put<std::uint64_t>(c.input_channels);
  w.put<std::uint64_t>(c.num_classes);
  w.put<std::uint64_t>(c.growth_rate);
  w.put<std::uint64_t>(c.levels);
  w.put<std::uint64_t>(c.seed);
  const auto params = model.parameters();
  const auto names = tensor_names(model);
  w.put<std::uint64_t>(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(names[i].size()));
    w.put_string(names[i]);
    for (std::size_t d : params[i]->shape().dims) w.put<std::uint64_t>(d);
    w.put<std::uint64_t>(params[i]->numel());
    for (float v : params[i]->data()) w.put<float>(v);
  }
  return std::move(w.bytes());
}

Model<float> decode_checkpoint(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  if (bytes.size() < kMagicSize || r.get_string(kMagicSize) != std::string(kMagic, kMagicSize)) {
    throw FormatError("checkpoint: unknown magic");
  }
  ModelConfig c;
  c.input_channels = r.get<std::uint64_t>();
  c.num_classes = r.get<std::uint64_t>();
  c.growth_rate = r.get<std::uint64_t>();
  c.levels = r.get<std::uint64_t>();
  c.seed = r.get<std::uint64_t>();
  if (c.levels > 32 || c.growth_rate > (1u << 20) || c.input_channels > (1u << 20) ||
      c.num_classes > (1u << 20)) {
    throw FormatError("checkpoint: implausible model config");
  }
  Model<float> model;
  try {
    model = Model<float>(c);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  const auto params = model.parameters();
  const auto names = tensor_names(model);
  const auto count = r.get<std::uint64_t>();
  if (count != params.size()) {
    throw FormatError("checkpoint: " + std::to_string(count) + " tensors stored, topology has " +
                      std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto name_len = r.get<std::uint32_t>();
    const std::string name = r.get_string(name_len);
    if (name != names[i]) {
      throw FormatError("checkpoint: expected tensor " + names[i] + ", found " + name);
    }
    Shape shape;
    for (auto& d : shape.dims) d = r.get<std::uint64_t>();
    if (shape != params[i]->shape()) {
      throw FormatError("checkpoint: tensor " + name + " has shape " + shape.to_string() +
                        ", expected " + params[i]->shape().to_string());
    }
    const auto values = r.get<std::uint64_t>();
    if (values != params[i]->numel()) {
      throw FormatError("checkpoint: tensor " + name + " value count mismatch");
    }
    r.require(values * sizeof(float));
    for (float& v : params[i]->data()) v = r.get<float>();
    params[i]->set_requires_grad(true);
  }
  if (r.remaining() != 0) throw FormatError("checkpoint: trailing bytes");
  return model;
}

void save_checkpoint(const Model<float>& model, const std::filesystem::path& path) {
  io::write_file(path, encode_checkpoint(model));
}

Model<float> load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file(path));
}

}  // namespace ratlesnet

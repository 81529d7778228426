#include "mgt/checkpoint.hpp"

#include <map>
#include <string>

#include "bytes.hpp"
#include "mgt/config.hpp"
#include "mgt/error.hpp"

namespace mgt {

namespace {
constexpr std::uint32_t kCheckpointVersion = 1;
}

std::vector<std::uint8_t> encode_checkpoint(const MgtModel& model, const TrainConfig& train) {
  MgtModel copy = model;
  const ParamList params = copy.parameters();
  bytes::Writer w;
  w.raw("MGTC");
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    w.u16(static_cast<std::uint16_t>(p.name.size()));
    w.raw(p.name);
    const Tensor& t = *p.tensor;
    w.u8(static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (double v : t.data()) w.f64(v);
  }
  KeyValues kv;
  store_model_config(kv, model.config);
  store_train_config(kv, train);
  const std::string text = format_key_values(kv);
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.raw(text);
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> data) {
  bytes::Reader r(data);
  if (r.raw(4, "magic") != "MGTC") throw FormatError("bad magic, expected MGTC", 0);
  const std::size_t version_at = r.offset();
  if (r.u32("version") != kCheckpointVersion) throw FormatError("unsupported checkpoint version", version_at);
  const std::uint32_t count = r.u32("tensor count");

  struct Stored {
    Shape shape;
    std::vector<double> values;
    std::size_t offset;
  };
  std::map<std::string, Stored> stored;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t at = r.offset();
    const std::uint16_t len = r.u16("name length");
    std::string name = r.raw(len, "tensor name");
    const std::uint8_t ndim = r.u8("rank");
    Shape shape(ndim);
    for (auto& d : shape) {
      d = r.u32("dims");
      if (d == 0) throw FormatError("zero dimension in tensor '" + name + "'", r.offset() - 4);
    }
    std::vector<double> values(shape_numel(shape));
    for (double& v : values) v = r.f64("tensor data");
    if (!stored.emplace(name, Stored{std::move(shape), std::move(values), at}).second) {
      throw FormatError("duplicate tensor '" + name + "'", at);
    }
  }
  const std::size_t text_at = r.offset();
  const std::uint32_t text_len = r.u32("config length");
  const std::string text = r.raw(text_len, "config block");
  if (!r.at_end()) throw FormatError("trailing bytes after config block", r.offset());

  KeyValues kv;
  ModelConfig model_config;
  TrainConfig train_config;
  try {
    kv = parse_key_values(text);
    model_config = load_model_config(kv);
    train_config = load_train_config(kv);
    model_config.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("bad config block: ") + e.what(), text_at);
  }

  Checkpoint ck{MgtModel::init(model_config, 0), train_config};
  for (const auto& p : ck.model.parameters()) {
    auto it = stored.find(p.name);
    if (it == stored.end()) throw FormatError("checkpoint lacks tensor '" + p.name + "'", text_at);
    if (it->second.shape != p.tensor->shape()) {
      throw FormatError("tensor '" + p.name + "' has shape " + shape_str(it->second.shape) + ", model expects " +
                            shape_str(p.tensor->shape()),
                        it->second.offset);
    }
    try {
      *p.tensor = Tensor::parameter(it->second.shape, std::move(it->second.values));
    } catch (const NumericError&) {
      throw FormatError("non-finite value in tensor '" + p.name + "'", it->second.offset);
    }
    stored.erase(it);
  }
  if (!stored.empty()) {
    const auto& [name, extra] = *stored.begin();
    throw FormatError("unexpected tensor '" + name + "'", extra.offset);
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const MgtModel& model, const TrainConfig& train) {
  bytes::write_file(path.string(), encode_checkpoint(model, train));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(bytes::read_file(path.string()));
}

}  // namespace mgt

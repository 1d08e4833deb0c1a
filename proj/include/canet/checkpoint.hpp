#pragma once

// ============================================================================
// Checkpoint serialisation.
//
// Layout (all integers and floats little-endian regardless of host):
//
//   6 bytes   magic "CANET1"
//   u32       config_len
//   bytes     canonical config JSON (what the model was built from)
//   u32       tensor_count
//   repeated  u32 name_len | name bytes | u32 ndim | u32 dims[ndim]
//             | f32 values[prod(dims)]
//
// Values are stored as 32-bit floats.  A float-precision model round-trips
// bit-exactly; a double-precision model loses the low mantissa bits on save
// (widening back on load is exact, so save -> load -> save is byte-identical
// in both precisions).  Loading validates the magic, the config echo, every
// tensor name and shape; a checkpoint whose config does not match the
// caller's expectation is rejected before any tensor is touched.
// ============================================================================

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "canet/error.hpp"
#include "canet/model.hpp"

namespace canet {

namespace detail {

constexpr char kCheckpointMagic[6] = {'C', 'A', 'N', 'E', 'T', '1'};

inline void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline void put_f32(std::string& out, float v) {
  put_u32(out, std::bit_cast<std::uint32_t>(v));
}

class ByteReader {
 public:
  ByteReader(std::string data, std::string path)
      : data_(std::move(data)), path_(std::move(path)) {}

  void expect_magic() {
    if (data_.size() < sizeof(kCheckpointMagic) ||
        std::memcmp(data_.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
      throw io_error(path_ + ": not a CANET1 checkpoint");
    }
    pos_ = sizeof(kCheckpointMagic);
  }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) {
      v = (v << 8) | static_cast<std::uint8_t>(data_[pos_ + static_cast<std::size_t>(i)]);
    }
    pos_ += 4;
    return v;
  }

  float f32() { return std::bit_cast<float>(u32()); }

  std::string bytes(std::uint32_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool exhausted() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) {
    if (data_.size() - pos_ < n) {
      throw io_error(path_ + ": truncated checkpoint");
    }
  }

  std::string data_;
  std::string path_;
  std::size_t pos_ = 0;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open '" + path + "' for reading");
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return data;
}

}  // namespace detail

template <class T>
void save_checkpoint(const std::string& path, Model<T>& model) {
  std::string out;
  out.append(detail::kCheckpointMagic, sizeof(detail::kCheckpointMagic));

  const std::string cfg = canonical_config_string(model.config);
  detail::put_u32(out, static_cast<std::uint32_t>(cfg.size()));
  out += cfg;

  std::uint32_t count = 0;
  visit_params(model, [&](const std::string&, Tensor<T>&, bool) { ++count; });
  detail::put_u32(out, count);

  visit_params(model, [&](const std::string& name, Tensor<T>& t, bool) {
    detail::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    detail::put_u32(out, static_cast<std::uint32_t>(t.ndim()));
    for (std::int64_t d = 0; d < t.ndim(); ++d) {
      detail::put_u32(out, static_cast<std::uint32_t>(t.dim(d)));
    }
    for (const T v : t.values()) {
      detail::put_f32(out, static_cast<float>(v));
    }
  });

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw io_error("cannot open '" + path + "' for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw io_error("write to '" + path + "' failed");
}

// Reads the config echo without building a model.
inline ModelConfig peek_checkpoint_config(const std::string& path) {
  detail::ByteReader r(detail::read_file(path), path);
  r.expect_magic();
  const auto cfg_text = r.bytes(r.u32());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(cfg_text);
  } catch (const nlohmann::json::exception& e) {
    throw io_error(path + ": bad config block: " + e.what());
  }
  return parse_model_config(j);
}

template <class T>
Model<T> load_checkpoint(const std::string& path) {
  detail::ByteReader r(detail::read_file(path), path);
  r.expect_magic();

  const std::string cfg_text = r.bytes(r.u32());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(cfg_text);
  } catch (const nlohmann::json::exception& e) {
    throw io_error(path + ": bad config block: " + e.what());
  }
  const ModelConfig cfg = parse_model_config(j);

  std::map<std::string, std::pair<Shape, std::vector<float>>> stored;
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.bytes(r.u32());
    const std::uint32_t ndim = r.u32();
    Shape shape;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      shape.push_back(static_cast<std::int64_t>(r.u32()));
    }
    std::vector<float> values(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& v : values) v = r.f32();
    if (!stored.emplace(std::move(name), std::make_pair(std::move(shape), std::move(values)))
             .second) {
      throw io_error(path + ": duplicate tensor name in checkpoint");
    }
  }
  if (!r.exhausted()) throw io_error(path + ": trailing bytes after tensor table");

  auto model = make_model<T>(cfg);
  visit_params(model, [&](const std::string& name, Tensor<T>& t, bool trainable) {
    auto it = stored.find(name);
    if (it == stored.end()) {
      throw io_error(path + ": checkpoint is missing tensor '" + name + "'");
    }
    const auto& [shape, values] = it->second;
    if (shape != t.shape()) {
      throw io_error(path + ": tensor '" + name + "' has shape " + format_shape(shape) +
                     ", expected " + format_shape(t.shape()));
    }
    std::vector<T> widened(values.begin(), values.end());
    t = Tensor<T>(shape, std::move(widened), trainable);
    stored.erase(it);
  });
  if (!stored.empty()) {
    throw io_error(path + ": checkpoint has unknown tensor '" + stored.begin()->first + "'");
  }
  return model;
}

// Load variant guarding against driving a model with the wrong architecture:
// the stored config echo must match `expected` exactly.
template <class T>
Model<T> load_checkpoint(const std::string& path, const ModelConfig& expected) {
  auto model = load_checkpoint<T>(path);
  if (canonical_config_string(model.config) != canonical_config_string(expected)) {
    throw config_error(path + ": checkpoint config does not match the requested config");
  }
  return model;
}

}  // namespace canet

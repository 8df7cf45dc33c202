#include "amorph/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "amorph/errors.hpp"

namespace amorph {

namespace {

std::uint32_t to_little(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    v = ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
  }
  return v;
}

Shape parse_shape(const std::string& text, std::size_t line) {
  Shape shape;
  if (text == "scalar") return shape;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      shape.push_back(std::stoull(part));
    } catch (const std::exception&) {
      throw ParseError("bad shape '" + text + "'", line);
    }
  }
  return shape;
}

std::string format_shape(const Shape& shape) {
  if (shape.empty()) return "scalar";
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
  return s;
}

}  // namespace

const Tensor<float>& Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t.tensor;
  }
  throw ParseError("checkpoint has no tensor '" + name + "'");
}

std::filesystem::path payload_path(const std::filesystem::path& manifest) {
  return std::filesystem::path(manifest.string() + ".bin");
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const std::map<std::string, std::string>& meta,
                     const std::vector<NamedTensor<T>>& tensors) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream manifest(path);
  std::ofstream payload(payload_path(path), std::ios::binary);
  if (!manifest || !payload) throw std::runtime_error("cannot write checkpoint " + path.string());
  manifest << "amorph-checkpoint 1\n";
  for (const auto& [k, v] : meta) manifest << "meta " << k << " " << v << "\n";
  std::size_t offset = 0;
  for (const auto& nt : tensors) {
    manifest << "tensor " << nt.name << " " << format_shape(nt.tensor.shape()) << " " << offset << "\n";
    for (T v : nt.tensor.values()) {
      const float f = static_cast<float>(v);
      std::uint32_t bits = to_little(std::bit_cast<std::uint32_t>(f));
      payload.write(reinterpret_cast<const char*>(&bits), sizeof(bits));
    }
    offset += nt.tensor.size() * sizeof(float);
  }
  if (!manifest || !payload) throw std::runtime_error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream manifest(path);
  if (!manifest) throw ParseError("cannot open checkpoint " + path.string());
  std::ifstream payload(payload_path(path), std::ios::binary);
  if (!payload) throw ParseError("cannot open checkpoint payload " + payload_path(path).string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(payload)), std::istreambuf_iterator<char>());

  Checkpoint ckpt;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(manifest, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string kind;
    if (!(ls >> kind)) continue;
    if (kind == "amorph-checkpoint") continue;
    if (kind == "meta") {
      std::string key, value;
      if (!(ls >> key)) throw ParseError("meta line without key", lineno);
      std::getline(ls >> std::ws, value);
      ckpt.meta[key] = value;
    } else if (kind == "tensor") {
      std::string name, shape_text;
      std::size_t offset = 0;
      if (!(ls >> name >> shape_text >> offset)) throw ParseError("malformed tensor line", lineno);
      Shape shape = parse_shape(shape_text, lineno);
      const std::size_t count = numel(shape);
      if (offset + count * sizeof(float) > bytes.size()) {
        throw ParseError("tensor '" + name + "' extends past payload end", lineno);
      }
      std::vector<float> values(count);
      for (std::size_t i = 0; i < count; ++i) {
        std::uint32_t bits;
        std::memcpy(&bits, bytes.data() + offset + i * sizeof(float), sizeof(bits));
        values[i] = std::bit_cast<float>(to_little(bits));
      }
      ckpt.tensors.push_back({name, Tensor<float>(std::move(shape), std::move(values))});
    } else {
      throw ParseError("unknown manifest entry '" + kind + "'", lineno);
    }
  }
  return ckpt;
}

template <typename T>
void restore_tensors(const Checkpoint& ckpt, std::vector<NamedTensor<T>>& into) {
  for (auto& nt : into) {
    const Tensor<float>& src = ckpt.find(nt.name);
    if (src.shape() != nt.tensor.shape()) {
      throw DimensionError("checkpoint tensor '" + nt.name + "' has shape " + shape_str(src.shape()) +
                           ", model expects " + shape_str(nt.tensor.shape()));
    }
    auto dst = nt.tensor.values_mut();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(src[i]);
  }
}

template void save_checkpoint<float>(const std::filesystem::path&, const std::map<std::string, std::string>&,
                                     const std::vector<NamedTensor<float>>&);
template void save_checkpoint<double>(const std::filesystem::path&, const std::map<std::string, std::string>&,
                                      const std::vector<NamedTensor<double>>&);
template void restore_tensors<float>(const Checkpoint&, std::vector<NamedTensor<float>>&);
template void restore_tensors<double>(const Checkpoint&, std::vector<NamedTensor<double>>&);

}  // namespace amorph

#include "prednext/serialize.hpp"

#include <cstring>
#include <fstream>

namespace prednext {

namespace {
constexpr char kMagic[] = "prednext-ckpt-v1\n";

template <typename T>
void write_pod(std::ofstream& f, T v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& f) {
  T v{};
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

bool starts_with(const std::string& s, const std::string& prefix) {
  return !prefix.empty() && s.rfind(prefix, 0) == 0;
}
}  // namespace

void save_checkpoint(const std::filesystem::path& path, const CheckpointMap& map) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write checkpoint " + path.string());
  f.write(kMagic, sizeof(kMagic) - 1);
  write_pod<uint32_t>(f, (uint32_t)map.size());
  for (const auto& [name, entry] : map) {
    write_pod<uint16_t>(f, (uint16_t)name.size());
    f.write(name.data(), (std::streamsize)name.size());
    write_pod<uint8_t>(f, 0);  // dtype: float32
    write_pod<uint8_t>(f, (uint8_t)entry.shape.size());
    for (int64_t d : entry.shape) write_pod<int64_t>(f, d);
    f.write(reinterpret_cast<const char*>(entry.data.data()),
            (std::streamsize)(entry.data.size() * sizeof(float)));
  }
  if (!f) throw std::runtime_error("failed writing checkpoint " + path.string());
}

CheckpointMap load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read checkpoint " + path.string());
  char magic[sizeof(kMagic)] = {};
  f.read(magic, sizeof(kMagic) - 1);
  if (std::memcmp(magic, kMagic, sizeof(kMagic) - 1) != 0)
    throw std::runtime_error("not a prednext-ckpt-v1 file: " + path.string());
  uint32_t count = read_pod<uint32_t>(f);
  CheckpointMap map;
  for (uint32_t i = 0; i < count; ++i) {
    uint16_t len = read_pod<uint16_t>(f);
    std::string name((size_t)len, '\0');
    f.read(name.data(), len);
    uint8_t dtype = read_pod<uint8_t>(f);
    if (dtype != 0) throw std::runtime_error("unsupported dtype in " + name);
    uint8_t ndim = read_pod<uint8_t>(f);
    CheckpointEntry e;
    int64_t n = 1;
    for (uint8_t d = 0; d < ndim; ++d) {
      e.shape.push_back(read_pod<int64_t>(f));
      n *= e.shape.back();
    }
    e.data.resize((size_t)n);
    f.read(reinterpret_cast<char*>(e.data.data()),
           (std::streamsize)(e.data.size() * sizeof(float)));
    if (!f) throw std::runtime_error("truncated checkpoint at " + name);
    map.emplace(std::move(name), std::move(e));
  }
  return map;
}

CheckpointMap registry_to_checkpoint(const ParamRegistry& reg,
                                     const std::string& exclude_prefix) {
  CheckpointMap map;
  for (const auto& [name, t] : reg.params()) {
    if (starts_with(name, exclude_prefix)) continue;
    map[name] = {t.shape(), t.values()};
  }
  for (const auto& [name, buf] : reg.buffers()) {
    if (starts_with(name, exclude_prefix)) continue;
    map[name] = {{(int64_t)buf->size()}, *buf};
  }
  return map;
}

void checkpoint_to_registry(const CheckpointMap& map, ParamRegistry& reg,
                            const std::string& exclude_prefix) {
  for (const auto& [name, t] : reg.params()) {
    if (starts_with(name, exclude_prefix)) continue;
    auto it = map.find(name);
    if (it == map.end())
      throw std::runtime_error("checkpoint missing parameter " + name);
    if (!same_shape(it->second.shape, t.shape()))
      throw std::runtime_error("checkpoint shape mismatch at " + name);
    Tensor tensor = t;  // shares the node; assignment lands in the registry
    tensor.values() = it->second.data;
  }
  for (const auto& [name, buf] : reg.buffers()) {
    if (starts_with(name, exclude_prefix)) continue;
    auto it = map.find(name);
    if (it == map.end())
      throw std::runtime_error("checkpoint missing buffer " + name);
    if (it->second.data.size() != buf->size())
      throw std::runtime_error("checkpoint buffer size mismatch at " + name);
    *buf = it->second.data;
  }
}

}  // namespace prednext

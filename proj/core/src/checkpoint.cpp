#include "nightcast/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

namespace nightcast {

namespace {

constexpr char kMagic[4] = {'N', 'C', 'K', '1'};

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const std::string& path) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("checkpoint: truncated file " + path);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  namespace fs = std::filesystem;
  fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(kMagic, 4);
    const std::string meta = ckpt.meta.dump();
    put<std::uint64_t>(out, meta.size());
    out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& [name, tensor] : ckpt.tensors) {
      put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      put<std::uint8_t>(out, static_cast<std::uint8_t>(tensor.ndim()));
      for (long d : tensor.shape()) put<std::int64_t>(out, d);
      out.write(reinterpret_cast<const char*>(tensor.data()),
                static_cast<std::streamsize>(tensor.numel() * 8));
    }
    if (!out) throw IoError("short write to " + tmp.string());
  }
  fs::rename(tmp, target);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw IoError("not a checkpoint file: " + path);
  }
  Checkpoint ckpt;
  const auto meta_len = get<std::uint64_t>(in, path);
  std::string meta(meta_len, '\0');
  in.read(meta.data(), static_cast<std::streamsize>(meta_len));
  if (!in) throw IoError("checkpoint: truncated metadata in " + path);
  ckpt.meta = nlohmann::json::parse(meta);

  const auto n_tensors = get<std::uint32_t>(in, path);
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    const auto name_len = get<std::uint16_t>(in, path);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto ndim = get<std::uint8_t>(in, path);
    Shape shape;
    for (int d = 0; d < ndim; ++d) shape.push_back(get<std::int64_t>(in, path));
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * 8));
    if (!in) throw IoError("checkpoint: truncated tensor '" + name + "' in " + path);
    ckpt.tensors[name] = std::move(t);
  }
  return ckpt;
}

}  // namespace nightcast

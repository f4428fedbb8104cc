#include "caad/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace caad {

namespace {
constexpr char kMagic[8] = {'C', 'A', 'A', 'D', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& path) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint: truncated file '" + path + "'");
  return v;
}

void write_str(std::ofstream& out, const std::string& s) {
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_str(std::ifstream& in, const std::string& path) {
  const auto n = read_pod<std::uint32_t>(in, path);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw std::runtime_error("checkpoint: truncated file '" + path + "'");
  return s;
}
}  // namespace

void Checkpoint::put(const std::string& name, const std::vector<int>& shape,
                     std::vector<double> data) {
  arrays[name] = {shape, std::move(data)};
}

void Checkpoint::put_string(const std::string& name, std::string value) {
  strings[name] = std::move(value);
}

void Checkpoint::save(const std::string& path) const {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("checkpoint: cannot open '" + tmp + "' for writing");
    out.write(kMagic, sizeof(kMagic));
    write_pod<std::uint32_t>(out, kVersion);
    write_pod<std::uint64_t>(out, arrays.size() + strings.size());
    for (const auto& [name, block] : arrays) {
      write_pod<std::uint8_t>(out, 0);
      write_str(out, name);
      write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(block.shape.size()));
      for (int d : block.shape) write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(d));
      write_pod<std::uint64_t>(out, block.data.size());
      out.write(reinterpret_cast<const char*>(block.data.data()),
                static_cast<std::streamsize>(block.data.size() * sizeof(double)));
    }
    for (const auto& [name, value] : strings) {
      write_pod<std::uint8_t>(out, 1);
      write_str(out, name);
      write_str(out, value);
    }
    if (!out) throw std::runtime_error("checkpoint: failed writing '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("checkpoint: cannot move '" + tmp + "' to '" + path + "'");
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::string(magic, 8) != std::string(kMagic, 8))
    throw std::runtime_error("checkpoint: bad magic in '" + path + "'");
  const auto version = read_pod<std::uint32_t>(in, path);
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unknown version " + std::to_string(version) + " in '" +
                             path + "'");
  const auto count = read_pod<std::uint64_t>(in, path);
  Checkpoint ck;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto kind = read_pod<std::uint8_t>(in, path);
    const std::string name = read_str(in, path);
    if (kind == 0) {
      Block b;
      const auto ndim = read_pod<std::uint32_t>(in, path);
      for (std::uint32_t d = 0; d < ndim; ++d)
        b.shape.push_back(static_cast<int>(read_pod<std::uint64_t>(in, path)));
      const auto n = read_pod<std::uint64_t>(in, path);
      b.data.resize(n);
      in.read(reinterpret_cast<char*>(b.data.data()),
              static_cast<std::streamsize>(n * sizeof(double)));
      if (!in) throw std::runtime_error("checkpoint: truncated file '" + path + "'");
      ck.arrays[name] = std::move(b);
    } else if (kind == 1) {
      ck.strings[name] = read_str(in, path);
    } else {
      throw std::runtime_error("checkpoint: unknown block kind in '" + path + "'");
    }
  }
  return ck;
}

void store_params(Checkpoint& ck, const nn::ParamStore& ps) {
  for (const std::string& name : ps.names()) {
    const nn::Tensor t = ps.get(name);
    ck.put("param/" + name, t.shape(), t.values());
  }
}

void bind_params(const Checkpoint& ck, nn::ParamStore& ps) {
  // validate everything first so a mismatch mutates nothing
  for (const std::string& name : ps.names()) {
    const auto it = ck.arrays.find("param/" + name);
    if (it == ck.arrays.end())
      throw std::runtime_error("checkpoint: missing parameter '" + name + "'");
    const nn::Tensor t = ps.get(name);
    if (it->second.shape != t.shape())
      throw std::runtime_error("checkpoint: shape mismatch for '" + name + "': file " +
                               ad::shape_str(it->second.shape) + " vs model " +
                               ad::shape_str(t.shape()));
  }
  for (const std::string& name : ps.names()) {
    nn::Tensor t = ps.get(name);
    t.values() = ck.arrays.at("param/" + name).data;
  }
}

}  // namespace caad

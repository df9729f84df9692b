#include "dynalab/params.hpp"

#include <cstring>
#include <fstream>

namespace dynalab {

namespace {
constexpr char kMagic[4] = {'D', 'Y', 'N', 'L'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_u64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
}  // namespace

void save_params(const ParamSet& p, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("save_params: cannot open " + path.string());
  os.write(kMagic, 4);
  write_u32(os, kVersion);
  write_u32(os, static_cast<std::uint32_t>(p.size()));
  for (const auto& [name, arr] : p.entries) {
    write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(os, static_cast<std::uint32_t>(arr.shape.size()));
    for (auto d : arr.shape) write_u64(os, static_cast<std::uint64_t>(d));
    os.write(reinterpret_cast<const char*>(arr.data.data()),
             static_cast<std::streamsize>(arr.data.size() * sizeof(double)));
  }
  if (!os) throw std::runtime_error("save_params: write failed " + path.string());
}

ParamSet load_params(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_params: cannot open " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("load_params: bad magic in " + path.string());
  if (read_u32(is) != kVersion)
    throw std::runtime_error("load_params: unsupported version in " + path.string());
  const std::uint32_t count = read_u32(is);
  ParamSet p;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = read_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const std::uint32_t rank = read_u32(is);
    std::vector<std::int64_t> shape(rank);
    for (auto& d : shape) d = static_cast<std::int64_t>(read_u64(is));
    Array arr = Array::zeros(shape);
    is.read(reinterpret_cast<char*>(arr.data.data()),
            static_cast<std::streamsize>(arr.data.size() * sizeof(double)));
    if (!is) throw std::runtime_error("load_params: truncated file " + path.string());
    p.insert(name, std::move(arr));
  }
  return p;
}

}  // namespace dynalab

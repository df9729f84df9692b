#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "dynalab/array.hpp"

namespace dynalab {

// Named collection of trainable arrays. std::map keeps iteration order
// deterministic, which the serialization format and gradient bookkeeping
// rely on.
struct ParamSet {
  std::map<std::string, Array> entries;

  Array& at(const std::string& name) { return entries.at(name); }
  const Array& at(const std::string& name) const { return entries.at(name); }
  bool contains(const std::string& name) const {
    return entries.count(name) != 0;
  }
  void insert(const std::string& name, Array a) {
    if (!entries.emplace(name, std::move(a)).second)
      throw DimensionError("ParamSet: duplicate parameter name " + name);
  }
  std::size_t size() const { return entries.size(); }

  bool finite() const {
    for (const auto& [k, v] : entries)
      if (!v.finite()) return false;
    return true;
  }

  // Zero arrays with the same names and shapes as this set.
  ParamSet zeros_like() const {
    ParamSet out;
    for (const auto& [k, v] : entries) out.insert(k, Array::zeros(v.shape));
    return out;
  }
};

// Flat binary format: magic "DYNL", version u32, count u32, then per entry:
// name length u32, name bytes, rank u32, dims u64 each, elements as
// little-endian doubles. Bit-exact round-trip.
void save_params(const ParamSet& p, const std::filesystem::path& path);
ParamSet load_params(const std::filesystem::path& path);

}  // namespace dynalab

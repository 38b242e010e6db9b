#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "tckin/param_store.hpp"

namespace tckin {

/// Parameter checkpoint, format version 1. All integers and floats are
/// little-endian:
///
///   magic     8 bytes   "TCKINPRM"
///   version   u32       1
///   meta_len  u64       byte length of the metadata blob
///   meta      bytes     UTF-8 text (the model writes a JSON manifest here)
///   count     u32       number of parameters
///   count × { name_len u32, name bytes, rank u32, dims u64[rank], values f64[prod(dims)] }
///
/// Parameters are written in the store's lexicographic name order.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ParamStore params;
  std::string metadata;
};

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params, const std::string& metadata);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Overwrites the values of `dst` with same-named, same-shaped entries from
/// `src`. Throws DataError on any name or shape difference.
void assign_params(ParamStore& dst, const ParamStore& src);

}  // namespace tckin

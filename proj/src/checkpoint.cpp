#include "tckin/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

#include "tckin/error.hpp"

namespace tckin {
namespace {

constexpr char kMagic[8] = {'T', 'C', 'K', 'I', 'N', 'P', 'R', 'M'};

template <typename U>
void put_le(std::ostream& os, U v) {
  unsigned char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), sizeof(U));
}

template <typename U>
U get_le(std::istream& is) {
  unsigned char buf[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(U))) throw DataError("checkpoint truncated");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
  return v;
}

std::string get_bytes(std::istream& is, std::uint64_t n) {
  if (n > (1ull << 32)) throw DataError("checkpoint field length is implausible");
  std::string s(n, '\0');
  if (n && !is.read(s.data(), static_cast<std::streamsize>(n))) throw DataError("checkpoint truncated");
  return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params, const std::string& metadata) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write checkpoint " + path.string());
  os.write(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(os, kCheckpointVersion);
  put_le<std::uint64_t>(os, metadata.size());
  os.write(metadata.data(), static_cast<std::streamsize>(metadata.size()));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, entry] : params) {
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    const Shape& shape = entry.value.shape();
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(shape.size()));
    for (auto d : shape) put_le<std::uint64_t>(os, d);
    for (double v : entry.value.values()) put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
  }
  if (!os) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) throw DataError(path.string() + " is not a checkpoint");
  const auto version = get_le<std::uint32_t>(is);
  if (version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  ck.metadata = get_bytes(is, get_le<std::uint64_t>(is));
  const auto count = get_le<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = get_bytes(is, get_le<std::uint32_t>(is));
    const auto rank = get_le<std::uint32_t>(is);
    if (rank > 8) throw DataError("checkpoint tensor rank " + std::to_string(rank) + " is implausible");
    Shape shape(rank);
    for (auto& d : shape) d = get_le<std::uint64_t>(is);
    const std::size_t n = shape_numel(shape);
    if (n > (1u << 28)) throw DataError("checkpoint tensor is implausibly large");
    std::vector<double> data(n);
    for (auto& v : data) v = std::bit_cast<double>(get_le<std::uint64_t>(is));
    ck.params.add(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  if (is.peek() != std::char_traits<char>::eof()) throw DataError(path.string() + " has trailing bytes");
  return ck;
}

void assign_params(ParamStore& dst, const ParamStore& src) {
  if (dst.size() != src.size()) throw DataError("checkpoint parameter count differs from the model");
  for (auto& [name, entry] : dst) {
    if (!src.contains(name)) throw DataError("checkpoint lacks parameter '" + name + "'");
    const Tensor& v = src.value(name);
    if (v.shape() != entry.value.shape()) {
      throw DataError("checkpoint parameter '" + name + "' has shape " + shape_str(v.shape()) + ", model expects " +
                      shape_str(entry.value.shape()));
    }
    entry.value = v;
  }
}

}  // namespace tckin

#include "mctnet/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace mctnet {

namespace {

constexpr char kMagic[8] = {'M', 'C', 'T', 'C', 'K', 'P', 'T', '1'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = (v >> (8 * i)) & 0xff;
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = (v >> (8 * i)) & 0xff;
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(os, bits);
}

uint32_t get_u32(std::istream& is, const std::string& what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw IoError("checkpoint: truncated while reading " + what);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= uint32_t(b[i]) << (8 * i);
  return v;
}

uint64_t get_u64(std::istream& is, const std::string& what) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8))
    throw IoError("checkpoint: truncated while reading " + what);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= uint64_t(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& is, const std::string& what) {
  const uint64_t bits = get_u64(is, what);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

void save_checkpoint(const ParameterStore& params, uint64_t config_digest,
                     const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("checkpoint: cannot open '" + path + "' for writing");
  os.write(kMagic, 8);
  put_u32(os, kVersion);
  put_u64(os, config_digest);
  put_u32(os, static_cast<uint32_t>(params.size()));
  for (const auto& e : params.entries()) {
    put_u32(os, static_cast<uint32_t>(e.name.size()));
    os.write(e.name.data(), std::streamsize(e.name.size()));
    put_u32(os, static_cast<uint32_t>(e.value.ndim()));
    for (int64_t d : e.value.shape()) put_u64(os, uint64_t(d));
    for (double v : e.value.data()) put_f64(os, v);
  }
  if (!os) throw IoError("checkpoint: write to '" + path + "' failed");
}

namespace {
uint64_t open_and_check_header(std::ifstream& is, const std::string& path) {
  if (!is) throw IoError("checkpoint: cannot open '" + path + "'");
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    throw IoError("checkpoint: '" + path + "' has no MCTCKPT1 magic");
  const uint32_t version = get_u32(is, "version");
  if (version != kVersion)
    throw IoError("checkpoint: unsupported format version " +
                  std::to_string(version));
  return get_u64(is, "config digest");
}
}  // namespace

uint64_t peek_checkpoint_digest(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  return open_and_check_header(is, path);
}

uint64_t load_checkpoint(ParameterStore& params, const std::string& path,
                         std::optional<uint64_t> expected_digest) {
  std::ifstream is(path, std::ios::binary);
  const uint64_t digest = open_and_check_header(is, path);
  if (expected_digest && digest != *expected_digest) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%016llx vs expected %016llx",
                  static_cast<unsigned long long>(digest),
                  static_cast<unsigned long long>(*expected_digest));
    throw ConfigError(
        "checkpoint: config digest mismatch (" + std::string(buf) +
        "); the checkpoint was trained with a different architecture");
  }

  const uint32_t count = get_u32(is, "record count");
  if (count != params.size())
    throw IoError("checkpoint: " + std::to_string(count) + " records, model has " +
                  std::to_string(params.size()) + " entries");

  // Parse everything first so failures leave the store untouched.
  std::vector<std::vector<double>> payloads(count);
  for (uint32_t r = 0; r < count; ++r) {
    const auto& entry = params.at(r);
    const uint32_t name_len = get_u32(is, "record name length");
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len))
      throw IoError("checkpoint: truncated record name");
    if (name != entry.name)
      throw IoError("checkpoint: record '" + name + "' where model expects '" +
                    entry.name + "'");
    const uint32_t ndim = get_u32(is, "record rank");
    Shape shape(ndim);
    for (uint32_t d = 0; d < ndim; ++d)
      shape[d] = int64_t(get_u64(is, "record extent"));
    if (shape != entry.value.shape())
      throw IoError("checkpoint: shape mismatch for '" + name + "': file " +
                    shape_str(shape) + " vs model " +
                    shape_str(entry.value.shape()));
    auto& payload = payloads[r];
    payload.resize(size_t(numel_of(shape)));
    for (double& v : payload) v = get_f64(is, "record payload");
  }
  for (uint32_t r = 0; r < count; ++r) {
    auto dst = params.at(r).value.data();
    std::copy(payloads[r].begin(), payloads[r].end(), dst.begin());
  }
  return digest;
}

}  // namespace mctnet

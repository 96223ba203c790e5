#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "mctnet/nn.hpp"

namespace mctnet {

// Flat binary container, little-endian throughout:
//   magic "MCTCKPT1" (8 bytes)
//   u32   format version (1)
//   u64   config digest
//   u32   record count
//   per record: u32 name length, name bytes, u32 ndim, i64 dims[ndim],
//               f64 values[prod(dims)]
// Records appear in parameter-store order and cover every entry, including
// non-trainable buffers such as batch-norm running statistics.

void save_checkpoint(const ParameterStore& params, uint64_t config_digest,
                     const std::string& path);

/// Loads records into an already-constructed store; names, shapes and order
/// must match exactly. When expected_digest is set, a mismatch with the
/// stored digest raises ConfigError before any state is touched.
/// Returns the stored digest.
uint64_t load_checkpoint(ParameterStore& params, const std::string& path,
                         std::optional<uint64_t> expected_digest);

uint64_t peek_checkpoint_digest(const std::string& path);

}  // namespace mctnet

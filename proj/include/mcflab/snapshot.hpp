#pragma once

// Binary checkpoint of a rescaled run: enough to continue it bit-for-bit.
//
// Layout (little endian): magic "MCFLABCK", u32 version, u32 crc32 of the
// payload, u64 payload length, payload. The payload holds the config JSON
// and its hash, n and N, the cursor, and the raw trace so far.

#include <cstdint>
#include <string>
#include <vector>

#include "mcflab/flow.hpp"

namespace mcflab {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string config_json;
  std::uint32_t config_hash = 0;
  int n = 1, N = 0;
  RescaledCursor cursor;
  FlowTrace raw;
};

std::uint32_t crc32_of(const std::string& bytes);

std::string encode_checkpoint(const Checkpoint& ck);
/// Throws CorruptSnapshot (bad magic, length, checksum) or VersionMismatch.
Checkpoint decode_checkpoint(const std::string& bytes);

/// temp file in the same directory, then rename.
void write_file_atomic(const std::string& path, const std::string& bytes);
std::string read_file(const std::string& path);

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace mcflab

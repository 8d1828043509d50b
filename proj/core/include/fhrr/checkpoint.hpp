#pragma once

// Binary parameter container:
//   "FHRRCKPT" | u32 version | u64 metadata bytes | metadata (JSON text)
//   | u64 array count | per array: u32 name bytes, name, u8 dtype (1 = f64),
//     u32 rank, u64 dims[rank], little-endian f64 payload
// Complex parameters are stored as two arrays, "<name>.re" and "<name>.im".

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fhrr/parameter.hpp"

namespace fhrr::ckpt {

inline constexpr char kMagic[8] = {'F', 'H', 'R', 'R', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kVersion = 1;

struct NamedArray {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::vector<double> data;
};

struct Checkpoint {
  std::string metadata;
  std::vector<NamedArray> arrays;

  const NamedArray* find(const std::string& name) const;
};

Checkpoint snapshot(std::string metadata, std::span<const ad::Parameter* const> params);

std::vector<std::uint8_t> serialize(const Checkpoint& c);
// Throws Error(Format) on a malformed container.
Checkpoint deserialize(std::span<const std::uint8_t> bytes);

void save(const std::filesystem::path& path, const Checkpoint& c);
// Throws Error(DataNotFound) when the file is missing.
Checkpoint load(const std::filesystem::path& path);

// Copies arrays into parameters by name. Throws Error(CheckpointMismatch) on
// a missing array or a shape difference.
void restore(const Checkpoint& c, std::span<ad::Parameter* const> params);

}  // namespace fhrr::ckpt

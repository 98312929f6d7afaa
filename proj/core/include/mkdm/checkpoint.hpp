#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mkdm/tensor.hpp"

namespace mkdm {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor value;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

/// Named float tensors plus a JSON echo of the configuration that produced them.
///
/// Layout, all integers little-endian:
///   "MKDM" u32 version u32 count
///   count × { u16 name_len, name, u8 rank, rank × u64 dim, u8 dtype (0 = f32), payload }
///   u32 config_len, config JSON (UTF-8)
struct Checkpoint {
  std::vector<NamedTensor> tensors;
  nlohmann::json config = nlohmann::json::object();

  const NamedTensor* find(const std::string& name) const;
  const NamedTensor& at(const std::string& name) const;  // CheckpointError(mismatch) when absent
};

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
/// Parses the whole buffer before returning; throws CheckpointError on any defect.
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mkdm

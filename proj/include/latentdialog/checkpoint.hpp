#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "latentdialog/autodiff/params.hpp"

namespace ld {

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view bytes);

enum class CheckpointKind : std::uint32_t { vae = 1, gan = 2 };

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Versioned parameter container shared by the VAE and GAN stages.
///
/// Byte layout (all integers little-endian, strings as u64 length + bytes):
///
///   magic        8 bytes  "LDCKPT\0\0"
///   version      u32      currently 1
///   kind         u32      1 = VAE, 2 = GAN
///   seed         u64      global seed of the producing run
///   config       string   effective configuration as JSON
///   vocab_hash   string   SHA-256 of the serialized vocabulary
///   parent_hash  string   GAN: SHA-256 of the VAE checkpoint file; VAE: empty
///   group_count  u64
///   per group:   name string, tensor_count u64, then per tensor:
///                name string, trainable u8, rows u64, cols u64,
///                rows·cols IEEE-754 binary64 values, row-major
///
/// See docs/checkpoint-format.md.
struct Checkpoint {
  CheckpointKind kind = CheckpointKind::vae;
  std::uint64_t seed = 0;
  std::string config_json;
  std::string vocab_hash;
  std::string parent_hash;
  std::vector<std::pair<std::string, ad::ParamSet>> groups;

  const ad::ParamSet& group(std::string_view name) const;
  bool has_group(std::string_view name) const;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes);

/// Writes the checkpoint and returns the SHA-256 of the written bytes.
std::string save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

struct LoadedCheckpoint {
  Checkpoint checkpoint;
  std::string file_hash;
};
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace ld

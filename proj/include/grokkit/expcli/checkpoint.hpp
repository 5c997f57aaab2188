#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "grokkit/models.hpp"
#include "grokkit/nd/tensor.hpp"

// Binary model checkpoints. Layout, all integers little-endian:
//   "GRKKCKPT"  u32 version  u32 real width (4 or 8)  u64 FNV-1a of the spec JSON
//   u64 spec length, spec JSON bytes
//   u32 group count, then per group:
//     u32 name length, name, u8 flags (bit 0 trainable, bit 1 decay exempt),
//     u64 rows, u64 cols, rows * cols reals in row-major order
// The spec JSON makes a file loadable without the config that produced it.
namespace grokkit::expcli {

inline constexpr char kCheckpointMagic[8] = {'G', 'R', 'K', 'K', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct StoredGroup {
  std::string name;
  bool trainable = true;
  bool decay_exempt = false;
  nd::Tensor2<double> value;  ///< widened to double on load
};

struct CheckpointContents {
  std::uint32_t real_bytes = 4;
  models::ModelSpec spec;
  std::vector<StoredGroup> groups;
};

template <typename T>
void save_checkpoint(const models::Model<T>& model, const std::filesystem::path& path);

/// Throws FormatError on a bad magic or a spec that fails its digest or
/// parse, VersionError on an unknown version, TruncationError when the file
/// ends early. Nothing is returned on failure.
CheckpointContents read_checkpoint(const std::filesystem::path& path);

/// Rebuilds the model from the stored spec and restores every group
/// bitwise. The stored real width must match T.
template <typename T>
std::unique_ptr<models::Model<T>> load_checkpoint(const std::filesystem::path& path);

}  // namespace grokkit::expcli

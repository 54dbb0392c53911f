#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include "ic/seq2seq.hpp"

namespace ic {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary container, little-endian:
///   "ICKP" | u32 version | str config-json | u64 epoch
///   | tensors(params) | u64 adam-step | tensors(m) | tensors(v) | str rng-state
/// where str = u64 length + bytes and tensors = u64 count followed by
/// (str name, u64 rows, u64 cols, rows*cols f64 in row-major order).
std::string serialize_trainer(const Trainer& trainer);
Trainer deserialize_trainer(std::string_view bytes);

/// Writes through a temporary file and renames it into place.
void save_checkpoint(const Trainer& trainer, const std::filesystem::path& path);
Trainer load_checkpoint(const std::filesystem::path& path);

/// Atomic whole-file replacement used by every persistent artifact.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace ic

#pragma once

#include <filesystem>

#include "common/error.hpp"
#include "common/json_lines.hpp"
#include "tinyformer/params.hpp"

namespace eemp {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Container layout, all integers little-endian:
///   "EEMP" | u32 version | u32 header length | header JSON (UTF-8)
///   | u32 tensor count | per tensor: u32 name length, name, u32 rank,
///   u64 dims[rank], f32 payload[prod(dims)]
/// Tensors are written in name order.
struct Checkpoint {
  json header;
  TensorMap tensors;
};

class CheckpointError : public Error {
 public:
  enum class Reason { bad_magic, version_mismatch, truncated, shape_mismatch, malformed };

  CheckpointError(Reason reason, const std::string& message) : Error(ErrorKind::data, message), reason_(reason) {}
  Reason reason() const { return reason_; }

 private:
  Reason reason_;
};

std::string encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(std::string_view bytes);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Header: {"kind": "model", "config": {...}} plus optional extra metadata.
void save_checkpoint(const Parameters& params, const std::filesystem::path& path, const json& metadata = {});
Parameters load_checkpoint(const std::filesystem::path& path);

/// Rounds every entry to the nearest 32-bit float, i.e. what a save/load cycle yields.
void round_to_f32(TensorMap& tensors);

}  // namespace eemp

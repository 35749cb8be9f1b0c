#pragma once

#include <cstdint>
#include <string>

#include "sps/model.hpp"

namespace sps {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary archive: magic "SPSCKPT\0", format version, the model config as
/// key=value text, then every weight array by canonical name followed by
/// the adapters as "<host>.lora.A" / "<host>.lora.B". Arrays are stored as
/// (name, rows, cols, little-endian float32 data).
std::string serialize_model(const Model& model);
Model deserialize_model(const std::string& bytes);

void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

/// FNV-1a digest of the serialized model, as 16 hex digits.
std::string model_digest(const Model& model);
/// Same digest over an arbitrary file.
std::string file_digest(const std::string& path);

}  // namespace sps

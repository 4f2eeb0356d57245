#pragma once

#include <string>

#include "hgnn/param_store.hpp"

namespace hgnn {

// Checkpoint container layout:
//   bytes 0..7   magic "HGNNCKPT"
//   u32 LE       version (currently 1)
//   u32 LE       index length in bytes
//   index        UTF-8 JSON object {name: {"shape": [...], "offset": N}},
//                offsets relative to the start of the payload section
//   payload      raw little-endian IEEE-754 float64 arrays
// Round-trips are bit-exact.
void save_checkpoint(const ParamStore& store, const std::string& path);
ParamStore load_checkpoint(const std::string& path);

}  // namespace hgnn

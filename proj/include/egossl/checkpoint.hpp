#pragma once

#include <filesystem>

#include "egossl/param_store.hpp"

namespace egossl::io {

// Binary tensor archive: "EGOS" magic, a little-endian format version and
// entry count, then each named tensor as (name, rank, dims, float32 payload).
// Values are narrowed to float32 on save and widened back to double on load.
void save_checkpoint(const std::filesystem::path& path, const numerics::ParamStore& params);
numerics::ParamStore load_checkpoint(const std::filesystem::path& path);

}  // namespace egossl::io

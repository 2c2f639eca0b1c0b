#pragma once

#include <filesystem>

#include "meterfl/model.hpp"

namespace meterfl {

// Flat little-endian layout: "MFLC" magic, u32 format version, the model
// config, then every parameter tensor as raw 64-bit floats in the fixed
// order (per layer: W_f b_f W_i b_i W_c b_c W_o b_o, then W_d b_d).
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

} // namespace meterfl

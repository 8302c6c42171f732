#pragma once

#include <filesystem>

#include "ediv/image.hpp"

namespace ediv::image {

/// Reads an 8-bit PNG. Gray and gray+alpha load as 1 channel, everything else
/// as RGB; alpha is composited onto black. Throws std::runtime_error.
RasterImage read_png(const std::filesystem::path& path);

/// Writes 8-bit gray or RGB; samples are rounded to the nearest byte.
void write_png(const std::filesystem::path& path, const RasterImage& img);

}  // namespace ediv::image

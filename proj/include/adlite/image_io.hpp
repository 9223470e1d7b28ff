#pragma once

#include <filesystem>

#include "adlite/data.hpp"

namespace adlite {

bool png_supported();
bool jpeg_supported();

/// Decodes PNG, JPEG (when built with the codecs) or binary PGM/PPM into a
/// 1- or 3-channel planar image. Throws IoError if the file cannot be read
/// and DatasetError if its contents cannot be decoded.
Image decode_image(const std::filesystem::path& path);

/// Writes .png (libpng) or .pgm/.ppm depending on the extension.
void write_image(const std::filesystem::path& path, const Image& img);

}  // namespace adlite

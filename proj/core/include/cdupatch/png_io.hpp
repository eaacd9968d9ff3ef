#pragma once

#include <filesystem>

#include "cdupatch/image.hpp"

namespace cdupatch {

/// Reads an 8-bit gray, gray+alpha, RGB or RGBA PNG. Values are mapped to v/255; alpha is
/// dropped. Throws IoError when the file is missing, FormatError when it is not a PNG.
Image read_png(const std::filesystem::path& path);

/// Writes a 1- or 3-channel image as 8-bit PNG, quantising round(clamp(v,0,1)*255).
void write_png(const Image& img, const std::filesystem::path& path);

/// The value write_png would store for v, divided back by 255.
double quantize_8bit(double v);

}  // namespace cdupatch

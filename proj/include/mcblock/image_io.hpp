#pragma once

#include <string>

#include "mcblock/image.hpp"

namespace mcblock {

// Reads an 8-bit RGB image. The format is sniffed from the file contents:
// PNG (palette/gray/alpha inputs are normalized to RGB, 16-bit rejected)
// or binary PPM (P6, maxval 255). Values are scaled to [0, 1].
Image load_image(const std::string& path);

// Writes an image as 8-bit RGB, quantizing with round-to-nearest. The
// format follows the file extension: .png or .ppm. Writing is
// deterministic, so save -> load -> save reproduces the file byte for
// byte.
void save_image(const Image& img, const std::string& path);

void save_png(const Image& img, const std::string& path);
void save_ppm(const Image& img, const std::string& path);

}  // namespace mcblock

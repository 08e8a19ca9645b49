#pragma once

#include <filesystem>

#include "mytm/image.hpp"

namespace mytm {

/// Reads a PNG/JPEG file into a [-1, 1] CHW tensor (RGB order).
ImageTensor load_image(const std::filesystem::path& path);

/// Writes a tensor as 8-bit PNG. Quantization: round((v + 1) * 127.5).
void save_image(const ImageTensor& image, const std::filesystem::path& path);

} // namespace mytm

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "overlap/core.hpp"

namespace overlap {

/// Binary PPM (P6); maxval up to 65535, rescaled to 8 bits.
Image read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Image& image);

/// Binary PGM (P5) as a field of value / maxval.
Field2D read_pgm(const std::filesystem::path& path);
/// Writes round(clamp(v, 0, 1) * 255).
void write_pgm(const std::filesystem::path& path, const Field2D& field);

Image resize_nearest(const Image& image, int width, int height);

/// Regular files in dir with the given extension, sorted by name.
std::vector<std::filesystem::path> list_files(const std::filesystem::path& dir,
                                              const std::string& extension);

}  // namespace overlap

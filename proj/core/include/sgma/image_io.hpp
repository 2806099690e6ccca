#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace sgma {

/// Integer raster as stored on disk: 1 or 3 interleaved channels, 8 or 16 bits.
struct Raster {
    int64_t height = 0;
    int64_t width = 0;
    int channels = 1;
    int bit_depth = 8;
    std::vector<uint16_t> samples;

    uint16_t max_value() const { return bit_depth == 16 ? 65535 : 255; }
};

/// Reads PNG (.png) or binary PGM/PPM (.pgm, .ppm, .pnm). Throws IngestionError.
Raster read_raster(const std::filesystem::path& path);

/// Writes PNG or PGM/PPM depending on the extension.
void write_raster(const std::filesystem::path& path, const Raster& raster);

}  // namespace sgma

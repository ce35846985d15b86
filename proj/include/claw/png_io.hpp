#pragma once

// Thin libpng wrappers. Writer settings are pinned so identical pixels always
// produce identical bytes.

#include <cstdint>
#include <string>
#include <vector>

#include "claw/tensor.hpp"

namespace claw {

/// 8-bit interleaved image; channels is 1 (gray) or 3 (rgb).
struct ImageU8 {
    index_t height = 0;
    index_t width = 0;
    index_t channels = 0;
    std::vector<std::uint8_t> pixels;

    std::uint8_t& at(index_t y, index_t x, index_t c) {
        return pixels[static_cast<std::size_t>((y * width + x) * channels + c)];
    }
    std::uint8_t at(index_t y, index_t x, index_t c) const {
        return pixels[static_cast<std::size_t>((y * width + x) * channels + c)];
    }
};

/// Reads an 8-bit PNG as gray (1 channel) or rgb (3 channels); palette images
/// expand to rgb, 16-bit files strip to 8, alpha is rejected.
ImageU8 read_png(const std::string& path);

void write_png_gray8(const std::string& path, index_t height, index_t width,
                     const std::uint8_t* data);

void write_png_rgb8(const std::string& path, index_t height, index_t width,
                    const std::uint8_t* data);

/// 16-bit grayscale, for probability maps without visible quantization.
void write_png_gray16(const std::string& path, index_t height, index_t width,
                      const std::uint16_t* data);

}  // namespace claw

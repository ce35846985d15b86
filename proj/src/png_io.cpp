#include "claw/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <stdexcept>

namespace claw {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_png_impl(const std::string& path, index_t height, index_t width, int color_type,
                    int bit_depth, const std::uint8_t* data, std::size_t row_bytes) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) {
        throw std::runtime_error("write_png: cannot open " + path);
    }
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("write_png: png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("write_png: png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("write_png: encoding failed for " + path);
    }
    png_init_io(png, fp.get());
    // Pinned encoder settings: fixed compression level and filter so equal
    // pixels yield byte-identical files.
    png_set_compression_level(png, 6);
    png_set_filter(png, 0, PNG_FILTER_NONE);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
                 bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    if (bit_depth == 16) {
        png_set_swap(png);  // in-memory data is host (little) endian
    }
    std::vector<png_bytep> rows(static_cast<std::size_t>(height));
    for (index_t y = 0; y < height; ++y) {
        rows[static_cast<std::size_t>(y)] =
            const_cast<png_bytep>(data + static_cast<std::size_t>(y) * row_bytes);
    }
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace

ImageU8 read_png(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) {
        throw std::runtime_error("read_png: cannot open " + path);
    }
    png_byte header[8];
    if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8) != 0) {
        throw std::runtime_error("read_png: not a PNG file: " + path);
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("read_png: png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw std::runtime_error("read_png: png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("read_png: decoding failed for " + path);
    }
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const int color_type = png_get_color_type(png, info);
    const int bit_depth = png_get_bit_depth(png, info);
    if (color_type & PNG_COLOR_MASK_ALPHA) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("read_png: alpha channels are not supported: " + path);
    }
    if (bit_depth == 16) png_set_strip_16(png);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    png_read_update_info(png, info);

    ImageU8 img;
    img.height = static_cast<index_t>(png_get_image_height(png, info));
    img.width = static_cast<index_t>(png_get_image_width(png, info));
    img.channels = static_cast<index_t>(png_get_channels(png, info));
    if (img.channels != 1 && img.channels != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("read_png: unsupported channel count in " + path);
    }
    img.pixels.resize(static_cast<std::size_t>(img.height * img.width * img.channels));
    std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
    const std::size_t row_bytes = static_cast<std::size_t>(img.width * img.channels);
    for (index_t y = 0; y < img.height; ++y) {
        rows[static_cast<std::size_t>(y)] = img.pixels.data() + static_cast<std::size_t>(y) * row_bytes;
    }
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void write_png_gray8(const std::string& path, index_t height, index_t width,
                     const std::uint8_t* data) {
    write_png_impl(path, height, width, PNG_COLOR_TYPE_GRAY, 8, data,
                   static_cast<std::size_t>(width));
}

void write_png_rgb8(const std::string& path, index_t height, index_t width,
                    const std::uint8_t* data) {
    write_png_impl(path, height, width, PNG_COLOR_TYPE_RGB, 8, data,
                   static_cast<std::size_t>(width * 3));
}

void write_png_gray16(const std::string& path, index_t height, index_t width,
                      const std::uint16_t* data) {
    write_png_impl(path, height, width, PNG_COLOR_TYPE_GRAY, 16,
                   reinterpret_cast<const std::uint8_t*>(data),
                   static_cast<std::size_t>(width * 2));
}

}  // namespace claw

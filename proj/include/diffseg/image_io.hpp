#pragma once

#include <png.h>

#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "diffseg/common.hpp"
#include "diffseg/tensor.hpp"

namespace diffseg {

// 8-bit raster as stored on disk.
struct PngImage {
    int height = 0, width = 0, channels = 0;  // channels: 1 (gray) or 3 (rgb)
    std::vector<uint8_t> data;                // row-major, interleaved
};

inline PngImage read_png(const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw io_error("cannot open PNG for reading: " + path);

    png_structp png =
        png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw io_error("libpng failed reading " + path);
    }
    png_init_io(png, fp);
    png_read_info(png, info);

    png_uint_32 w = png_get_image_width(png, info);
    png_uint_32 h = png_get_image_height(png, info);
    int color = png_get_color_type(png, info);
    int depth = png_get_bit_depth(png, info);

    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    int ch = static_cast<int>(png_get_channels(png, info));
    PngImage out;
    out.height = static_cast<int>(h);
    out.width = static_cast<int>(w);
    out.channels = ch;
    out.data.resize(static_cast<size_t>(h) * w * ch);

    std::vector<png_bytep> rows(h);
    for (png_uint_32 y = 0; y < h; ++y)
        rows[y] = out.data.data() + static_cast<size_t>(y) * w * ch;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return out;
}

inline void write_png(const std::string& path, const PngImage& img) {
    require(img.channels == 1 || img.channels == 3,
            "PNG writer supports 1 or 3 channels");
    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw io_error("cannot open PNG for writing: " + path);

    png_structp png =
        png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw io_error("libpng failed writing " + path);
    }
    png_init_io(png, fp);
    int color = img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
    png_set_IHDR(png, info, img.width, img.height, 8, color,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    // No ancillary chunks: output bytes depend only on pixel content.
    png_write_info(png, info);
    std::vector<png_const_bytep> rows(img.height);
    for (int y = 0; y < img.height; ++y)
        rows[y] = img.data.data() +
                  static_cast<size_t>(y) * img.width * img.channels;
    png_write_image(png, const_cast<png_bytepp>(rows.data()));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

inline Image png_to_image(const PngImage& p) {
    Image img(p.height, p.width, p.channels);
    for (size_t i = 0; i < p.data.size(); ++i)
        img.data[i] = static_cast<float>(p.data[i]) / 255.0f;
    return img;
}

inline PngImage image_to_png(const Image& img) {
    PngImage p;
    p.height = img.height;
    p.width = img.width;
    p.channels = img.channels;
    p.data.resize(img.data.size());
    for (size_t i = 0; i < img.data.size(); ++i) {
        float v = std::min(1.0f, std::max(0.0f, img.data[i]));
        p.data[i] = static_cast<uint8_t>(std::lround(v * 255.0f));
    }
    return p;
}

// Masks persist as {0, 255} grayscale.
inline void write_mask_png(const std::string& path, const BinaryMask& m) {
    PngImage p;
    p.height = m.height;
    p.width = m.width;
    p.channels = 1;
    p.data.resize(m.data.size());
    for (size_t i = 0; i < m.data.size(); ++i) p.data[i] = m.data[i] ? 255 : 0;
    write_png(path, p);
}

inline BinaryMask read_mask_png(const std::string& path) {
    PngImage p = read_png(path);
    BinaryMask m(p.height, p.width);
    size_t stride = p.channels;
    for (size_t i = 0; i < m.data.size(); ++i)
        m.data[i] = p.data[i * stride] >= 128 ? 1 : 0;
    return m;
}

}  // namespace diffseg

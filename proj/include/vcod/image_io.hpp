#pragma once

// 8-bit single-channel PNG read/write through libpng's simplified API.
// Colour or 16-bit inputs are converted to 8-bit grey on read.

#include <png.h>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vcod/errors.hpp"

namespace vcod {

struct GrayImage {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> pixels;  // row-major
};

inline GrayImage read_png_gray(const std::filesystem::path& path) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
        throw FormatError("cannot read PNG " + path.string() + ": " + image.message);
    }
    image.format = PNG_FORMAT_GRAY;
    GrayImage out{image.height, image.width, std::vector<std::uint8_t>(PNG_IMAGE_SIZE(image))};
    if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw FormatError("cannot decode PNG " + path.string() + ": " + msg);
    }
    return out;
}

inline void write_png_gray(const std::filesystem::path& path, const GrayImage& img) {
    if (img.pixels.size() != img.height * img.width || img.height == 0 || img.width == 0) {
        throw InputError("write_png_gray: pixel buffer does not match " + std::to_string(img.height) + "x" +
                         std::to_string(img.width));
    }
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width);
    image.height = static_cast<png_uint_32>(img.height);
    image.format = PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&image, path.string().c_str(), 0, img.pixels.data(), 0, nullptr)) {
        throw FormatError("cannot write PNG " + path.string() + ": " + image.message);
    }
}

}  // namespace vcod

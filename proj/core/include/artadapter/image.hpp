#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "artadapter/tensor.hpp"

namespace artadapter {

// Interleaved 8-bit RGB raster.
struct Image {
    int64_t width = 0;
    int64_t height = 0;
    std::vector<uint8_t> rgb;  // height * width * 3

    int64_t pixel_count() const { return width * height; }
};

// Decodes PNG or JPEG, dispatching on the file's magic bytes. Anything else
// is a FormatError; unreadable paths are IoError.
Image read_image(const std::string& path);

// Writes an RGB PNG. `text` entries become uncompressed tEXt chunks, written
// in map order.
void write_png(const std::string& path, const Image& img,
               const std::map<std::string, std::string>& text = {});

// Returns the tEXt metadata of a PNG without keeping the pixel data.
std::map<std::string, std::string> read_png_text(const std::string& path);

// Conversions between rasters and (3, H, W) tensors with values in [0, 1].
Tensor image_to_tensor01(const Image& img);
Image tensor01_to_image(const Tensor& t);

// Bilinear resample of a (3, H, W) tensor; corners align with pixel centers.
Tensor resize_bilinear01(const Tensor& x, int64_t out_h, int64_t out_w);
Tensor center_crop01(const Tensor& x, int64_t size);

// Style-reference preprocessing: scale the shorter side to `target`, then
// center-crop a square of that size.
Tensor style_preprocess01(const Tensor& x, int64_t target = 256);

}  // namespace artadapter

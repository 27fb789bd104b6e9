#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "tscam/tensor.hpp"

namespace tscam {

// 8-bit interleaved RGB raster.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;  // 3 * width * height, row-major

    std::uint8_t& at(int y, int x, int c) {
        return rgb[static_cast<std::size_t>((y * width + x) * 3 + c)];
    }
    std::uint8_t at(int y, int x, int c) const {
        return rgb[static_cast<std::size_t>((y * width + x) * 3 + c)];
    }
};

Image read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Image& img);

// Writes a [H,W] map with values in [0,1] as binary PGM, round(255*v).
void write_pgm(const std::filesystem::path& path, const Tensor<double>& map01);

// [3,H,W] tensor with values in [0,1].
Tensor<float> image_to_tensor(const Image& img);
Image tensor_to_image(const Tensor<float>& chw);

// Corner-aligned bilinear resampling of a planar [C,H,W] tensor.
template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& chw, index_t out_h, index_t out_w);

}  // namespace tscam

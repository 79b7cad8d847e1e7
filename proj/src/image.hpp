#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace percept {

// 8-bit RGB frame, interleaved row-major (r,g,b per pixel).
struct ImageBuffer {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    std::uint8_t channel(int x, int y, int c) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
};

// Binary PPM (P6, maxval 255). Header tokens may be separated by any
// whitespace and '#' comments per the format's convention.
ImageBuffer decode_ppm(const std::uint8_t* bytes, std::size_t len);
ImageBuffer decode_ppm(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_ppm(const ImageBuffer& img);
ImageBuffer load_ppm(const std::string& path);
void save_ppm(const ImageBuffer& img, const std::string& path);

// Bilinear resample with half-pixel sample centers: source position
// (dst+0.5)*scale-0.5, clamped at the borders, channels independent,
// result rounded half-up to 8 bits.
ImageBuffer resize_bilinear(const ImageBuffer& src, int out_w, int out_h);

// Channel-first float tensor [3,H,W] with values scaled to [0,1] by /255.
Tensor to_input_tensor(const ImageBuffer& img);

}  // namespace percept

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ntc/tensor.hpp"

// 8-bit RGB images, binary PPM (P6) I/O, reflect padding to block multiples,
// and conversion to/from [0,1] float tensors.

namespace ntc {

struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;  // interleaved, row-major, 3 bytes per pixel

    Image() = default;
    Image(int w, int h) : width(w), height(h), rgb(static_cast<size_t>(w) * h * 3, 0) {
        if (w < 1 || h < 1) throw UsageError("image: extents must be >= 1");
    }

    std::uint8_t& at(int x, int y, int c) {
        return rgb[(static_cast<size_t>(y) * width + x) * 3 + c];
    }
    std::uint8_t at(int x, int y, int c) const {
        return rgb[(static_cast<size_t>(y) * width + x) * 3 + c];
    }
    std::int64_t pixels() const { return static_cast<std::int64_t>(width) * height; }
};

/// Binary P6, maxval 255 only; whitespace/comment handling per the PPM
/// grammar. Errors carry the byte offset of the problem.
Image read_ppm(const std::string& path);
void write_ppm(const Image& img, const std::string& path);

Image decode_ppm(const std::vector<std::uint8_t>& bytes, const std::string& name);
std::vector<std::uint8_t> encode_ppm(const Image& img);

/// Reflect index for pos in [0, 2*extent-2...] cycles: maps any pos >= 0 onto
/// [0, extent) by bouncing off the edges without repeating them
/// (0,1,...,e-1,e-2,...,1,0,1,...). Total for any pad amount.
int reflect_index(int pos, int extent);

/// Pads right/bottom with reflected samples until both extents are multiples
/// of m. Already-multiple inputs are returned unchanged.
Image pad_to_multiple(const Image& img, int m);

/// Top-left crop back to the original dimensions.
Image crop(const Image& img, int width, int height);

/// [0,1] scaling into a [1,3,H,W] tensor and back (round + clamp to 8-bit).
Tensor<float> to_tensor(const Image& img);
Image from_tensor(const Tensor<float>& t);

/// 10*log10(255^2/MSE) over all pixels and channels; identical images return
/// +infinity (the lossless sentinel).
double psnr(const Image& a, const Image& b);

}  // namespace ntc

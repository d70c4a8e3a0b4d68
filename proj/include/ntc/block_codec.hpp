#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "ntc/image.hpp"

// Self-contained lossy image codec standing in for a traditional video-codec
// intra frame: BT.601 full-range 4:2:0, 8x8 orthonormal DCT, uniform
// quantization with a fixed frequency-weight table, zigzag + run-length
// symbols, DEFLATE, and bisection-based per-image rate targeting.

namespace ntc {

inline constexpr float kQMin = 0.1f;
inline constexpr float kQMax = 512.0f;

/// Quantization step for coefficient (u,v) is q * kFreqWeight[u][v]:
/// DC weight 1, AC weights increasing with frequency index u+v.
inline constexpr double kFreqWeight[8][8] = {
    {1.0, 1.4, 1.8, 2.2, 2.6, 3.0, 3.4, 3.8},
    {1.4, 1.8, 2.2, 2.6, 3.0, 3.4, 3.8, 4.2},
    {1.8, 2.2, 2.6, 3.0, 3.4, 3.8, 4.2, 4.6},
    {2.2, 2.6, 3.0, 3.4, 3.8, 4.2, 4.6, 5.0},
    {2.6, 3.0, 3.4, 3.8, 4.2, 4.6, 5.0, 5.4},
    {3.0, 3.4, 3.8, 4.2, 4.6, 5.0, 5.4, 5.8},
    {3.4, 3.8, 4.2, 4.6, 5.0, 5.4, 5.8, 6.2},
    {3.8, 4.2, 4.6, 5.0, 5.4, 5.8, 6.2, 6.6},
};

struct YCbCr420 {
    int width = 0, height = 0;        // luma dimensions (even)
    std::vector<std::uint8_t> y;      // width*height
    std::vector<std::uint8_t> cb, cr; // (width/2)*(height/2) each
};

/// BT.601 full-range; chroma is box-averaged 2x2 in float space before
/// 8-bit rounding. Upsampling is nearest-neighbor. RGB clamped to [0,255].
YCbCr420 rgb_to_ycbcr420(const Image& img);
Image ycbcr420_to_rgb(const YCbCr420& planes);

using Block8 = std::array<double, 64>;  // row-major 8x8

/// Orthonormal type-II DCT and inverse; Parseval holds within 1e-6.
Block8 dct8(const Block8& block);
Block8 idct8(const Block8& block);

/// JPEG zigzag scan order: kZigzag[i] = row-major index of the i-th
/// coefficient in ascending-frequency order.
extern const std::array<int, 64> kZigzag;

struct EncodedImage {
    int width = 0, height = 0;  // padded dimensions, multiples of 16
    float q = 1.0f;
    std::vector<std::uint8_t> streams[3];  // DEFLATE symbol streams: Y, Cb, Cr
};

/// ".bci" container: magic "BCI1", version u8=1, width u32 LE, height u32 LE,
/// q f32 LE, then three u32-length-prefixed DEFLATE streams (Y, Cb, Cr).
std::vector<std::uint8_t> serialize_encoded(const EncodedImage& enc);
EncodedImage parse_encoded(const std::vector<std::uint8_t>& bytes);

/// Dimensions must be multiples of 16; q in [kQMin, kQMax].
std::vector<std::uint8_t> encode_image(const Image& img, float q);
Image decode_image(const std::vector<std::uint8_t>& bytes);

struct QChoice {
    float q = kQMax;
    double bpp = 0;    // 8 * bytes / (img.width * img.height)
    bool flagged = false;  // target below the q=kQMax floor
    std::vector<std::uint8_t> encoded;
};

/// Bisection on q (at most 40 iterations) toward target_bpp, never
/// overshooting: the returned iterate always satisfies bpp <= target unless
/// even q=kQMax is too large, which is flagged. Early exit once an iterate is
/// within tol of the target from below.
QChoice choose_q_for_bpp(const Image& img, double target_bpp, double tol);

}  // namespace ntc

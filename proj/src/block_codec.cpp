#include "ntc/block_codec.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "ntc/bitio.hpp"
#include "ntc/deflate.hpp"

namespace ntc {

namespace {

inline std::uint8_t clamp_u8(double v) {
    const double r = std::round(v);
    return static_cast<std::uint8_t>(r < 0 ? 0 : (r > 255 ? 255 : r));
}

}  // namespace

YCbCr420 rgb_to_ycbcr420(const Image& img) {
    if (img.width % 2 != 0 || img.height % 2 != 0)
        throw UsageError("rgb_to_ycbcr420: dimensions must be even");
    YCbCr420 p;
    p.width = img.width;
    p.height = img.height;
    p.y.resize(static_cast<size_t>(img.width) * img.height);
    const int cw = img.width / 2, ch = img.height / 2;
    p.cb.resize(static_cast<size_t>(cw) * ch);
    p.cr.resize(static_cast<size_t>(cw) * ch);

    std::vector<double> cbf(p.y.size()), crf(p.y.size());
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const double r = img.at(x, y, 0), g = img.at(x, y, 1), b = img.at(x, y, 2);
            const size_t i = static_cast<size_t>(y) * img.width + x;
            p.y[i] = clamp_u8(0.299 * r + 0.587 * g + 0.114 * b);
            cbf[i] = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b;
            crf[i] = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b;
        }
    for (int y = 0; y < ch; ++y)
        for (int x = 0; x < cw; ++x) {
            const size_t i00 = static_cast<size_t>(2 * y) * img.width + 2 * x;
            const size_t i10 = i00 + static_cast<size_t>(img.width);
            p.cb[static_cast<size_t>(y) * cw + x] =
                clamp_u8((cbf[i00] + cbf[i00 + 1] + cbf[i10] + cbf[i10 + 1]) / 4.0);
            p.cr[static_cast<size_t>(y) * cw + x] =
                clamp_u8((crf[i00] + crf[i00 + 1] + crf[i10] + crf[i10 + 1]) / 4.0);
        }
    return p;
}

Image ycbcr420_to_rgb(const YCbCr420& p) {
    if (p.width % 2 != 0 || p.height % 2 != 0)
        throw UsageError("ycbcr420_to_rgb: dimensions must be even");
    Image img(p.width, p.height);
    const int cw = p.width / 2;
    for (int y = 0; y < p.height; ++y)
        for (int x = 0; x < p.width; ++x) {
            const double Y = p.y[static_cast<size_t>(y) * p.width + x];
            const size_t ci = static_cast<size_t>(y / 2) * cw + x / 2;  // nearest neighbor
            const double cb = static_cast<double>(p.cb[ci]) - 128.0;
            const double cr = static_cast<double>(p.cr[ci]) - 128.0;
            img.at(x, y, 0) = clamp_u8(Y + 1.402 * cr);
            img.at(x, y, 1) = clamp_u8(Y - 0.344136 * cb - 0.714136 * cr);
            img.at(x, y, 2) = clamp_u8(Y + 1.772 * cb);
        }
    return img;
}

namespace {

using Mat8 = Eigen::Matrix<double, 8, 8, Eigen::RowMajor>;

const Mat8& dct_basis() {
    static const Mat8 basis = [] {
        Mat8 m;
        const double pi = std::acos(-1.0);
        for (int u = 0; u < 8; ++u) {
            const double a = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
            for (int x = 0; x < 8; ++x) m(u, x) = a * std::cos((2 * x + 1) * u * pi / 16.0);
        }
        return m;
    }();
    return basis;
}

}  // namespace

Block8 dct8(const Block8& block) {
    const Mat8& D = dct_basis();
    Eigen::Map<const Mat8> b(block.data());
    Block8 out;
    Eigen::Map<Mat8>(out.data()) = D * b * D.transpose();
    return out;
}

Block8 idct8(const Block8& block) {
    const Mat8& D = dct_basis();
    Eigen::Map<const Mat8> c(block.data());
    Block8 out;
    Eigen::Map<Mat8>(out.data()) = D.transpose() * c * D;
    return out;
}

const std::array<int, 64> kZigzag = {
    0,  1,  8,  16, 9,  2,  3,  10, 17, 24, 32, 25, 18, 11, 4,  5,
    12, 19, 26, 33, 40, 48, 41, 34, 27, 20, 13, 6,  7,  14, 21, 28,
    35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51,
    58, 59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63};

namespace {

constexpr std::uint8_t kEob = 0xFF;

void put_svarint(std::vector<std::uint8_t>& out, std::int32_t v) {
    // zigzag map then LEB128
    std::uint32_t u = (static_cast<std::uint32_t>(v) << 1) ^ static_cast<std::uint32_t>(v >> 31);
    while (u >= 0x80) {
        out.push_back(static_cast<std::uint8_t>(u) | 0x80);
        u >>= 7;
    }
    out.push_back(static_cast<std::uint8_t>(u));
}

std::int32_t get_svarint(const std::vector<std::uint8_t>& in, size_t& pos, const std::string& name) {
    std::uint32_t u = 0;
    int shift = 0;
    while (true) {
        if (pos >= in.size())
            throw DataError(name + ": truncated varint at symbol offset " + std::to_string(pos));
        const std::uint8_t byte = in[pos++];
        u |= static_cast<std::uint32_t>(byte & 0x7F) << shift;
        if (!(byte & 0x80)) break;
        shift += 7;
        if (shift > 28)
            throw DataError(name + ": varint overflow at symbol offset " + std::to_string(pos));
    }
    return static_cast<std::int32_t>((u >> 1) ^ (~(u & 1) + 1));
}

// One plane -> zigzag run-length symbols. Per 8x8 block: runs of zeros
// followed by a nonzero level (run byte 0..63, then signed varint level);
// a 0xFF byte ends the block early when the remaining coefficients are zero.
std::vector<std::uint8_t> encode_plane(const std::vector<std::uint8_t>& plane, int w, int h,
                                       float q) {
    std::vector<std::uint8_t> symbols;
    Block8 blk;
    for (int by = 0; by < h; by += 8)
        for (int bx = 0; bx < w; bx += 8) {
            for (int i = 0; i < 8; ++i)
                for (int j = 0; j < 8; ++j)
                    blk[static_cast<size_t>(i) * 8 + j] =
                        plane[static_cast<size_t>(by + i) * w + (bx + j)];
            const Block8 coef = dct8(blk);
            std::array<std::int32_t, 64> level;
            for (int i = 0; i < 64; ++i) {
                const int rm = kZigzag[static_cast<size_t>(i)];
                const double step = q * kFreqWeight[rm / 8][rm % 8];
                level[static_cast<size_t>(i)] =
                    static_cast<std::int32_t>(std::lround(coef[static_cast<size_t>(rm)] / step));
            }
            int last_nz = -1;
            for (int i = 0; i < 64; ++i)
                if (level[static_cast<size_t>(i)] != 0) last_nz = i;
            int run = 0;
            for (int i = 0; i <= last_nz; ++i) {
                if (level[static_cast<size_t>(i)] == 0) {
                    ++run;
                    continue;
                }
                symbols.push_back(static_cast<std::uint8_t>(run));
                put_svarint(symbols, level[static_cast<size_t>(i)]);
                run = 0;
            }
            if (last_nz < 63) symbols.push_back(kEob);
        }
    return deflate_bytes(symbols);
}

std::vector<std::uint8_t> decode_plane(const std::vector<std::uint8_t>& stream, int w, int h,
                                       float q, const std::string& name) {
    const std::vector<std::uint8_t> symbols = inflate_bytes(stream);
    std::vector<std::uint8_t> plane(static_cast<size_t>(w) * h);
    size_t pos = 0;
    Block8 coef;
    for (int by = 0; by < h; by += 8)
        for (int bx = 0; bx < w; bx += 8) {
            coef.fill(0.0);
            int i = 0;
            while (i < 64) {
                if (pos >= symbols.size())
                    throw DataError(name + ": truncated block stream at symbol offset " +
                                    std::to_string(pos));
                const std::uint8_t head = symbols[pos];
                if (head == kEob) {
                    ++pos;
                    break;
                }
                ++pos;
                i += head;
                if (i >= 64)
                    throw DataError(name + ": zero run overflows block at symbol offset " +
                                    std::to_string(pos - 1));
                const std::int32_t level = get_svarint(symbols, pos, name);
                const int rm = kZigzag[static_cast<size_t>(i)];
                coef[static_cast<size_t>(rm)] =
                    static_cast<double>(level) * q * kFreqWeight[rm / 8][rm % 8];
                ++i;
            }
            const Block8 pix = idct8(coef);
            for (int r = 0; r < 8; ++r)
                for (int c = 0; c < 8; ++c)
                    plane[static_cast<size_t>(by + r) * w + (bx + c)] =
                        clamp_u8(pix[static_cast<size_t>(r) * 8 + c]);
        }
    if (pos != symbols.size())
        throw DataError(name + ": " + std::to_string(symbols.size() - pos) +
                        " trailing bytes at symbol offset " + std::to_string(pos));
    return plane;
}

void check_codec_input(int width, int height, float q) {
    if (width % 16 != 0 || height % 16 != 0 || width < 16 || height < 16)
        throw UsageError("block codec: dimensions must be positive multiples of 16 (pad first)");
    if (!(q >= kQMin && q <= kQMax))
        throw UsageError("block codec: q must lie in [" + std::to_string(kQMin) + ", " +
                         std::to_string(kQMax) + "]");
}

}  // namespace

std::vector<std::uint8_t> serialize_encoded(const EncodedImage& enc) {
    ByteWriter w;
    w.magic("BCI1");
    w.u8(1);
    w.u32(static_cast<std::uint32_t>(enc.width));
    w.u32(static_cast<std::uint32_t>(enc.height));
    w.f32(enc.q);
    for (const auto& s : enc.streams) {
        w.u32(static_cast<std::uint32_t>(s.size()));
        w.bytes(s);
    }
    return w.take();
}

EncodedImage parse_encoded(const std::vector<std::uint8_t>& bytes) {
    ByteReader r(bytes.data(), bytes.size(), "encoded image");
    r.expect_magic("BCI1");
    const std::uint8_t version = r.u8();
    if (version != 1)
        throw DataError("encoded image: unsupported version " + std::to_string(version) +
                        " at offset 4");
    EncodedImage enc;
    enc.width = static_cast<int>(r.u32());
    enc.height = static_cast<int>(r.u32());
    enc.q = r.f32();
    if (enc.width % 16 != 0 || enc.height % 16 != 0 || enc.width < 16 || enc.height < 16)
        r.fail("invalid dimensions " + std::to_string(enc.width) + "x" + std::to_string(enc.height));
    if (!(enc.q >= kQMin && enc.q <= kQMax)) r.fail("q out of range");
    for (auto& s : enc.streams) {
        const std::uint32_t len = r.u32();
        if (len > r.remaining()) r.fail("stream length " + std::to_string(len) + " overruns file");
        s = r.bytes(len);
    }
    r.expect_end();
    return enc;
}

std::vector<std::uint8_t> encode_image(const Image& img, float q) {
    check_codec_input(img.width, img.height, q);
    const YCbCr420 p = rgb_to_ycbcr420(img);
    EncodedImage enc;
    enc.width = img.width;
    enc.height = img.height;
    enc.q = q;
    enc.streams[0] = encode_plane(p.y, p.width, p.height, q);
    enc.streams[1] = encode_plane(p.cb, p.width / 2, p.height / 2, q);
    enc.streams[2] = encode_plane(p.cr, p.width / 2, p.height / 2, q);
    return serialize_encoded(enc);
}

Image decode_image(const std::vector<std::uint8_t>& bytes) {
    const EncodedImage enc = parse_encoded(bytes);
    YCbCr420 p;
    p.width = enc.width;
    p.height = enc.height;
    p.y = decode_plane(enc.streams[0], p.width, p.height, enc.q, "Y stream");
    p.cb = decode_plane(enc.streams[1], p.width / 2, p.height / 2, enc.q, "Cb stream");
    p.cr = decode_plane(enc.streams[2], p.width / 2, p.height / 2, enc.q, "Cr stream");
    return ycbcr420_to_rgb(p);
}

QChoice choose_q_for_bpp(const Image& img, double target_bpp, double tol) {
    if (target_bpp <= 0) throw UsageError("choose_q_for_bpp: target must be > 0");
    if (tol < 0) throw UsageError("choose_q_for_bpp: tol must be >= 0");
    const double pixels = static_cast<double>(img.pixels());
    auto bpp_at = [&](float q, std::vector<std::uint8_t>& enc) {
        enc = encode_image(img, q);
        return 8.0 * static_cast<double>(enc.size()) / pixels;
    };

    QChoice best;  // the feasible (bpp <= target) end of the bracket
    double hi_bpp = bpp_at(kQMax, best.encoded);
    best.q = kQMax;
    best.bpp = hi_bpp;
    if (hi_bpp > target_bpp) {
        best.flagged = true;  // target below the coarsest-q floor
        return best;
    }

    std::vector<std::uint8_t> enc;
    const double lo_bpp = bpp_at(kQMin, enc);
    if (lo_bpp <= target_bpp) {
        best.q = kQMin;
        best.bpp = lo_bpp;
        best.encoded = std::move(enc);
        return best;  // even the finest q fits the budget
    }

    float lo = kQMin, hi = kQMax;
    for (int it = 0; it < 40; ++it) {
        const float mid = lo + (hi - lo) / 2;
        if (mid <= lo || mid >= hi) break;  // float interval exhausted
        const double mid_bpp = bpp_at(mid, enc);
        if (mid_bpp <= target_bpp) {
            hi = mid;
            best.q = mid;
            best.bpp = mid_bpp;
            best.encoded = std::move(enc);
            if (target_bpp - mid_bpp <= tol) break;
        } else {
            lo = mid;
        }
    }
    return best;
}

}  // namespace ntc

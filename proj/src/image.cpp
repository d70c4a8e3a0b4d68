#include "ntc/image.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace ntc {

namespace {

// PPM token scanner: skips whitespace and '#' comments between tokens.
struct PpmScanner {
    const std::vector<std::uint8_t>& buf;
    const std::string& name;
    size_t pos = 0;

    void skip_space() {
        while (pos < buf.size()) {
            const char c = static_cast<char>(buf[pos]);
            if (c == '#') {
                while (pos < buf.size() && buf[pos] != '\n') ++pos;
            } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                ++pos;
            } else {
                break;
            }
        }
    }

    int number() {
        skip_space();
        if (pos >= buf.size() || buf[pos] < '0' || buf[pos] > '9')
            throw DataError(name + ": expected integer at offset " + std::to_string(pos));
        long v = 0;
        while (pos < buf.size() && buf[pos] >= '0' && buf[pos] <= '9') {
            v = v * 10 + (buf[pos] - '0');
            if (v > std::numeric_limits<int>::max())
                throw DataError(name + ": integer overflow at offset " + std::to_string(pos));
            ++pos;
        }
        return static_cast<int>(v);
    }
};

}  // namespace

Image decode_ppm(const std::vector<std::uint8_t>& bytes, const std::string& name) {
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6')
        throw DataError(name + ": not a binary PPM (expected \"P6\" at offset 0)");
    PpmScanner sc{bytes, name, 2};
    const int w = sc.number();
    const int h = sc.number();
    const int maxval = sc.number();
    if (w < 1 || h < 1) throw DataError(name + ": invalid dimensions " + std::to_string(w) + "x" + std::to_string(h));
    if (maxval != 255)
        throw DataError(name + ": unsupported maxval " + std::to_string(maxval) + " (only 255)");
    // Exactly one whitespace byte separates the header from pixel data.
    if (sc.pos >= bytes.size() || !(bytes[sc.pos] == ' ' || bytes[sc.pos] == '\t' ||
                                    bytes[sc.pos] == '\r' || bytes[sc.pos] == '\n'))
        throw DataError(name + ": missing whitespace after maxval at offset " + std::to_string(sc.pos));
    ++sc.pos;

    Image img(w, h);
    const size_t need = img.rgb.size();
    if (bytes.size() - sc.pos < need)
        throw DataError(name + ": pixel data truncated at offset " + std::to_string(bytes.size()) +
                        " (need " + std::to_string(need) + " bytes from offset " +
                        std::to_string(sc.pos) + ")");
    std::copy(bytes.begin() + static_cast<std::ptrdiff_t>(sc.pos),
              bytes.begin() + static_cast<std::ptrdiff_t>(sc.pos + need), img.rgb.begin());
    return img;
}

std::vector<std::uint8_t> encode_ppm(const Image& img) {
    char header[64];
    const int n = std::snprintf(header, sizeof header, "P6\n%d %d\n255\n", img.width, img.height);
    std::vector<std::uint8_t> out(header, header + n);
    out.insert(out.end(), img.rgb.begin(), img.rgb.end());
    return out;
}

Image read_ppm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError(path + ": cannot open for reading");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    return decode_ppm(bytes, path);
}

void write_ppm(const Image& img, const std::string& path) {
    const auto bytes = encode_ppm(img);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError(path + ": cannot open for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw DataError(path + ": write failed");
}

int reflect_index(int pos, int extent) {
    if (extent == 1) return 0;
    const int period = 2 * extent - 2;  // triangle wave period
    int p = pos % period;
    if (p < 0) p += period;
    return p < extent ? p : period - p;
}

Image pad_to_multiple(const Image& img, int m) {
    if (m != 8 && m != 16) throw UsageError("pad_to_multiple: m must be 8 or 16");
    const int W = (img.width + m - 1) / m * m;
    const int H = (img.height + m - 1) / m * m;
    if (W == img.width && H == img.height) return img;
    Image out(W, H);
    for (int y = 0; y < H; ++y) {
        const int sy = reflect_index(y, img.height);
        for (int x = 0; x < W; ++x) {
            const int sx = reflect_index(x, img.width);
            for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(sx, sy, c);
        }
    }
    return out;
}

Image crop(const Image& img, int width, int height) {
    if (width < 1 || height < 1 || width > img.width || height > img.height)
        throw UsageError("crop: target dimensions exceed the image");
    if (width == img.width && height == img.height) return img;
    Image out(width, height);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(x, y, c);
    return out;
}

Tensor<float> to_tensor(const Image& img) {
    Tensor<float> t({1, 3, img.height, img.width});
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                t.at(0, c, y, x) = static_cast<float>(img.at(x, y, c)) / 255.0f;
    return t;
}

Image from_tensor(const Tensor<float>& t) {
    if (t.rank() != 4 || t.extent(0) != 1 || t.extent(1) != 3)
        throw UsageError("from_tensor: expected a [1,3,H,W] tensor, got " + t.shape_str());
    Image img(t.extent(3), t.extent(2));
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) {
                const float v = std::round(t.at(0, c, y, x) * 255.0f);
                img.at(x, y, c) = static_cast<std::uint8_t>(v < 0 ? 0 : (v > 255 ? 255 : v));
            }
    return img;
}

double psnr(const Image& a, const Image& b) {
    if (a.width != b.width || a.height != b.height)
        throw UsageError("psnr: image dimensions differ");
    double se = 0;
    for (size_t i = 0; i < a.rgb.size(); ++i) {
        const double d = static_cast<double>(a.rgb[i]) - static_cast<double>(b.rgb[i]);
        se += d * d;
    }
    if (se == 0) return std::numeric_limits<double>::infinity();
    const double mse = se / static_cast<double>(a.rgb.size());
    return 10.0 * std::log10(255.0 * 255.0 / mse);
}

}  // namespace ntc

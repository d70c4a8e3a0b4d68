#include "ntc/deflate.hpp"

#include <zlib.h>

#include <string>

#include "ntc/error.hpp"

namespace ntc {

namespace {
constexpr int kRawWindowBits = -15;  // negative: raw DEFLATE, no header/checksum
}

std::vector<std::uint8_t> deflate_bytes(const std::uint8_t* data, std::size_t len) {
    z_stream zs{};
    if (deflateInit2(&zs, Z_BEST_COMPRESSION, Z_DEFLATED, kRawWindowBits, 9,
                     Z_DEFAULT_STRATEGY) != Z_OK)
        throw DataError("deflate: init failed");

    std::vector<std::uint8_t> out(deflateBound(&zs, static_cast<uLong>(len)));
    zs.next_in = const_cast<Bytef*>(data);
    zs.avail_in = static_cast<uInt>(len);
    zs.next_out = out.data();
    zs.avail_out = static_cast<uInt>(out.size());
    const int rc = deflate(&zs, Z_FINISH);
    deflateEnd(&zs);
    if (rc != Z_STREAM_END) throw DataError("deflate: compression failed (rc=" + std::to_string(rc) + ")");
    out.resize(zs.total_out);
    return out;
}

std::vector<std::uint8_t> deflate_bytes(const std::vector<std::uint8_t>& data) {
    return deflate_bytes(data.data(), data.size());
}

std::vector<std::uint8_t> inflate_bytes(const std::uint8_t* data, std::size_t len) {
    z_stream zs{};
    if (inflateInit2(&zs, kRawWindowBits) != Z_OK) throw DataError("inflate: init failed");

    std::vector<std::uint8_t> out;
    std::uint8_t buf[1 << 15];
    zs.next_in = const_cast<Bytef*>(data);
    zs.avail_in = static_cast<uInt>(len);
    int rc = Z_OK;
    do {
        zs.next_out = buf;
        zs.avail_out = sizeof buf;
        rc = inflate(&zs, Z_NO_FLUSH);
        const bool no_progress = zs.avail_out == sizeof buf && zs.avail_in == 0;
        if ((rc != Z_OK && rc != Z_STREAM_END) || (rc == Z_OK && no_progress)) {
            const auto off = zs.total_in;
            inflateEnd(&zs);
            throw DataError("inflate: corrupt or truncated stream at compressed offset " +
                            std::to_string(off));
        }
        out.insert(out.end(), buf, buf + (sizeof buf - zs.avail_out));
    } while (rc != Z_STREAM_END);
    const bool trailing = zs.avail_in != 0;
    inflateEnd(&zs);
    if (trailing) throw DataError("inflate: trailing bytes after end of stream");
    return out;
}

std::vector<std::uint8_t> inflate_bytes(const std::vector<std::uint8_t>& data) {
    return inflate_bytes(data.data(), data.size());
}

}  // namespace ntc

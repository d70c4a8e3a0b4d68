#include "ntc/bundle.hpp"

#include <string>

#include "ntc/bitio.hpp"

namespace ntc {

namespace {
// magic + version + count + flag
constexpr std::int64_t kHeaderBytes = 4 + 1 + 2 + 1;
}  // namespace

std::int64_t Bundle::total_bytes() const {
    std::int64_t total = kHeaderBytes;
    for (const auto& img : images) total += 4 + static_cast<std::int64_t>(img.size());
    if (has_update) total += 4 + static_cast<std::int64_t>(update.size());
    return total;
}

std::vector<std::uint8_t> serialize_bundle(const Bundle& b) {
    if (b.images.empty()) throw UsageError("bundle: must contain at least one image");
    if (b.images.size() > 65535) throw UsageError("bundle: too many images");
    ByteWriter w;
    w.magic("NTB1");
    w.u8(1);
    w.u16(static_cast<std::uint16_t>(b.images.size()));
    w.u8(b.has_update ? 1 : 0);
    for (const auto& img : b.images) {
        w.u32(static_cast<std::uint32_t>(img.size()));
        w.bytes(img);
    }
    if (b.has_update) {
        w.u32(static_cast<std::uint32_t>(b.update.size()));
        w.bytes(b.update);
    }
    return w.take();
}

Bundle parse_bundle(const std::vector<std::uint8_t>& bytes) {
    ByteReader r(bytes.data(), bytes.size(), "bundle");
    r.expect_magic("NTB1");
    const std::uint8_t version = r.u8();
    if (version != 1)
        throw DataError("bundle: unsupported version " + std::to_string(version) + " at offset 4");
    const int count = r.u16();
    const std::uint8_t flag = r.u8();
    if (flag > 1) throw DataError("bundle: unknown flag bits at offset 7");
    if (count < 1) throw DataError("bundle: image count must be >= 1");

    Bundle b;
    for (int i = 0; i < count; ++i) {
        const std::uint32_t len = r.u32();
        if (len > r.remaining())
            r.fail("image payload " + std::to_string(i) + " length " + std::to_string(len) +
                   " overruns file");
        b.images.push_back(r.bytes(len));
    }
    b.has_update = flag & 1;
    if (b.has_update) {
        const std::uint32_t len = r.u32();
        if (len > r.remaining())
            r.fail("update payload length " + std::to_string(len) + " overruns file");
        b.update = r.bytes(len);
    }
    r.expect_end();
    return b;
}

}  // namespace ntc

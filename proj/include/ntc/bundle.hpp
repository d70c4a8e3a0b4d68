#pragma once

#include <cstdint>
#include <vector>

// ".ntb" bitstream bundle: one or more encoded images plus at most one
// weight-update container. Layout: magic "NTB1", version u8=1, image count
// u16 LE, flag u8 (bit 0 = update present), then u32-LE-length-prefixed
// payloads: the images in order, then the update container if flagged.

namespace ntc {

struct Bundle {
    std::vector<std::vector<std::uint8_t>> images;  // serialized ".bci" payloads
    bool has_update = false;
    std::vector<std::uint8_t> update;  // serialized ".wud" payload when has_update

    std::int64_t total_bytes() const;  // exact on-disk size
};

std::vector<std::uint8_t> serialize_bundle(const Bundle& b);
Bundle parse_bundle(const std::vector<std::uint8_t>& bytes);

}  // namespace ntc

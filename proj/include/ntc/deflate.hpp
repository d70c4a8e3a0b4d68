#pragma once

#include <cstdint>
#include <vector>

// Raw DEFLATE (RFC 1951, no zlib/gzip framing) entropy stage shared by the
// weight-update container and the block codec.

namespace ntc {

std::vector<std::uint8_t> deflate_bytes(const std::uint8_t* data, std::size_t len);
std::vector<std::uint8_t> deflate_bytes(const std::vector<std::uint8_t>& data);

/// Throws DataError on malformed streams (message includes the consumed
/// offset) or when the stream does not end exactly at `len`.
std::vector<std::uint8_t> inflate_bytes(const std::uint8_t* data, std::size_t len);
std::vector<std::uint8_t> inflate_bytes(const std::vector<std::uint8_t>& data);

}  // namespace ntc

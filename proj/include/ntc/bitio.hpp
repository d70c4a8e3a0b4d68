#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "ntc/error.hpp"

// LSB-first bit packing: the first bit written lands in bit 0 of byte 0.
// Fixed-width fields are written least-significant bit first.

namespace ntc {

class BitWriter {
public:
    void put_bit(bool b) {
        if (nbits_ % 8 == 0) bytes_.push_back(0);
        if (b) bytes_.back() |= static_cast<std::uint8_t>(1u << (nbits_ % 8));
        ++nbits_;
    }

    void put_bits(std::uint64_t value, int width) {
        if (width < 0 || width > 64) throw UsageError("put_bits: width out of range");
        for (int i = 0; i < width; ++i) put_bit((value >> i) & 1u);
    }

    std::int64_t bit_count() const { return nbits_; }

    /// Pads the final partial byte with zero bits.
    const std::vector<std::uint8_t>& bytes() const { return bytes_; }
    std::vector<std::uint8_t> take() { return std::move(bytes_); }

private:
    std::vector<std::uint8_t> bytes_;
    std::int64_t nbits_ = 0;
};

class BitReader {
public:
    BitReader(const std::uint8_t* data, std::size_t len) : data_(data), nbits_(8 * static_cast<std::int64_t>(len)) {}

    bool get_bit() {
        if (pos_ >= nbits_) throw DataError("bit stream truncated at bit " + std::to_string(pos_));
        const bool b = (data_[pos_ / 8] >> (pos_ % 8)) & 1u;
        ++pos_;
        return b;
    }

    std::uint64_t get_bits(int width) {
        if (width < 0 || width > 64) throw UsageError("get_bits: width out of range");
        std::uint64_t v = 0;
        for (int i = 0; i < width; ++i)
            if (get_bit()) v |= 1ull << i;
        return v;
    }

    std::int64_t bits_left() const { return nbits_ - pos_; }

private:
    const std::uint8_t* data_;
    std::int64_t nbits_;
    std::int64_t pos_ = 0;
};

/// Little-endian byte serialization onto a growing buffer, with a matching
/// cursor-based reader that reports the offset of any truncation.
class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u16(std::uint16_t v) {
        buf_.push_back(static_cast<std::uint8_t>(v));
        buf_.push_back(static_cast<std::uint8_t>(v >> 8));
    }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32(float v) {
        std::uint32_t bits;
        static_assert(sizeof bits == sizeof v);
        std::memcpy(&bits, &v, sizeof bits);
        u32(bits);
    }
    void bytes(const std::uint8_t* p, std::size_t n) { buf_.insert(buf_.end(), p, p + n); }
    void bytes(const std::vector<std::uint8_t>& v) { bytes(v.data(), v.size()); }
    void magic(const char (&m)[5]) { bytes(reinterpret_cast<const std::uint8_t*>(m), 4); }

    const std::vector<std::uint8_t>& data() const { return buf_; }
    std::vector<std::uint8_t> take() { return std::move(buf_); }
    std::size_t size() const { return buf_.size(); }

private:
    std::vector<std::uint8_t> buf_;
};

class ByteReader {
public:
    ByteReader(const std::uint8_t* data, std::size_t len, std::string stream_name)
        : data_(data), len_(len), name_(std::move(stream_name)) {}

    std::uint8_t u8() {
        need(1);
        return data_[pos_++];
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint16_t>(data_[pos_] | (data_[pos_ + 1] << 8));
        pos_ += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    float f32() {
        std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, sizeof v);
        return v;
    }
    std::vector<std::uint8_t> bytes(std::size_t n) {
        need(n);
        std::vector<std::uint8_t> v(data_ + pos_, data_ + pos_ + n);
        pos_ += n;
        return v;
    }
    void expect_magic(const char (&m)[5]) {
        need(4);
        if (std::memcmp(data_ + pos_, m, 4) != 0)
            throw DataError(name_ + ": bad magic at offset " + std::to_string(pos_) +
                            " (expected \"" + m + "\")");
        pos_ += 4;
    }

    std::size_t offset() const { return pos_; }
    std::size_t remaining() const { return len_ - pos_; }
    const std::uint8_t* cursor() const { return data_ + pos_; }
    void skip(std::size_t n) {
        need(n);
        pos_ += n;
    }
    void expect_end() const {
        if (pos_ != len_)
            throw DataError(name_ + ": " + std::to_string(len_ - pos_) +
                            " trailing bytes at offset " + std::to_string(pos_));
    }
    [[noreturn]] void fail(const std::string& what) const {
        throw DataError(name_ + ": " + what + " at offset " + std::to_string(pos_));
    }

private:
    void need(std::size_t n) const {
        if (len_ - pos_ < n)
            throw DataError(name_ + ": truncated at offset " + std::to_string(pos_) +
                            " (need " + std::to_string(n) + " bytes, have " +
                            std::to_string(len_ - pos_) + ")");
    }

    const std::uint8_t* data_;
    std::size_t len_;
    std::size_t pos_ = 0;
    std::string name_;
};

}  // namespace ntc

#pragma once

#include <cstdint>
#include <cstring>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace poe {

using Bytes = std::vector<uint8_t>;

// Canonical wire encoding used everywhere: little-endian fixed-width
// integers, length-prefixed byte strings, fields in declaration order.
class ByteWriter {
  public:
    void u8(uint8_t v) { buf_.push_back(v); }

    void u32(uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(uint8_t(v >> (8 * i)));
    }

    void u64(uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(uint8_t(v >> (8 * i)));
    }

    void i64(int64_t v) { u64(uint64_t(v)); }

    void blob(const Bytes& b) {
        u32(uint32_t(b.size()));
        buf_.insert(buf_.end(), b.begin(), b.end());
    }

    void str(const std::string& s) {
        u32(uint32_t(s.size()));
        buf_.insert(buf_.end(), s.begin(), s.end());
    }

    void raw(const uint8_t* p, size_t n) { buf_.insert(buf_.end(), p, p + n); }

    const Bytes& bytes() const { return buf_; }
    Bytes take() { return std::move(buf_); }

  private:
    Bytes buf_;
};

// Reader returns nullopt-style failure through the ok() flag; decoders
// surface it as a bad-arity rejection.
class ByteReader {
  public:
    explicit ByteReader(const Bytes& b) : buf_(b) {}

    uint8_t u8() {
        if (pos_ + 1 > buf_.size()) return fail<uint8_t>();
        return buf_[pos_++];
    }

    uint32_t u32() {
        if (pos_ + 4 > buf_.size()) return fail<uint32_t>();
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= uint32_t(buf_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }

    uint64_t u64() {
        if (pos_ + 8 > buf_.size()) return fail<uint64_t>();
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= uint64_t(buf_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return v;
    }

    int64_t i64() { return int64_t(u64()); }

    Bytes blob() {
        uint32_t n = u32();
        if (!ok_ || pos_ + n > buf_.size()) return fail<Bytes>();
        Bytes out(buf_.begin() + pos_, buf_.begin() + pos_ + n);
        pos_ += n;
        return out;
    }

    std::string str() {
        Bytes b = blob();
        return std::string(b.begin(), b.end());
    }

    void raw(uint8_t* p, size_t n) {
        if (pos_ + n > buf_.size()) {
            ok_ = false;
            std::memset(p, 0, n);
            return;
        }
        std::memcpy(p, buf_.data() + pos_, n);
        pos_ += n;
    }

    bool ok() const { return ok_; }
    bool at_end() const { return ok_ && pos_ == buf_.size(); }

  private:
    template <typename T>
    T fail() {
        ok_ = false;
        return T{};
    }

    const Bytes& buf_;
    size_t pos_ = 0;
    bool ok_ = true;
};

inline Bytes to_bytes(const std::string& s) { return Bytes(s.begin(), s.end()); }

inline std::string to_string(const Bytes& b) { return std::string(b.begin(), b.end()); }

inline std::string hex(const uint8_t* p, size_t n) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(2 * n);
    for (size_t i = 0; i < n; ++i) {
        out.push_back(digits[p[i] >> 4]);
        out.push_back(digits[p[i] & 0xf]);
    }
    return out;
}

}  // namespace poe

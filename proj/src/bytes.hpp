#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string_view>
#include <vector>

#include "dcfl/errors.hpp"

namespace dcfl::detail {

static_assert(std::endian::native == std::endian::little, "payload writers assume a little-endian host");

class ByteWriter {
public:
    void raw(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
    void u32(std::uint32_t v) { put(&v, sizeof v); }
    void f64(double v) { put(&v, sizeof v); }
    void f64s(std::span<const double> v) { put(v.data(), v.size_bytes()); }
    std::vector<std::uint8_t> take() { return std::move(buf_); }

private:
    void put(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }
    std::vector<std::uint8_t> buf_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    void expect_magic(std::string_view magic) {
        need(magic.size());
        if (std::memcmp(bytes_.data() + pos_, magic.data(), magic.size()) != 0)
            throw FormatError("payload: bad magic");
        pos_ += magic.size();
    }
    std::uint32_t u32() {
        std::uint32_t v;
        get(&v, sizeof v);
        return v;
    }
    double f64() {
        double v;
        get(&v, sizeof v);
        return v;
    }
    void f64s(double* out, std::size_t n) { get(out, n * sizeof(double)); }
    void skip_f64s(std::size_t n) {
        need(n * sizeof(double));
        pos_ += n * sizeof(double);
    }
    bool done() const noexcept { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw IoError("payload: truncated");
    }
    void get(void* out, std::size_t n) {
        need(n);
        std::memcpy(out, bytes_.data() + pos_, n);
        pos_ += n;
    }
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace dcfl::detail

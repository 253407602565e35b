#pragma once

#include <boost/crc.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

#include "fdia/error.hpp"

namespace fdia::io {

/// Little-endian byte buffer builder with a trailing CRC-32.
class ByteWriter {
  public:
    void raw(std::string_view bytes) { buf_.append(bytes); }

    template <class T>
    void put(T value) {
        static_assert(std::is_trivially_copyable_v<T> && (sizeof(T) == 1 || sizeof(T) == 4 || sizeof(T) == 8));
        std::uint64_t bits = 0;
        if constexpr (sizeof(T) == 8) bits = std::bit_cast<std::uint64_t>(value);
        else if constexpr (sizeof(T) == 4) bits = std::bit_cast<std::uint32_t>(value);
        else bits = std::bit_cast<std::uint8_t>(value);
        for (std::size_t i = 0; i < sizeof(T); ++i) buf_.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
    }

    void f64(double v) { put(v); }
    void u32(std::uint32_t v) { put(v); }
    void u64(std::uint64_t v) { put(v); }
    void i64(std::int64_t v) { put(v); }
    void u8(std::uint8_t v) { put(v); }

    /// Appends the CRC-32 of everything written so far and returns the bytes.
    std::string finish() {
        boost::crc_32_type crc;
        crc.process_bytes(buf_.data(), buf_.size());
        u32(crc.checksum());
        return std::move(buf_);
    }

  private:
    std::string buf_;
};

/// Reader over a buffer whose last four bytes are a CRC-32 of the rest. Header
/// fields may be read before `verify_checksum` so that version errors are
/// reported as such rather than as corruption.
class ByteReader {
  public:
    explicit ByteReader(std::string bytes) : buf_(std::move(bytes)) {
        if (buf_.size() < 4) throw FormatError("file too short");
        end_ = buf_.size() - 4;
    }

    void verify_checksum() {
        boost::crc_32_type crc;
        crc.process_bytes(buf_.data(), end_);
        std::uint32_t stored = 0;
        for (std::size_t i = 0; i < 4; ++i) {
            stored |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[end_ + i])) << (8 * i);
        }
        if (stored != crc.checksum()) throw FormatError("checksum mismatch (file truncated or corrupt)");
    }

    std::string_view raw(std::size_t n) {
        need(n);
        std::string_view out(buf_.data() + pos_, n);
        pos_ += n;
        return out;
    }

    template <class T>
    T get() {
        need(sizeof(T));
        std::uint64_t bits = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
        }
        pos_ += sizeof(T);
        if constexpr (sizeof(T) == 8) return std::bit_cast<T>(bits);
        else if constexpr (sizeof(T) == 4) return std::bit_cast<T>(static_cast<std::uint32_t>(bits));
        else return std::bit_cast<T>(static_cast<std::uint8_t>(bits));
    }

    double f64() { return get<double>(); }
    std::uint32_t u32() { return get<std::uint32_t>(); }
    std::uint64_t u64() { return get<std::uint64_t>(); }
    std::int64_t i64() { return get<std::int64_t>(); }
    std::uint8_t u8() { return get<std::uint8_t>(); }

    bool at_end() const noexcept { return pos_ == end_; }

  private:
    void need(std::size_t n) const {
        if (pos_ + n > end_) throw FormatError("unexpected end of data");
    }

    std::string buf_;
    std::size_t pos_ = 0;
    std::size_t end_ = 0;
};

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline void write_file(const std::string& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + path + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed for '" + path + "'");
}

}  // namespace fdia::io

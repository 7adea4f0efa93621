#pragma once

// Little-endian byte encoding shared by the EMBD, EMBC and EMBM containers,
// plus whole-file I/O with atomic replacement.

#include <zlib.h>

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <unistd.h>

#include "centroid_reg/errors.hpp"

namespace centroid_reg {

using Bytes = std::vector<std::uint8_t>;

inline std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks so multi-GB payloads stay correct.
  constexpr std::size_t kChunk = 1u << 30;
  for (std::size_t pos = 0; pos < bytes.size(); pos += kChunk) {
    const std::size_t n = std::min(kChunk, bytes.size() - pos);
    crc = ::crc32(crc, bytes.data() + pos, static_cast<uInt>(n));
  }
  return static_cast<std::uint32_t>(crc);
}

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) { put_le(v); }
  void u32(std::uint32_t v) { put_le(v); }
  void u64(std::uint64_t v) { put_le(v); }
  void f32(float v) { put_le(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { put_le(std::bit_cast<std::uint64_t>(v)); }
  void raw(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  void raw(std::span<const std::uint8_t> s) { buf_.insert(buf_.end(), s.begin(), s.end()); }

  std::size_t size() const noexcept { return buf_.size(); }
  const Bytes& bytes() const noexcept { return buf_; }
  Bytes take() { return std::move(buf_); }

  /// Overwrites a previously reserved 32-bit slot.
  void patch_u32(std::size_t at, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_[at + i] = static_cast<std::uint8_t>(v >> (8 * i));
  }

 private:
  template <typename T>
  void put_le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  Bytes buf_;
};

/// Bounds-checked cursor. Every read past the end raises a `truncated`
/// FormatError carrying the offset where the read started.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes, std::size_t offset = 0)
      : bytes_(bytes), pos_(offset) {}

  std::size_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
  bool at_end() const noexcept { return pos_ == bytes_.size(); }

  void require(std::uint64_t n, std::string_view what) const {
    if (n > remaining()) {
      throw FormatError(FormatError::Kind::truncated,
                        "unexpected end of data reading " + std::string(what) + " (need " +
                            std::to_string(n) + " bytes, " + std::to_string(remaining()) +
                            " left)",
                        pos_);
    }
  }

  std::uint8_t u8(std::string_view what = "u8") { return get_le<std::uint8_t>(what); }
  std::uint16_t u16(std::string_view what = "u16") { return get_le<std::uint16_t>(what); }
  std::uint32_t u32(std::string_view what = "u32") { return get_le<std::uint32_t>(what); }
  std::uint64_t u64(std::string_view what = "u64") { return get_le<std::uint64_t>(what); }
  float f32(std::string_view what = "f32") { return std::bit_cast<float>(u32(what)); }
  double f64(std::string_view what = "f64") { return std::bit_cast<double>(u64(what)); }

  std::string text(std::size_t n, std::string_view what) {
    require(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  std::span<const std::uint8_t> rest() const { return bytes_.subspan(pos_); }

 private:
  template <typename T>
  T get_le(std::string_view what) {
    require(sizeof(T), what);
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(bytes_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    return v;
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_;
};

inline Bytes read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw FormatError(FormatError::Kind::io, "cannot open '" + path.string() + "' for reading");
  }
  Bytes out((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw FormatError(FormatError::Kind::io, "read failed for '" + path.string() + "'");
  return out;
}

/// Writes to a sibling temporary file, then renames over `path`, so readers
/// never observe a partial file.
inline void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  const auto parent = path.parent_path();
  if (!parent.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(parent, ec);
  }
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw FormatError(FormatError::Kind::io, "cannot open '" + tmp.string() + "' for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw FormatError(FormatError::Kind::io, "write failed for '" + tmp.string() + "'");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw FormatError(FormatError::Kind::io, "cannot move output into place at '" + path.string() + "'");
  }
}

inline void write_file_atomic(const std::filesystem::path& path, std::string_view text) {
  write_file_atomic(path, std::span<const std::uint8_t>(
                              reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

/// Reads the fixed container preamble: 4-byte magic and u16 version.
inline void expect_magic_and_version(ByteReader& r, std::string_view magic, std::uint16_t version) {
  const auto got = r.text(4, "magic");
  if (got != magic) {
    throw FormatError(FormatError::Kind::bad_magic,
                      "expected magic '" + std::string(magic) + "'", 0);
  }
  const auto v = r.u16("version");
  if (v != version) {
    throw FormatError(FormatError::Kind::version_mismatch,
                      "unsupported " + std::string(magic) + " version " + std::to_string(v) +
                          " (expected " + std::to_string(version) + ")",
                      4);
  }
}

/// Checks the CRC of everything from `payload_start` to the end of `bytes`.
inline void expect_crc(std::span<const std::uint8_t> bytes, std::size_t payload_start,
                       std::uint32_t stored, std::size_t crc_field_offset) {
  const auto actual = crc32_of(bytes.subspan(payload_start));
  if (actual != stored) {
    throw FormatError(FormatError::Kind::checksum_mismatch,
                      "payload CRC32 mismatch: header says " + std::to_string(stored) +
                          ", payload hashes to " + std::to_string(actual),
                      crc_field_offset);
  }
}

}  // namespace centroid_reg

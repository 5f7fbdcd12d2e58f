#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cafe {

// Global categorical feature identifier. The all-ones value is reserved as
// the empty-slot sentinel and is not a valid input feature.
using FeatureId = std::uint64_t;
inline constexpr FeatureId kEmptyFeature = ~std::uint64_t{0};
inline constexpr std::int64_t kNoHandle = -1;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DomainError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct FeatureNotTracked : Error { using Error::Error; };
struct HandleMissing : Error { using Error::Error; };
struct NoFreeRow : Error { using Error::Error; };
struct BudgetTooSmall : Error { using Error::Error; };
struct VersionMismatch : Error { using Error::Error; };
struct CorruptState : Error { using Error::Error; };
struct NonFinite : Error { using Error::Error; };
struct ConfigMismatch : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };

struct ParseError : Error {
  ParseError(std::size_t line_no, const std::string& what)
      : Error("line " + std::to_string(line_no) + ": " + what), line(line_no) {}
  std::size_t line;
};

// 64-bit finalizer (splitmix64 style). Statistically strong enough for
// bucket placement and for deriving per-feature pseudo-random values.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_feature(FeatureId f, std::uint64_t seed) {
  return mix64(f ^ mix64(seed));
}

// Uniform in [0,1) from a 64-bit hash.
inline double hash_unit(std::uint64_t h) {
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

// Little-endian binary encode/decode used by every checkpoint format.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void magic(const char tag[5]) {
    buf_.insert(buf_.end(), tag, tag + 4);
  }
  void bytes(std::span<const std::uint8_t> b) {
    u64(b.size());
    buf_.insert(buf_.end(), b.begin(), b.end());
  }
  void str(const std::string& s) {
    u64(s.size());
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  const std::vector<std::uint8_t>& data() const { return buf_; }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint8_t u8() { return take(1)[0]; }
  std::uint32_t u32() {
    auto b = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    auto b = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64() { return std::bit_cast<double>(u64()); }
  void expect_magic(const char tag[5]) {
    if (data_.size() - pos_ < 4) throw CorruptState("truncated header");
    if (std::memcmp(data_.data() + pos_, tag, 4) != 0)
      throw VersionMismatch(std::string("bad magic, expected ") + tag);
    pos_ += 4;
  }
  std::vector<std::uint8_t> bytes() {
    std::uint64_t n = u64();
    auto b = take(n);
    return {b.begin(), b.end()};
  }
  std::string str() {
    std::uint64_t n = u64();
    auto b = take(n);
    return {b.begin(), b.end()};
  }
  bool exhausted() const { return pos_ == data_.size(); }

 private:
  std::span<const std::uint8_t> take(std::size_t n) {
    if (data_.size() - pos_ < n) throw CorruptState("truncated state");
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

}  // namespace cafe

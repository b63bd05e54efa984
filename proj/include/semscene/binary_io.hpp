#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

#include "semscene/error.hpp"

namespace semscene {

// Little-endian writer for the artifact files. Every artifact starts with
// the 8-byte magic "SEMSCENE", a 4-byte kind tag and a u32 version.
class BinaryWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(std::string_view s) {
    u64(s.size());
    buf_.append(s);
  }
  void raw(std::string_view s) { buf_.append(s); }
  void f64s(const std::vector<double>& v) {
    u64(v.size());
    for (double x : v) f64(x);
  }
  void header(std::string_view kind, std::uint32_t version) {
    raw("SEMSCENE");
    raw(kind.substr(0, 4));
    u32(version);
  }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class BinaryReader {
 public:
  explicit BinaryReader(std::string data) : data_(std::move(data)) {}

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::size_t count(std::size_t limit = std::size_t(1) << 34) {
    const std::uint64_t n = u64();
    if (n > limit || n > data_.size()) throw format_error("corrupt artifact: implausible length");
    return static_cast<std::size_t>(n);
  }
  std::string str() {
    const std::size_t n = count();
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::vector<double> f64s() {
    const std::size_t n = count();
    need(n * 8);
    std::vector<double> v(n);
    for (auto& x : v) x = f64();
    return v;
  }
  // Checks magic and kind, returns the version.
  std::uint32_t header(std::string_view kind) {
    need(12);
    if (data_.compare(pos_, 8, "SEMSCENE") != 0) throw format_error("not a semscene artifact (bad magic)");
    pos_ += 8;
    if (data_.compare(pos_, 4, kind) != 0)
      throw format_error("artifact kind '" + data_.substr(pos_, 4) + "', expected '" + std::string(kind) + "'");
    pos_ += 4;
    return u32();
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw format_error("truncated artifact");
  }
  std::string data_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

}  // namespace semscene

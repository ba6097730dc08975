#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "nbv/errors.hpp"

namespace nbv {

// Shortest round-trippable decimal form, used by every CSV writer so
// re-running a command reproduces files byte for byte.
inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Little-endian binary readers/writers. The formats are defined as
// little-endian on disk; this code assumes a little-endian host.

class BinaryWriter {
 public:
  explicit BinaryWriter(const std::string& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot open for writing: " + path);
  }

  void write_bytes(const void* data, std::size_t n) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  }

  template <typename T>
  void write(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    write_bytes(&value, sizeof(T));
  }

  template <typename T>
  void write_array(const T* data, std::size_t count) {
    static_assert(std::is_trivially_copyable_v<T>);
    write_bytes(data, count * sizeof(T));
  }

  void write_magic(const char magic[4]) { write_bytes(magic, 4); }

  void close() {
    out_.close();
    if (!out_) throw IoError("write failed: " + path_);
  }

 private:
  std::string path_;
  std::ofstream out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open for reading: " + path);
  }

  void read_bytes(void* data, std::size_t n) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw FormatError("unexpected end of file: " + path_);
  }

  template <typename T>
  T read() {
    static_assert(std::is_trivially_copyable_v<T>);
    T value;
    read_bytes(&value, sizeof(T));
    return value;
  }

  template <typename T>
  void read_array(T* data, std::size_t count) {
    static_assert(std::is_trivially_copyable_v<T>);
    read_bytes(data, count * sizeof(T));
  }

  void expect_magic(const char magic[4], const std::string& what) {
    char got[4];
    read_bytes(got, 4);
    if (std::memcmp(got, magic, 4) != 0) throw FormatError("not a " + what + " file: " + path_);
  }

  bool at_eof() {
    return in_.peek() == std::char_traits<char>::eof();
  }

  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::ifstream in_;
};

}  // namespace nbv

/* Copyright 2026 The Wakeword Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace wakeword {

enum class ErrorKind {
  kInvalidArgument,  // caller violated a precondition
  kIo,               // missing file, failed read/write
  kBadFormat,        // wrong magic, malformed container
  kTruncated,        // file ended mid-record
  kDimMismatch,      // tensor dimensions do not chain
  kConfigMismatch,   // checkpoint/frontend configuration disagree
  kInfeasible,       // request cannot be satisfied by the data
};

inline const char* error_kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::kInvalidArgument: return "invalid_argument";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kBadFormat: return "bad_format";
    case ErrorKind::kTruncated: return "truncated";
    case ErrorKind::kDimMismatch: return "dim_mismatch";
    case ErrorKind::kConfigMismatch: return "config_mismatch";
    case ErrorKind::kInfeasible: return "infeasible";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(std::string(error_kind_name(kind)) + ": " + msg),
        kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

inline void check_arg(bool ok, const std::string& msg) {
  if (!ok) throw Error(ErrorKind::kInvalidArgument, msg);
}

// Little-endian scalar I/O used by every binary format in the project.
// Byte-explicit so files are identical across hosts.
namespace io {

inline void write_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u64(std::ostream& os, uint64_t v) {
  write_u32(os, static_cast<uint32_t>(v & 0xffffffffu));
  write_u32(os, static_cast<uint32_t>(v >> 32));
}

inline uint32_t read_u32(std::istream& is, const char* what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw Error(ErrorKind::kTruncated, std::string("while reading ") + what);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) |
         (static_cast<uint32_t>(b[3]) << 24);
}

inline uint64_t read_u64(std::istream& is, const char* what) {
  uint64_t lo = read_u32(is, what);
  uint64_t hi = read_u32(is, what);
  return lo | (hi << 32);
}

inline void write_f32(std::ostream& os, float v) {
  uint32_t bits;
  static_assert(sizeof(bits) == sizeof(v));
  std::memcpy(&bits, &v, 4);
  write_u32(os, bits);
}

inline float read_f32(std::istream& is, const char* what) {
  uint32_t bits = read_u32(is, what);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

inline void write_f64(std::ostream& os, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  write_u64(os, bits);
}

inline double read_f64(std::istream& is, const char* what) {
  uint64_t bits = read_u64(is, what);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

inline void write_string(std::ostream& os, std::string_view s) {
  write_u32(os, static_cast<uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& is, const char* what) {
  uint32_t n = read_u32(is, what);
  std::string s(n, '\0');
  if (n > 0 && !is.read(s.data(), n))
    throw Error(ErrorKind::kTruncated, std::string("while reading ") + what);
  return s;
}

inline std::ofstream open_out(const std::string& path, bool binary = true) {
  std::ofstream os(path, binary ? std::ios::binary : std::ios::out);
  if (!os) throw Error(ErrorKind::kIo, "cannot open for writing: " + path);
  return os;
}

inline std::ifstream open_in(const std::string& path, bool binary = true) {
  std::ifstream is(path, binary ? std::ios::binary : std::ios::in);
  if (!is) throw Error(ErrorKind::kIo, "cannot open for reading: " + path);
  return is;
}

}  // namespace io
}  // namespace wakeword

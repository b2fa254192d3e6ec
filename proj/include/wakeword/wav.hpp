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
#include <span>
#include <string>
#include <vector>

#include "wakeword/common.hpp"

namespace wakeword {

inline constexpr uint32_t kAudioSampleRate = 16000;

// The only audio container this project accepts: RIFF WAV, 16 kHz, mono,
// 16-bit signed little-endian PCM. Anything else is rejected with a
// diagnostic naming the offending property.
inline std::vector<int16_t> read_wav(const std::string& path) {
  auto is = io::open_in(path);

  char riff[4], wave[4];
  if (!is.read(riff, 4)) throw Error(ErrorKind::kTruncated, path);
  uint32_t riff_size = io::read_u32(is, "riff size");
  (void)riff_size;
  if (!is.read(wave, 4)) throw Error(ErrorKind::kTruncated, path);
  if (std::string_view(riff, 4) != "RIFF" || std::string_view(wave, 4) != "WAVE")
    throw Error(ErrorKind::kBadFormat, "not a RIFF/WAVE file: " + path);

  bool have_fmt = false;
  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  std::vector<int16_t> samples;
  bool have_data = false;

  char tag[4];
  while (is.read(tag, 4)) {
    uint32_t chunk_size = io::read_u32(is, "chunk size");
    std::string_view id(tag, 4);
    if (id == "fmt ") {
      if (chunk_size < 16)
        throw Error(ErrorKind::kBadFormat, "short fmt chunk: " + path);
      unsigned char buf[16];
      if (!is.read(reinterpret_cast<char*>(buf), 16))
        throw Error(ErrorKind::kTruncated, path);
      format = static_cast<uint16_t>(buf[0] | (buf[1] << 8));
      channels = static_cast<uint16_t>(buf[2] | (buf[3] << 8));
      rate = static_cast<uint32_t>(buf[4]) | (static_cast<uint32_t>(buf[5]) << 8) |
             (static_cast<uint32_t>(buf[6]) << 16) |
             (static_cast<uint32_t>(buf[7]) << 24);
      bits = static_cast<uint16_t>(buf[14] | (buf[15] << 8));
      is.ignore(chunk_size - 16);
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt)
        throw Error(ErrorKind::kBadFormat, "data before fmt: " + path);
      size_t n = chunk_size / 2;
      samples.resize(n);
      if (n > 0 &&
          !is.read(reinterpret_cast<char*>(samples.data()),
                   static_cast<std::streamsize>(n * 2)))
        throw Error(ErrorKind::kTruncated, path);
      have_data = true;
      // Chunks are word-aligned; odd sizes carry a pad byte.
      if (chunk_size % 2 == 1) is.ignore(1);
    } else {
      is.ignore(chunk_size + (chunk_size % 2));
    }
  }
  if (!have_fmt || !have_data)
    throw Error(ErrorKind::kBadFormat, "missing fmt/data chunk: " + path);
  if (format != 1)
    throw Error(ErrorKind::kBadFormat, "not linear PCM (fmt tag " +
                                           std::to_string(format) + "): " + path);
  if (channels != 1)
    throw Error(ErrorKind::kBadFormat,
                std::to_string(channels) + " channels, expected mono: " + path);
  if (bits != 16)
    throw Error(ErrorKind::kBadFormat,
                std::to_string(bits) + "-bit samples, expected 16: " + path);
  if (rate != kAudioSampleRate)
    throw Error(ErrorKind::kBadFormat, "sample rate " + std::to_string(rate) +
                                           ", expected 16000: " + path);
  // On big-endian hosts the samples would need a swap; the project only
  // targets little-endian, enforced in the build.
  return samples;
}

inline void write_wav(const std::string& path, std::span<const int16_t> samples,
                      uint32_t sample_rate = kAudioSampleRate) {
  auto os = io::open_out(path);
  uint32_t data_bytes = static_cast<uint32_t>(samples.size() * 2);
  os.write("RIFF", 4);
  io::write_u32(os, 36 + data_bytes);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  io::write_u32(os, 16);
  // format=1 (PCM), channels=1
  io::write_u32(os, 1u | (1u << 16));
  io::write_u32(os, sample_rate);
  io::write_u32(os, sample_rate * 2);  // byte rate
  // block align=2, bits=16
  io::write_u32(os, 2u | (16u << 16));
  os.write("data", 4);
  io::write_u32(os, data_bytes);
  os.write(reinterpret_cast<const char*>(samples.data()), data_bytes);
  if (!os) throw Error(ErrorKind::kIo, "write failed: " + path);
}

}  // namespace wakeword

// Copyright 2026 The tselab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>

#include "tse/audio.hpp"
#include "tse/error.hpp"

namespace tse::audio {

namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 |
         std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | p[1] << 8);
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

struct FmtChunk {
  std::uint16_t format;
  std::uint16_t channels;
  std::uint32_t sample_rate;
  std::uint16_t bits;
};

}  // namespace

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open WAV file " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
  const std::string where = path.string() + ": ";
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0) {
    throw FormatError(where + "missing RIFF chunk");
  }
  if (std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw FormatError(where + "missing WAVE form type");
  }
  std::optional<FmtChunk> fmt;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* hdr = bytes.data() + pos;
    const std::uint32_t len = read_u32(hdr + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (len < 16 || body + 16 > bytes.size()) {
        throw FormatError(where + "truncated fmt chunk");
      }
      const unsigned char* f = bytes.data() + body;
      fmt = FmtChunk{read_u16(f), read_u16(f + 2), read_u32(f + 4),
                     read_u16(f + 14)};
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      if (body + len > bytes.size()) {
        throw FormatError(where + "truncated data chunk (" +
                          std::to_string(len) + " bytes declared, " +
                          std::to_string(bytes.size() - body) + " present)");
      }
      data = bytes.data() + body;
      data_len = len;
      break;
    }
    pos = body + len + (len & 1u);
  }
  if (!fmt) throw FormatError(where + "missing fmt chunk");
  if (!data) throw FormatError(where + "missing data chunk");
  if (fmt->format != 1) {
    throw FormatError(where + "audio format " + std::to_string(fmt->format) +
                      " is not PCM (1)");
  }
  if (fmt->channels != 1) {
    throw FormatError(where + "channels=" + std::to_string(fmt->channels) +
                      ", expected mono");
  }
  if (fmt->bits != 16) {
    throw FormatError(where + "bits per sample=" + std::to_string(fmt->bits) +
                      ", expected 16");
  }
  if (fmt->sample_rate == 0) throw FormatError(where + "sample rate is zero");

  Waveform wav;
  wav.sample_rate = static_cast<int>(fmt->sample_rate);
  wav.samples.resize(data_len / 2);
  for (std::size_t i = 0; i < wav.samples.size(); ++i) {
    const auto s = static_cast<std::int16_t>(read_u16(data + 2 * i));
    wav.samples[i] = static_cast<double>(s) / 32768.0;
  }
  return wav;
}

void write_wav(const std::filesystem::path& path, const Waveform& wav) {
  if (wav.sample_rate <= 0) throw DataError("write_wav: invalid sample rate");
  const auto n = static_cast<std::uint32_t>(wav.samples.size());
  std::string out;
  out.reserve(44 + 2 * n);
  out += "RIFF";
  put_u32(out, 36 + 2 * n);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(wav.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(wav.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out += "data";
  put_u32(out, 2 * n);
  for (double x : wav.samples) {
    if (!std::isfinite(x)) throw DataError("write_wav: non-finite sample");
    const double q = std::clamp(std::round(x * 32768.0), -32768.0, 32767.0);
    put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("short write to " + path.string());
}

}  // namespace tse::audio

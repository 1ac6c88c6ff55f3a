// Copyright 2026 The tselab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "tse/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "tse/error.hpp"

namespace tse {

namespace {

constexpr char kMagic[8] = {'T', 'S', 'E', 'C', 'K', 'P', 'T', '1'};

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double x) {
  const auto bits = std::bit_cast<std::uint64_t>(x);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

class Reader {
 public:
  Reader(const std::string& bytes, std::string where)
      : bytes_(bytes), where_(std::move(where)) {}

  const unsigned char* take(std::size_t n, const char* what) {
    if (pos_ + n > bytes_.size()) {
      throw FormatError(where_ + ": truncated while reading " + what);
    }
    auto p = reinterpret_cast<const unsigned char*>(bytes_.data() + pos_);
    pos_ += n;
    return p;
  }
  std::uint16_t u16(const char* what) {
    auto p = take(2, what);
    return static_cast<std::uint16_t>(p[0] | p[1] << 8);
  }
  std::uint32_t u32(const char* what) {
    auto p = take(4, what);
    return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 |
           std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
  }
  double f64(const char* what) {
    auto p = take(8, what);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= std::uint64_t(p[i]) << (8 * i);
    return std::bit_cast<double>(bits);
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::string where_;
  std::size_t pos_ = 0;
};

}  // namespace

std::map<std::string, ag::Tensor> Checkpoint::blob_map() const {
  return {blobs.begin(), blobs.end()};
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::string out(kMagic, sizeof(kMagic));
  const std::string header = ckpt.header.dump();
  put_u32(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  put_u32(out, static_cast<std::uint32_t>(ckpt.blobs.size()));
  for (const auto& [name, t] : ckpt.blobs) {
    if (name.size() > 0xffff) throw DataError("blob name too long: " + name);
    put_u16(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) put_u32(out, static_cast<std::uint32_t>(e));
    for (double x : t.data()) put_f64(out, x);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write checkpoint " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("short write to checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  Reader r(bytes, path.string());
  if (std::memcmp(r.take(8, "magic"), kMagic, 8) != 0) {
    throw FormatError(path.string() + ": bad magic (expected TSECKPT1)");
  }
  Checkpoint ckpt;
  const auto hlen = r.u32("header length");
  const auto* h = r.take(hlen, "header");
  try {
    ckpt.header = nlohmann::json::parse(h, h + hlen);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": malformed header: " + e.what());
  }
  const auto count = r.u32("blob count");
  for (std::uint32_t b = 0; b < count; ++b) {
    const auto nlen = r.u16("blob name length");
    const auto* np = r.take(nlen, "blob name");
    std::string name(reinterpret_cast<const char*>(np), nlen);
    const auto rank = r.u32("blob rank");
    if (rank > 8) throw FormatError(path.string() + ": implausible rank for " + name);
    ag::Shape shape(rank);
    for (auto& e : shape) e = r.u32("blob extent");
    std::vector<double> values(ag::shape_numel(shape));
    for (auto& x : values) x = r.f64("blob values");
    ckpt.blobs.emplace_back(std::move(name),
                            ag::Tensor::from_data(std::move(shape), std::move(values)));
  }
  if (!r.done()) throw FormatError(path.string() + ": trailing bytes");
  return ckpt;
}

}  // namespace tse

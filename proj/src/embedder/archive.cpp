// Copyright 2026 The tselab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "tse/embedder.hpp"
#include "tse/error.hpp"

namespace tse::embed {

namespace {

constexpr char kMagic[8] = {'T', 'S', 'E', 'E', 'M', 'B', '0', '1'};

void put(std::string& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get(const std::string& in, std::size_t& pos, int bytes,
                  const std::filesystem::path& path) {
  if (pos + bytes > in.size()) throw FormatError(path.string() + ": truncated embedding archive");
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    v |= std::uint64_t(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  }
  pos += bytes;
  return v;
}

}  // namespace

void write_embeddings(const std::filesystem::path& path,
                      const std::vector<Embedding>& embeddings) {
  const std::size_t dim = embeddings.empty() ? 0 : embeddings.front().vector.size();
  std::string out(kMagic, sizeof(kMagic));
  put(out, embeddings.size(), 4);
  put(out, dim, 4);
  std::ofstream mirror(path.string() + ".jsonl");
  if (!mirror) throw DataError("cannot write " + path.string() + ".jsonl");
  for (const auto& e : embeddings) {
    if (e.vector.size() != dim) throw DimensionError("write_embeddings: mixed dimensions");
    if (e.speaker_id.size() > 0xffff) throw DataError("speaker id too long");
    put(out, e.speaker_id.size(), 2);
    out += e.speaker_id;
    for (double x : e.vector) put(out, std::bit_cast<std::uint32_t>(static_cast<float>(x)), 4);
    nlohmann::json j{{"utt", e.utt_id}, {"speaker", e.speaker_id}, {"kind", e.kind},
                     {"vector", e.vector}};
    mirror << j.dump() << "\n";
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

std::vector<Embedding> read_embeddings(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path.string());
  const std::string in((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (in.size() < 8 || std::memcmp(in.data(), kMagic, 8) != 0) {
    throw FormatError(path.string() + ": bad magic (expected TSEEMB01)");
  }
  std::size_t pos = 8;
  const auto count = get(in, pos, 4, path);
  const auto dim = get(in, pos, 4, path);
  std::vector<Embedding> out;
  out.reserve(count);
  for (std::uint64_t r = 0; r < count; ++r) {
    Embedding e;
    const auto len = get(in, pos, 2, path);
    if (pos + len > in.size()) throw FormatError(path.string() + ": truncated embedding archive");
    e.speaker_id = in.substr(pos, len);
    pos += len;
    e.vector.resize(dim);
    for (auto& x : e.vector) {
      x = std::bit_cast<float>(static_cast<std::uint32_t>(get(in, pos, 4, path)));
    }
    out.push_back(std::move(e));
  }
  if (pos != in.size()) throw FormatError(path.string() + ": trailing bytes");
  return out;
}

}  // namespace tse::embed

// Copyright 2026 The tselab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <fstream>

#include "pipeline_impl.hpp"
#include "tse/error.hpp"

namespace tse::pipeline {

using nlohmann::json;

std::string version() { return TSELAB_VERSION; }

json report_header(const std::string& command, const json& config, std::uint64_t seed) {
  return json{{"command", command}, {"version", version()}, {"seed", seed}, {"config", config}};
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw DataError("short write to " + path.string());
}

void write_jsonl(const fs::path& path, const std::vector<json>& rows) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& r : rows) out << r.dump() << '\n';
  if (!out) throw DataError("short write to " + path.string());
}

std::vector<json> read_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<json> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      rows.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw FormatError(path.string() + ": " + e.what());
    }
  }
  return rows;
}

namespace detail {

std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) {
  // splitmix64 finalizer folded over the parts.
  std::uint64_t h = 0x9e3779b97f4a7c15ULL;
  for (std::uint64_t p : parts) {
    h ^= p + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
    h = (h ^ (h >> 27)) * 0x94d049bb133111ebULL;
    h ^= h >> 31;
  }
  return h;
}

std::string path_string(const fs::path& p) { return p.generic_string(); }

void prepare_dir(const fs::path& dir) {
  if (dir.empty()) throw UsageError("an output location (--out) is required");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    throw DataError("cannot create output directory " + dir.string());
}

void prepare_parent(const fs::path& file) {
  if (file.empty()) throw UsageError("an output location (--out) is required");
  const auto parent = file.parent_path();
  if (!parent.empty()) prepare_dir(parent);
}

void require_file(const fs::path& p, const std::string& what) {
  if (p.empty()) throw UsageError(what + " is required");
  if (!fs::is_regular_file(p)) throw DataError(what + " " + p.string() + " does not exist");
}

audio::Corpus open_corpus(const fs::path& p) {
  if (p.empty()) throw UsageError("--corpus is required");
  return audio::read_corpus(fs::is_directory(p) ? p / "corpus.jsonl" : p);
}

std::vector<std::string> manifest_speakers(const audio::Manifest& m) {
  std::set<std::string> s;
  for (const auto& e : m.entries) {
    s.insert(e.speaker);
    if (!e.interferer_speaker.empty()) s.insert(e.interferer_speaker);
  }
  return {s.begin(), s.end()};
}

}  // namespace detail
}  // namespace tse::pipeline

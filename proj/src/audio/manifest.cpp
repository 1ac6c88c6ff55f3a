// Copyright 2026 The tselab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <algorithm>
#include <fstream>
#include <set>

#include "json.hpp"
#include "tse/audio.hpp"
#include "tse/error.hpp"

namespace tse::audio {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<json> read_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  std::vector<json> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      rows.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " +
                        e.what());
    }
    if (!rows.back().is_object()) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) +
                        ": expected a JSON object");
    }
  }
  return rows;
}

template <class T>
T field(const json& row, const char* key, const fs::path& path) {
  auto it = row.find(key);
  if (it == row.end()) {
    throw FormatError(path.string() + ": entry is missing key '" + key + "'");
  }
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw FormatError(path.string() + ": key '" + key + "' has the wrong type");
  }
}

fs::path resolve(const fs::path& dir, const std::string& rel) {
  fs::path p(rel);
  return (p.is_absolute() ? p : dir / p).lexically_normal();
}

std::string relative_to(const fs::path& p, const fs::path& dir) {
  auto abs_p = fs::absolute(p).lexically_normal();
  auto abs_d = fs::absolute(dir).lexically_normal();
  auto rel = abs_p.lexically_relative(abs_d);
  return (rel.empty() ? abs_p : rel).generic_string();
}

void require_exists(const fs::path& p, const fs::path& manifest) {
  if (!fs::exists(p)) {
    throw DataError(manifest.string() + ": referenced file " + p.string() +
                    " does not exist");
  }
}

fs::path parent_dir(const fs::path& p) {
  auto d = fs::absolute(p).parent_path();
  return d.empty() ? fs::current_path() : d;
}

}  // namespace

std::vector<std::string> Corpus::speakers() const {
  std::set<std::string> s;
  for (const auto& u : utterances) s.insert(u.speaker);
  return {s.begin(), s.end()};
}

std::map<std::string, std::vector<const Utterance*>> Corpus::by_speaker() const {
  std::map<std::string, std::vector<const Utterance*>> m;
  for (const auto& u : utterances) m[u.speaker].push_back(&u);
  return m;
}

Corpus read_corpus(const fs::path& manifest_path) {
  Corpus c;
  c.dir = parent_dir(manifest_path);
  for (const auto& row : read_jsonl(manifest_path)) {
    Utterance u;
    u.id = field<std::string>(row, "utt", manifest_path);
    u.speaker = field<std::string>(row, "speaker", manifest_path);
    u.path = resolve(c.dir, field<std::string>(row, "path", manifest_path));
    require_exists(u.path, manifest_path);
    c.utterances.push_back(std::move(u));
  }
  return c;
}

void write_corpus(const fs::path& manifest_path, const Corpus& corpus) {
  std::ofstream out(manifest_path);
  if (!out) throw DataError("cannot write " + manifest_path.string());
  const auto dir = parent_dir(manifest_path);
  for (const auto& u : corpus.utterances) {
    json row{{"utt", u.id},
             {"speaker", u.speaker},
             {"path", relative_to(u.path, dir)}};
    out << row.dump() << '\n';
  }
}

std::string to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kValid: return "valid";
    case Split::kTest: return "test";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "valid") return Split::kValid;
  if (name == "test") return Split::kTest;
  throw UsageError("unknown split '" + name + "'");
}

std::vector<std::string> Manifest::speakers() const {
  std::set<std::string> s;
  for (const auto& e : entries) s.insert(e.speaker);
  return {s.begin(), s.end()};
}

Manifest read_manifest(const fs::path& path, Split split) {
  Manifest m;
  m.split = split;
  const auto dir = parent_dir(path);
  for (const auto& row : read_jsonl(path)) {
    ManifestEntry e;
    e.mix = resolve(dir, field<std::string>(row, "mix", path));
    e.target = resolve(dir, field<std::string>(row, "target", path));
    e.enroll = resolve(dir, field<std::string>(row, "enroll", path));
    e.speaker = field<std::string>(row, "speaker", path);
    e.snr_db = field<double>(row, "snr_db", path);
    if (row.contains("interferer_speaker")) {
      e.interferer_speaker = field<std::string>(row, "interferer_speaker", path);
    }
    for (const auto* p : {&e.mix, &e.target, &e.enroll}) require_exists(*p, path);
    m.entries.push_back(std::move(e));
  }
  return m;
}

void write_manifest(const fs::path& path, const Manifest& m) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  const auto dir = parent_dir(path);
  for (const auto& e : m.entries) {
    json row{{"mix", relative_to(e.mix, dir)},
             {"target", relative_to(e.target, dir)},
             {"enroll", relative_to(e.enroll, dir)},
             {"speaker", e.speaker},
             {"snr_db", e.snr_db}};
    if (!e.interferer_speaker.empty()) {
      row["interferer_speaker"] = e.interferer_speaker;
    }
    out << row.dump() << '\n';
  }
}

void validate_speaker_disjoint(const Manifest& train, const Manifest& valid,
                               const Manifest& test) {
  std::set<std::string> test_speakers;
  for (const auto& e : test.entries) {
    test_speakers.insert(e.speaker);
    if (!e.interferer_speaker.empty()) test_speakers.insert(e.interferer_speaker);
  }
  for (const auto* m : {&train, &valid}) {
    for (const auto& e : m->entries) {
      for (const auto* spk : {&e.speaker, &e.interferer_speaker}) {
        if (!spk->empty() && test_speakers.count(*spk)) {
          throw DataError("speaker '" + *spk + "' appears in both the " +
                          to_string(m->split) + " and test splits");
        }
      }
    }
  }
}

}  // namespace tse::audio

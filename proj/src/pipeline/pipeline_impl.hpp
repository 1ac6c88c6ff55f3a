// Copyright 2026 The tselab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <initializer_list>
#include <set>
#include <string>
#include <vector>

#include "tse/pipeline.hpp"

namespace tse::pipeline::detail {

std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts);
std::string path_string(const fs::path& p);
void prepare_dir(const fs::path& dir);
void prepare_parent(const fs::path& file);
void require_file(const fs::path& p, const std::string& what);
audio::Corpus open_corpus(const fs::path& p);
// Target and interferer speakers of a mixture manifest.
std::vector<std::string> manifest_speakers(const audio::Manifest& m);

}  // namespace tse::pipeline::detail

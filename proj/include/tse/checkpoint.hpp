// Copyright 2026 The tselab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Versioned binary model container:
//   "TSECKPT1" | u32 header length | JSON header (UTF-8)
//   | u32 blob count | per blob: u16 name length, name, u32 rank,
//     u32 extents[rank], float64 little-endian values.

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tse/tensor.hpp"

namespace tse {

struct Checkpoint {
  nlohmann::json header;
  std::vector<std::pair<std::string, ag::Tensor>> blobs;

  std::map<std::string, ag::Tensor> blob_map() const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace tse

// Copyright 2026 The tselab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <string>
#include <vector>

#include "tse/audio.hpp"

namespace tse::testing {

// `speakers` synthetic voices with `per_speaker` utterances each.
inline std::vector<audio::PoolUtterance> synthetic_utterances(
    std::size_t speakers, std::size_t per_speaker, double seconds,
    std::uint64_t seed = 100) {
  std::vector<audio::PoolUtterance> out;
  for (std::size_t s = 0; s < speakers; ++s) {
    auto profile = audio::make_speaker_profile(seed + s);
    const std::string spk = "spk" + std::to_string(s);
    for (std::size_t u = 0; u < per_speaker; ++u) {
      out.push_back({spk + "_u" + std::to_string(u), spk,
                     audio::synth_speaker_utterance(profile, seconds,
                                                    seed * 1000 + s * 100 + u)});
    }
  }
  return out;
}

}  // namespace tse::testing

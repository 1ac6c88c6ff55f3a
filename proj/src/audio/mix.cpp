// Copyright 2026 The tselab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <algorithm>
#include <cmath>
#include <cstring>

#include "tse/audio.hpp"
#include "tse/error.hpp"

namespace tse::audio {

MixResult mix_at_snr(const Waveform& target, const Waveform& interferer,
                     double snr_db) {
  if (target.sample_rate != interferer.sample_rate) {
    throw DataError("mix_at_snr: sample rates differ (" +
                    std::to_string(target.sample_rate) + " vs " +
                    std::to_string(interferer.sample_rate) + ")");
  }
  if (!std::isfinite(snr_db)) throw DomainError("mix_at_snr: non-finite SNR");
  const std::size_t n = std::min(target.size(), interferer.size());
  if (n == 0) throw DataError("mix_at_snr: empty input");
  const std::span<const double> t(target.samples.data(), n);
  const std::span<const double> i(interferer.samples.data(), n);
  const double pt = power(t);
  const double pi = power(i);
  if (pt == 0.0) throw DataError("mix_at_snr: target has zero power");
  if (pi == 0.0) throw DataError("mix_at_snr: interferer has zero power");

  MixResult r;
  r.snr_db = snr_db;
  r.interferer_gain = std::sqrt(pt / (pi * std::pow(10.0, snr_db / 10.0)));
  r.target.sample_rate = r.interferer.sample_rate = r.mixture.sample_rate =
      target.sample_rate;
  r.target.samples.assign(t.begin(), t.end());
  r.interferer.samples.resize(n);
  r.mixture.samples.resize(n);
  double peak = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    r.interferer.samples[k] = r.interferer_gain * i[k];
    r.mixture.samples[k] = r.target.samples[k] + r.interferer.samples[k];
    peak = std::max(peak, std::abs(r.mixture.samples[k]));
  }
  if (peak > 1.0) {
    r.peak_scale = 1.0 / peak;
    for (auto* w : {&r.target, &r.interferer, &r.mixture}) {
      for (auto& x : w->samples) x *= r.peak_scale;
    }
  }
  return r;
}

UtterancePool::UtterancePool(std::vector<PoolUtterance> utterances)
    : utts_(std::move(utterances)) {
  for (std::size_t k = 0; k < utts_.size(); ++k) {
    by_speaker_[utts_[k].speaker].push_back(k);
  }
  for (const auto& [spk, idx] : by_speaker_) {
    if (idx.size() < 2) {
      throw DataError("utterance pool: speaker '" + spk + "' has " +
                      std::to_string(idx.size()) +
                      " utterance(s); at least 2 are required");
    }
    speakers_.push_back(spk);
  }
  if (speakers_.size() < 2) {
    throw DataError("utterance pool: need at least 2 speakers, got " +
                    std::to_string(speakers_.size()));
  }
}

const std::vector<std::size_t>& UtterancePool::indices_of(
    const std::string& spk) const {
  auto it = by_speaker_.find(spk);
  if (it == by_speaker_.end()) throw DataError("unknown speaker '" + spk + "'");
  return it->second;
}

UtterancePool load_pool(const Corpus& corpus,
                        const std::vector<std::string>& speakers) {
  std::vector<PoolUtterance> utts;
  for (const auto& u : corpus.utterances) {
    if (!speakers.empty() &&
        std::find(speakers.begin(), speakers.end(), u.speaker) == speakers.end()) {
      continue;
    }
    utts.push_back({u.id, u.speaker, read_wav(u.path)});
  }
  return UtterancePool(std::move(utts));
}

MixtureExample dynamic_mix(const UtterancePool& pool, std::mt19937_64& rng,
                           SnrRange snr) {
  if (!(snr.min_db <= snr.max_db)) {
    throw DataError("dynamic_mix: snr_min exceeds snr_max");
  }
  const auto& spk = pool.speakers();
  std::uniform_int_distribution<std::size_t> pick_spk(0, spk.size() - 1);
  const std::size_t ts = pick_spk(rng);
  std::size_t is = pick_spk(rng);
  while (is == ts) is = pick_spk(rng);

  const auto& t_idx = pool.indices_of(spk[ts]);
  const auto& i_idx = pool.indices_of(spk[is]);
  std::uniform_int_distribution<std::size_t> pick_t(0, t_idx.size() - 1);
  const std::size_t target_k = pick_t(rng);
  std::size_t enroll_k = pick_t(rng);
  while (enroll_k == target_k) enroll_k = pick_t(rng);
  std::uniform_int_distribution<std::size_t> pick_i(0, i_idx.size() - 1);
  const std::size_t interf_k = pick_i(rng);
  std::uniform_real_distribution<double> pick_snr(snr.min_db, snr.max_db);
  const double snr_db = pick_snr(rng);

  const auto& target = pool.at(t_idx[target_k]);
  const auto& interf = pool.at(i_idx[interf_k]);
  const auto& enroll = pool.at(t_idx[enroll_k]);
  auto mixed = mix_at_snr(target.wav, interf.wav, snr_db);

  MixtureExample ex;
  ex.mixture = std::move(mixed.mixture);
  ex.target = std::move(mixed.target);
  ex.interferer = std::move(mixed.interferer);
  ex.enrollment = enroll.wav;
  ex.target_speaker_id = target.speaker;
  ex.interferer_speaker_id = interf.speaker;
  ex.target_utt = target.id;
  ex.interferer_utt = interf.id;
  ex.enroll_utt = enroll.id;
  ex.snr_db = snr_db;
  return ex;
}

std::uint64_t waveform_hash(const Waveform& wav) {
  std::uint64_t h = 1469598103934665603ull;
  for (double x : wav.samples) {
    std::uint64_t bits;
    static_assert(sizeof(bits) == sizeof(x));
    std::memcpy(&bits, &x, sizeof(bits));
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xffu;
      h *= 1099511628211ull;
    }
  }
  return h;
}

}  // namespace tse::audio

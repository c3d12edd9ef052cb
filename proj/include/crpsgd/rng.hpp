#pragma once

#include <cmath>
#include <compare>
#include <cstdint>
#include <mutex>
#include <set>
#include <stdexcept>
#include <tuple>

namespace crpsgd {

/// Address of one random stream. Every stream is used at most once; the
/// fields identify where in a run the stream is consumed.
struct StreamKey {
  std::uint64_t run = 0;     ///< run/seed identifier
  std::uint32_t worker = 0;  ///< worker index (0-based)
  std::uint64_t round = 0;   ///< round / local-step index
  std::uint64_t sample = 0;  ///< sample index within the batch

  auto operator<=>(const StreamKey&) const = default;
};

namespace rng_detail {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline std::uint64_t seed_from(const StreamKey& k) {
  std::uint64_t h = 0x243F6A8885A308D3ull;
  h = mix64(h ^ k.run);
  h = mix64(h ^ (static_cast<std::uint64_t>(k.worker) + 0x452821E638D01377ull));
  h = mix64(h ^ (k.round + 0xBE5466CF34E90C6Cull));
  h = mix64(h ^ (k.sample + 0xC0AC29B7C97C50DDull));
  return h;
}

}  // namespace rng_detail

/// Opt-in detector for stream reuse. Disabled by default; tests enable it
/// around a run and every RngStream constructed while enabled records its
/// key. A duplicate key throws.
class StreamAudit {
 public:
  static void enable() {
    std::lock_guard<std::mutex> lock(mutex_());
    seen_().clear();
    enabled_() = true;
  }
  static void disable() {
    std::lock_guard<std::mutex> lock(mutex_());
    enabled_() = false;
    seen_().clear();
  }
  static void record(const StreamKey& key) {
    if (!enabled_()) return;
    std::lock_guard<std::mutex> lock(mutex_());
    if (!enabled_()) return;
    auto [it, inserted] = seen_().insert(
        std::tuple(key.run, key.worker, key.round, key.sample));
    (void)it;
    if (!inserted) throw std::logic_error("StreamAudit: stream key reused");
  }

 private:
  static bool& enabled_() {
    static bool e = false;
    return e;
  }
  static std::mutex& mutex_() {
    static std::mutex m;
    return m;
  }
  static std::set<std::tuple<std::uint64_t, std::uint32_t, std::uint64_t, std::uint64_t>>& seen_() {
    static std::set<std::tuple<std::uint64_t, std::uint32_t, std::uint64_t, std::uint64_t>> s;
    return s;
  }
};

/// Counter-based generator: the key selects a stream and successive draws
/// walk a SplitMix64 sequence. The same key yields the same values on any
/// thread and in any interleaving, which is what makes runs reproducible
/// independent of the parallelism degree.
class RngStream {
 public:
  explicit RngStream(StreamKey key) : state_(rng_detail::seed_from(key)) {
    StreamAudit::record(key);
  }
  RngStream(std::uint64_t run, std::uint32_t worker, std::uint64_t round,
            std::uint64_t sample)
      : RngStream(StreamKey{run, worker, round, sample}) {}

  std::uint64_t next_u64() {
    ctr_ += rng_detail::kGolden;
    return rng_detail::mix64(state_ + ctr_);
  }

  /// Uniform in [0, 1).
  double next_uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; consumes exactly two draws.
  double next_gaussian() {
    const double u1 =
        static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    const double u2 = next_uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  /// Uniform integer in [0, n).
  std::uint64_t next_below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

 private:
  std::uint64_t state_;
  std::uint64_t ctr_ = 0;
};

}  // namespace crpsgd

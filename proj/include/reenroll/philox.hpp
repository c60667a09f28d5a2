#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace reenroll {

/// Philox4x32-10 counter-based generator (Salmon et al., Random123).
/// Stateless: output is a pure function of (counter, key).
struct Philox4x32 {
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
  static constexpr int kRounds = 10;

  static constexpr Counter generate(Counter ctr, Key key) noexcept {
    for (int r = 0; r < kRounds; ++r) {
      if (r > 0) {
        key[0] += kWeyl0;
        key[1] += kWeyl1;
      }
      const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const auto lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const auto lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }
};

/// A substream addressed by (seed, rep, unit, purpose). Draws advance an
/// internal block counter, so two streams with different addresses never
/// share output and no generator state is ever shared between workers.
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::uint32_t rep, std::uint32_t unit,
               std::uint32_t purpose) noexcept
      : key_{static_cast<std::uint32_t>(seed),
             static_cast<std::uint32_t>(seed >> 32)},
        rep_(rep),
        unit_(unit),
        purpose_(purpose) {}

  std::uint64_t next_u64() noexcept {
    if (pos_ == 2) refill();
    const std::uint64_t v = (std::uint64_t{block_[2 * pos_]} << 32) |
                            block_[2 * pos_ + 1];
    ++pos_;
    return v;
  }

  /// Uniform on the open interval (0, 1).
  double uniform() noexcept {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(angle);
    has_spare_ = true;
    return r * std::cos(angle);
  }

  bool bernoulli(double p) noexcept { return uniform() < p; }

 private:
  void refill() noexcept {
    block_ = Philox4x32::generate({block_index_, unit_, rep_, purpose_}, key_);
    ++block_index_;
    pos_ = 0;
  }

  Philox4x32::Key key_;
  std::uint32_t rep_;
  std::uint32_t unit_;
  std::uint32_t purpose_;
  std::uint32_t block_index_ = 0;
  Philox4x32::Counter block_{};
  int pos_ = 2;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace reenroll

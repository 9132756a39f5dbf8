#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

#include "vfl/core.hpp"

namespace vfl {

// Philox4x32 with 10 rounds (Salmon et al., SC'11). Stateless: output is a pure
// function of (counter, key), so streams never depend on evaluation order.
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static constexpr Counter generate(Counter ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kWeyl0;
        key[1] += kWeyl1;
      }
      ctr = single_round(ctr, key);
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

  static constexpr Counter single_round(const Counter& c, const Key& k) {
    const std::uint64_t p0 = std::uint64_t{kMul0} * c[0];
    const std::uint64_t p1 = std::uint64_t{kMul1} * c[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
  }
};

enum class StreamRole : std::uint8_t {
  common_noise = 1,
  idiosyncratic = 2,
  mfield_noise = 3,
  eta0 = 4,
  aux = 5,
  initial_positions = 6,
};

inline std::string_view to_string(StreamRole r) {
  switch (r) {
    case StreamRole::common_noise: return "common_noise";
    case StreamRole::idiosyncratic: return "idiosyncratic";
    case StreamRole::mfield_noise: return "mfield_noise";
    case StreamRole::eta0: return "eta0";
    case StreamRole::aux: return "aux";
    case StreamRole::initial_positions: return "initial_positions";
  }
  return "unknown";
}

// Identifies one block of random draws. Identical keys give identical values
// regardless of thread count or the order in which blocks are requested.
struct StreamKey {
  std::uint64_t master_seed = 0;
  StreamRole role = StreamRole::aux;
  std::uint32_t ensemble_id = 0;
  std::uint32_t particle_id = 0;
  std::uint32_t step_index = 0;

  bool operator==(const StreamKey&) const = default;

  std::string describe() const {
    return "seed=" + std::to_string(master_seed) + " role=" + std::string(to_string(role)) +
           " ensemble=" + std::to_string(ensemble_id) + " particle=" +
           std::to_string(particle_id) + " step=" + std::to_string(step_index);
  }
};

// Draws from the block addressed by a StreamKey. `slot` selects successive
// 128-bit outputs within the block (up to 2^24 of them).
class KeyedStream {
 public:
  explicit KeyedStream(const StreamKey& key) : key_(key) {}

  std::array<std::uint32_t, 4> raw(std::uint32_t slot) const {
    const Philox4x32::Key k{static_cast<std::uint32_t>(key_.master_seed),
                            static_cast<std::uint32_t>(key_.master_seed >> 32)};
    const Philox4x32::Counter c{key_.step_index, key_.particle_id, key_.ensemble_id,
                                (static_cast<std::uint32_t>(key_.role) << 24) |
                                    (slot & 0x00FFFFFFu)};
    return Philox4x32::generate(c, k);
  }

  // Two uniforms in (0, 1] built from 53-bit mantissas.
  std::array<double, 2> uniform_pair(std::uint32_t slot) const {
    const auto r = raw(slot);
    const std::uint64_t a = (std::uint64_t{r[0]} << 32) | r[1];
    const std::uint64_t b = (std::uint64_t{r[2]} << 32) | r[3];
    constexpr double scale = 1.0 / 9007199254740992.0;  // 2^-53
    return {(static_cast<double>(a >> 11) + 1.0) * scale,
            (static_cast<double>(b >> 11) + 1.0) * scale};
  }

  // Two independent standard normals (Box-Muller).
  std::array<double, 2> normal_pair(std::uint32_t slot) const {
    const auto [u1, u2] = uniform_pair(slot);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = two_pi * u2;
    return {r * std::cos(theta), r * std::sin(theta)};
  }

  const StreamKey& key() const { return key_; }

 private:
  StreamKey key_;
};

}  // namespace vfl

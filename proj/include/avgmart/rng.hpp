#pragma once

#include <array>
#include <cstdint>
#include <span>

#include "avgmart/error.hpp"
#include "avgmart/numerics.hpp"

namespace avgmart {

/// Philox4x32-10 counter-based generator (Salmon et al., Random123). A pure
/// function of (counter, key): no state, so any draw can be recomputed
/// independently of the order in which paths are generated.
struct Philox4x32 {
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

  static constexpr Counter generate(Counter ctr, Key key) noexcept {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kWeyl0;
        key[1] += kWeyl1;
      }
      const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const auto lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const auto lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }
};

/// Maps 64 random bits to the open interval (0, 1) on the midpoints of a
/// 2^-52 lattice; a 53-bit lattice would round its top midpoint to 1.
constexpr double uniform_open(std::uint32_t hi, std::uint32_t lo) noexcept {
  const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 12;
  return (static_cast<double>(bits) + 0.5) * 0x1p-52;
}

/// Standard normal draws addressed by (step, component) for one path.
///
/// Layout, fixed for bit stability:
///   key     = (low, high) 32-bit halves of master_seed
///   counter = (component / 2, step, path_index, stream tag)
/// Each Philox block yields two uniforms (words 0-1 and 2-3); component
/// parity selects one. Uniforms become normals through AS 241.
/// Streams with different tags are independent; coupled simulation uses
/// tag 0 for the first model and tag 1 for the second model's private noise.
class GaussianStream {
 public:
  GaussianStream(std::uint64_t master_seed, std::uint64_t path_index, std::uint32_t tag = 0)
      : key_{static_cast<std::uint32_t>(master_seed),
             static_cast<std::uint32_t>(master_seed >> 32)},
        path_(static_cast<std::uint32_t>(path_index)),
        tag_(tag) {
    detail::require(path_index <= 0xFFFFFFFFull, ErrorKind::InvalidArgument,
                    "path index must fit in 32 bits");
  }

  double normal(std::uint64_t step, std::uint32_t component) const {
    const auto block = Philox4x32::generate(
        {component / 2u, static_cast<std::uint32_t>(step), path_, tag_}, key_);
    const double u = (component % 2u == 0u) ? uniform_open(block[0], block[1])
                                            : uniform_open(block[2], block[3]);
    return numerics::normal_quantile(u);
  }

  /// Normals for components 0..out.size()-1 at one step.
  void fill(std::uint64_t step, std::span<double> out) const {
    const auto n = static_cast<std::uint32_t>(out.size());
    for (std::uint32_t c = 0; c < n; c += 2) {
      const auto block = Philox4x32::generate(
          {c / 2u, static_cast<std::uint32_t>(step), path_, tag_}, key_);
      out[c] = numerics::normal_quantile(uniform_open(block[0], block[1]));
      if (c + 1 < n) out[c + 1] = numerics::normal_quantile(uniform_open(block[2], block[3]));
    }
  }

 private:
  Philox4x32::Key key_;
  std::uint32_t path_;
  std::uint32_t tag_;
};

}  // namespace avgmart

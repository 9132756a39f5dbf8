#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "vfl/binary.hpp"
#include "vfl/core.hpp"
#include "vfl/rng.hpp"

namespace vfl {

// Persisted common-noise path. Increment n is the sum of `substeps` fine
// Brownian increments keyed by (master_seed, common_noise, path_id, step =
// n*substeps + s), so a path at dt/2 refines the path at dt exactly.
struct NoisePathRecord {
  static constexpr std::uint32_t kVersion = 1;

  double dt = 0.0;
  std::vector<double> dW;
  std::uint64_t master_seed = 0;
  std::uint64_t path_id = 0;
  std::uint64_t substeps = 1;

  std::size_t steps() const { return dW.size(); }

  static NoisePathRecord brownian(std::uint64_t master_seed, std::uint64_t path_id, double dt,
                                  std::size_t steps, std::uint32_t substeps = 1) {
    if (!(dt > 0.0)) throw InvalidInput("NoisePathRecord: dt must be positive");
    if (substeps == 0) throw InvalidInput("NoisePathRecord: substeps must be positive");
    NoisePathRecord r;
    r.dt = dt;
    r.master_seed = master_seed;
    r.path_id = path_id;
    r.substeps = substeps;
    r.dW.resize(steps);
    const double sd = std::sqrt(dt / substeps);
    for (std::size_t n = 0; n < steps; ++n) {
      double acc = 0.0;
      for (std::uint32_t s = 0; s < substeps; ++s) {
        StreamKey key{master_seed, StreamRole::common_noise,
                      static_cast<std::uint32_t>(path_id), 0,
                      static_cast<std::uint32_t>(n * substeps + s)};
        acc += sd * KeyedStream(key).normal_pair(0)[0];
      }
      r.dW[n] = acc;
    }
    return r;
  }

  // VFLW: magic, u32 version, f64 dt, u64 count, count f64 increments,
  // u64 n_seeds, then {master_seed, path_id, substeps}.
  void save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open " + path);
    binary::put_magic(os, "VFLW");
    binary::put<std::uint32_t>(os, kVersion);
    binary::put(os, dt);
    binary::put<std::uint64_t>(os, dW.size());
    for (double v : dW) binary::put(os, v);
    binary::put<std::uint64_t>(os, 3);
    binary::put(os, master_seed);
    binary::put(os, path_id);
    binary::put(os, substeps);
  }

  static NoisePathRecord load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open " + path);
    binary::expect_magic(is, "VFLW");
    binary::expect_version(binary::get<std::uint32_t>(is), kVersion, "VFLW");
    NoisePathRecord r;
    r.dt = binary::get<double>(is);
    const auto n = binary::get<std::uint64_t>(is);
    if (n > (1ull << 32)) throw FormatError("VFLW: implausible step count");
    r.dW.resize(n);
    for (auto& v : r.dW) v = binary::get<double>(is);
    const auto n_seeds = binary::get<std::uint64_t>(is);
    if (n_seeds != 3) throw FormatError("VFLW: unexpected seed block");
    r.master_seed = binary::get<std::uint64_t>(is);
    r.path_id = binary::get<std::uint64_t>(is);
    r.substeps = binary::get<std::uint64_t>(is);
    return r;
  }

  bool operator==(const NoisePathRecord&) const = default;
};

}  // namespace vfl

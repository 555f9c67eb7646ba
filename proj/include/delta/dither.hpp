#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "delta/errors.hpp"

namespace delta {

// K-periodic excitation added to the sampling point: cosine on the decision
// channel, sine on the aggregate channel. The angle is computed from
// k mod period so value(k + period) == value(k) bit-for-bit.
struct DitherSchedule {
  int period = 4;
  double amplitude = 5.0;
  std::vector<double> phases;  // per-agent offsets; empty means all zero

  std::pair<double, double> at(int agent, std::int64_t k) const {
    const double phase = phases.empty() ? 0.0 : phases[static_cast<size_t>(agent)];
    const double angle =
        6.283185307179586476925287 * static_cast<double>(k % period) /
            static_cast<double>(period) +
        phase;
    return {amplitude * std::cos(angle), amplitude * std::sin(angle)};
  }

  void validate(int n_agents) const {
    if (period < 1) throw ConfigError("dither period must be positive");
    if (!(amplitude > 0.0)) throw ConfigError("dither amplitude must be positive");
    if (!phases.empty() && static_cast<int>(phases.size()) != n_agents)
      throw ConfigError("dither phases must be empty or one per agent");
  }
};

}  // namespace delta

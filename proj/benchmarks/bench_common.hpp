#pragma once

#include "psno/datagen.hpp"
#include "psno/operators.hpp"
#include "psno/rng.hpp"

namespace bench {

inline psno::datagen::NormalizationStats stats() {
  psno::datagen::NormalizationStats s;
  s.delta_min = 0.0;
  s.delta_max = 3.141592653589793;
  s.omega_absmax = 10.0;
  return s;
}

inline psno::Tensor input_window(std::uint64_t seed) {
  psno::Pcg64 rng(seed, 1);
  psno::Tensor t({3, 2});
  for (double& v : t.values()) v = rng.uniform(0.0, 1.0);
  return t;
}

}  // namespace bench

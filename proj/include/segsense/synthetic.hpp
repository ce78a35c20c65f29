#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "segsense/errors.hpp"
#include "segsense/mask.hpp"
#include "segsense/rng.hpp"

namespace segsense {

/// Corruption model of a built-in stand-in predictor. The noise level at
/// epoch ep is flip_rate * exp(-epoch_decay * ep), so metric traces saturate
/// exponentially as training "progresses".
struct Degradation {
  double flip_rate = 0.2;        // in [0, 1]; 1 makes labels independent of truth
  double boundary_jitter = 0.0;  // maximum dilation/erosion radius in pixels at ep = 0
  double epoch_decay = 0.1;

  void validate() const {
    if (!(flip_rate >= 0.0 && flip_rate <= 1.0)) throw UsageError("flip_rate must lie in [0, 1]");
    if (!(boundary_jitter >= 0.0)) throw UsageError("boundary_jitter must be >= 0");
    if (!(epoch_decay >= 0.0)) throw UsageError("epoch_decay must be >= 0");
  }

  double noise_at(double epoch) const { return flip_rate * std::exp(-epoch_decay * epoch); }
};

/// One 4-neighbour dilation (grow) or erosion (shrink) step.
inline Mask morph_step(const Mask& m, bool grow) {
  Mask out = m;
  const std::size_t w = m.width(), h = m.height();
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      if (m(y, x) == grow) continue;
      const bool touch = (y > 0 && m(y - 1, x) == grow) || (y + 1 < h && m(y + 1, x) == grow) ||
                         (x > 0 && m(y, x - 1) == grow) || (x + 1 < w && m(y, x + 1) == grow);
      if (touch) out.set(y, x, grow);
    }
  }
  return out;
}

/// Corrupted copy of `gt` for the given epoch. Boundary jitter moves the
/// outline by a random integer radius; each pixel then flips with
/// probability noise / 2 and carries confidence 1 - noise / 4 in its label.
inline SoftMask synthetic_predict(const Mask& gt, const Degradation& deg, std::uint64_t seed,
                                  double epoch = 0.0) {
  deg.validate();
  Rng rng(hash_combine(seed, {static_cast<std::uint64_t>(std::llround(epoch * 1024.0))}));
  const double decay = std::exp(-deg.epoch_decay * epoch);
  const double noise = deg.flip_rate * decay;

  Mask shaped = gt;
  if (deg.boundary_jitter > 0.0) {
    const double amplitude = deg.boundary_jitter * decay;
    const long radius = std::lround(rng.uniform(-amplitude, amplitude));
    for (long i = 0; i < std::labs(radius); ++i) shaped = morph_step(shaped, radius > 0);
  }

  const double flip = noise / 2.0;
  const double hi = 1.0 - noise / 4.0;
  const double lo = noise / 4.0;
  std::vector<double> out(gt.size());
  const auto v = shaped.values();
  for (std::size_t k = 0; k < out.size(); ++k) {
    bool label = v[k] != 0;
    if (flip > 0.0 && rng.uniform() < flip) label = !label;
    out[k] = label ? hi : lo;
  }
  return SoftMask(gt.width(), gt.height(), std::move(out));
}

}  // namespace segsense

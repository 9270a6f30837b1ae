#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "evsplat/events.hpp"
#include "evsplat/image.hpp"

namespace evsplat {

struct SimConfig {
  double contrast_threshold = 0.25;  // A, log units
  Timestamp refractory_us = 0;
  double noise_rate = 0.0;  // uniform noise events per pixel per second
  double gamma = 2.2;
  double epsilon = 1e-5;

  void validate() const;
};

/// Threshold-crossing event model on linearly interpolated log brightness.
/// Each emitted event moves the pixel's reference level by exactly +-A.
EventStream frames_to_events(std::span<const Image> frames, std::span<const Timestamp> times, const SimConfig& cfg,
                             std::uint64_t seed);

/// max over pixels |A * accumulate(events, t_first, t_last) - (L_last - L_first)| for
/// a noise-free simulation of the sequence. Bounded by A when refractory is 0.
double roundtrip_check(std::span<const Image> frames, std::span<const Timestamp> times, const SimConfig& cfg);

}  // namespace evsplat

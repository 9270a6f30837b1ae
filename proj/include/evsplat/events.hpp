#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "evsplat/image.hpp"

namespace evsplat {

/// Microseconds since the start of the recording.
using Timestamp = std::uint64_t;

struct Event {
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  Timestamp t = 0;
  std::int8_t p = 1;  // -1 or +1

  bool operator==(const Event&) const = default;
};

/// Canonical stream order: by t, ties broken by (y, x, p).
bool event_before(const Event& a, const Event& b);

struct Resolution {
  int width = 0;
  int height = 0;
  bool operator==(const Resolution&) const = default;
};

/// Immutable, time-sorted sequence of events at a fixed sensor resolution.
class EventStream {
 public:
  EventStream() = default;
  /// Validates coordinates, polarities, ordering and threshold; throws ValidationError.
  EventStream(Resolution resolution, double contrast_threshold, std::vector<Event> events);

  /// Sorts `events` into canonical order before validating.
  static EventStream from_unsorted(Resolution resolution, double contrast_threshold,
                                   std::vector<Event> events);

  Resolution resolution() const { return resolution_; }
  double contrast_threshold() const { return contrast_threshold_; }
  const std::vector<Event>& events() const { return events_; }
  std::size_t size() const { return events_.size(); }
  bool empty() const { return events_.empty(); }

  bool operator==(const EventStream&) const = default;

 private:
  Resolution resolution_{};
  double contrast_threshold_ = 1.0;
  std::vector<Event> events_;
};

/// Per-pixel sum of polarities over the half-open window [t_start, t_end).
AccumImage accumulate(const EventStream& stream, Timestamp t_start, Timestamp t_end);

struct NoiseFilterParams {
  Timestamp tau_us = 10'000;
  int radius = 1;
};

/// Background-activity correlation filter. An event survives iff some earlier event
/// (any polarity, any pixel in the (2r+1)^2 neighbourhood, the event itself excluded)
/// happened no more than tau before it. Output keeps input order.
EventStream y_noise_filter(const EventStream& stream, Timestamp tau_us, int radius);
inline EventStream y_noise_filter(const EventStream& stream, const NoiseFilterParams& params = {}) {
  return y_noise_filter(stream, params.tau_us, params.radius);
}

/// Element k is accumulate(stream, t0, view_times[k]), built incrementally.
std::vector<AccumImage> split_windows(const EventStream& stream, Timestamp t0,
                                      std::span<const Timestamp> view_times);

}  // namespace evsplat

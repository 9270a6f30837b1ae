#include "evsplat/events.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <tuple>

#include "evsplat/error.hpp"

namespace evsplat {

bool event_before(const Event& a, const Event& b) {
  return std::tie(a.t, a.y, a.x, a.p) < std::tie(b.t, b.y, b.x, b.p);
}

EventStream::EventStream(Resolution resolution, double contrast_threshold, std::vector<Event> events)
    : resolution_(resolution), contrast_threshold_(contrast_threshold), events_(std::move(events)) {
  if (resolution_.width <= 0 || resolution_.height <= 0 || resolution_.width > 65535 ||
      resolution_.height > 65535) {
    throw ValidationError("event stream resolution must be in 1..65535");
  }
  if (!(contrast_threshold_ > 0.0) || !std::isfinite(contrast_threshold_)) {
    throw ValidationError("contrast threshold must be positive and finite");
  }
  for (std::size_t i = 0; i < events_.size(); ++i) {
    const Event& e = events_[i];
    if (e.x >= resolution_.width || e.y >= resolution_.height) {
      throw ValidationError("event " + std::to_string(i) + " lies outside the sensor");
    }
    if (e.p != 1 && e.p != -1) {
      throw ValidationError("event " + std::to_string(i) + " has polarity other than +-1");
    }
    if (i > 0 && events_[i - 1].t > e.t) {
      throw ValidationError("events are not sorted by timestamp at index " + std::to_string(i));
    }
  }
}

EventStream EventStream::from_unsorted(Resolution resolution, double contrast_threshold,
                                       std::vector<Event> events) {
  std::sort(events.begin(), events.end(), event_before);
  return EventStream(resolution, contrast_threshold, std::move(events));
}

namespace {

std::pair<std::size_t, std::size_t> window_range(const std::vector<Event>& events, Timestamp t_start,
                                                 Timestamp t_end) {
  auto by_time = [](const Event& e, Timestamp t) { return e.t < t; };
  auto lo = std::lower_bound(events.begin(), events.end(), t_start, by_time);
  auto hi = std::lower_bound(lo, events.end(), t_end, by_time);
  return {static_cast<std::size_t>(lo - events.begin()), static_cast<std::size_t>(hi - events.begin())};
}

void add_range(const EventStream& stream, std::size_t first, std::size_t last, AccumImage& out) {
  const auto& events = stream.events();
  for (std::size_t i = first; i < last; ++i) out(events[i].x, events[i].y) += events[i].p;
}

}  // namespace

AccumImage accumulate(const EventStream& stream, Timestamp t_start, Timestamp t_end) {
  if (t_start > t_end) throw ValidationError("accumulate: window start after window end");
  AccumImage out(stream.resolution().width, stream.resolution().height);
  auto [first, last] = window_range(stream.events(), t_start, t_end);
  add_range(stream, first, last, out);
  return out;
}

EventStream y_noise_filter(const EventStream& stream, Timestamp tau_us, int radius) {
  if (tau_us == 0) throw ValidationError("noise filter tau must be positive");
  if (radius < 1) throw ValidationError("noise filter radius must be >= 1");

  const int w = stream.resolution().width;
  const int h = stream.resolution().height;
  // Most recent timestamp per pixel; `seen` distinguishes "never fired" from t = 0.
  std::vector<Timestamp> last(static_cast<std::size_t>(w) * h, 0);
  std::vector<std::uint8_t> seen(last.size(), 0);

  std::vector<Event> kept;
  kept.reserve(stream.size());
  for (const Event& e : stream.events()) {
    bool supported = false;
    const int x0 = std::max(0, e.x - radius), x1 = std::min(w - 1, e.x + radius);
    const int y0 = std::max(0, e.y - radius), y1 = std::min(h - 1, e.y + radius);
    for (int y = y0; y <= y1 && !supported; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const std::size_t idx = static_cast<std::size_t>(y) * w + x;
        if (seen[idx] && e.t - last[idx] <= tau_us) {
          supported = true;
          break;
        }
      }
    }
    if (supported) kept.push_back(e);
    const std::size_t self = static_cast<std::size_t>(e.y) * w + e.x;
    last[self] = e.t;
    seen[self] = 1;
  }
  return EventStream(stream.resolution(), stream.contrast_threshold(), std::move(kept));
}

std::vector<AccumImage> split_windows(const EventStream& stream, Timestamp t0,
                                      std::span<const Timestamp> view_times) {
  for (std::size_t k = 0; k < view_times.size(); ++k) {
    if (view_times[k] < t0) throw ValidationError("split_windows: view time before t0");
    if (k > 0 && view_times[k] <= view_times[k - 1]) {
      throw ValidationError("split_windows: view times must be strictly increasing");
    }
  }
  std::vector<AccumImage> out;
  out.reserve(view_times.size());
  AccumImage running(stream.resolution().width, stream.resolution().height);
  Timestamp prev = t0;
  for (Timestamp t : view_times) {
    auto [first, last] = window_range(stream.events(), prev, t);
    add_range(stream, first, last, running);
    out.push_back(running);
    prev = t;
  }
  return out;
}

}  // namespace evsplat

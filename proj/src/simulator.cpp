#include "evsplat/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "evsplat/error.hpp"

namespace evsplat {

void SimConfig::validate() const {
  if (!(contrast_threshold > 0.0)) throw ValidationError("contrast threshold must be positive");
  if (!(noise_rate >= 0.0)) throw ValidationError("noise rate must be >= 0");
  if (!(gamma > 0.0) || !(epsilon > 0.0)) throw ValidationError("gamma and epsilon must be positive");
}

namespace {

// Absorbs pow/log round-off so that a step of exactly A still fires.
constexpr double kCrossingTolerance = 1e-9;

double to_log(double v, const SimConfig& cfg) {
  return std::log(std::pow(std::max(0.0, v), cfg.gamma) + cfg.epsilon);
}

void check_inputs(std::span<const Image> frames, std::span<const Timestamp> times) {
  if (frames.size() != times.size()) throw ValidationError("frames and times differ in length");
  if (frames.size() < 2) throw ValidationError("need at least two frames");
  for (std::size_t k = 1; k < frames.size(); ++k) {
    require_same_shape(frames[0], frames[k], "frames_to_events");
    if (times[k] <= times[k - 1]) throw ValidationError("frame times must be strictly increasing");
  }
  if (frames[0].width() > 65535 || frames[0].height() > 65535 || frames[0].empty()) {
    throw ValidationError("frame resolution out of range");
  }
}

}  // namespace

EventStream frames_to_events(std::span<const Image> frames, std::span<const Timestamp> times, const SimConfig& cfg,
                             std::uint64_t seed) {
  cfg.validate();
  check_inputs(frames, times);
  const int w = frames[0].width(), h = frames[0].height();
  const double a = cfg.contrast_threshold;

  std::vector<double> prev(frames[0].size()), ref(frames[0].size());
  for (std::size_t i = 0; i < prev.size(); ++i) prev[i] = ref[i] = to_log(frames[0][i], cfg);
  std::vector<Timestamp> last_fire(prev.size(), 0);
  std::vector<std::uint8_t> fired(prev.size(), 0);

  std::vector<Event> events;
  for (std::size_t k = 1; k < frames.size(); ++k) {
    const Timestamp t_lo = times[k - 1], t_hi = times[k];
    const double span = static_cast<double>(t_hi - t_lo);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        const double from = prev[i];
        const double to = to_log(frames[k](x, y), cfg);
        prev[i] = to;
        if (to == from) continue;
        const int polarity = to > from ? 1 : -1;
        while (true) {
          const double level = ref[i] + polarity * a;
          const bool crosses = polarity > 0 ? level <= to + kCrossingTolerance : level >= to - kCrossingTolerance;
          if (!crosses) break;
          ref[i] = level;
          const double frac = std::clamp((level - from) / (to - from), 0.0, 1.0);
          // Boundary crossings belong to the earlier interval, hence the t_hi - 1 cap.
          const Timestamp t = std::min(t_lo + static_cast<Timestamp>(std::floor(frac * span)), t_hi - 1);
          if (fired[i] && t - last_fire[i] < cfg.refractory_us) continue;
          fired[i] = 1;
          last_fire[i] = t;
          events.push_back(Event{static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y), t,
                                 static_cast<std::int8_t>(polarity)});
        }
      }
    }
  }

  if (cfg.noise_rate > 0.0) {
    std::mt19937_64 rng(seed);
    const double seconds = static_cast<double>(times.back() - times.front()) * 1e-6;
    std::poisson_distribution<std::uint64_t> count_dist(cfg.noise_rate * seconds * w * h);
    const std::uint64_t count = count_dist(rng);
    std::uniform_int_distribution<int> ux(0, w - 1), uy(0, h - 1);
    std::uniform_int_distribution<Timestamp> ut(times.front(), times.back() - 1);
    std::bernoulli_distribution up(0.5);
    for (std::uint64_t n = 0; n < count; ++n) {
      Event e;
      e.x = static_cast<std::uint16_t>(ux(rng));
      e.y = static_cast<std::uint16_t>(uy(rng));
      e.t = ut(rng);
      e.p = up(rng) ? 1 : -1;
      events.push_back(e);
    }
  }
  return EventStream::from_unsorted({w, h}, a, std::move(events));
}

double roundtrip_check(std::span<const Image> frames, std::span<const Timestamp> times, const SimConfig& cfg) {
  SimConfig clean = cfg;
  clean.noise_rate = 0.0;
  const EventStream stream = frames_to_events(frames, times, clean, 0);
  const AccumImage sum = accumulate(stream, times.front(), times.back());
  double worst = 0.0;
  for (int y = 0; y < frames[0].height(); ++y) {
    for (int x = 0; x < frames[0].width(); ++x) {
      const double change = to_log(frames.back()(x, y), clean) - to_log(frames.front()(x, y), clean);
      worst = std::max(worst, std::abs(clean.contrast_threshold * sum(x, y) - change));
    }
  }
  return worst;
}

}  // namespace evsplat

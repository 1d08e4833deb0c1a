#pragma once

// ============================================================================
// Seeded synthetic series for harness runs and training sanity checks.
//
//   * make_sine_trend       — per channel: two incommensurate sinusoids, a
//                             mild linear trend, and 0.1-scale Gaussian
//                             noise.  Strongly forecastable; a learned model
//                             should beat the last-value baseline easily.
//   * make_regime_switching — mean level and amplitude alternate between two
//                             regimes every `segment` steps.  Per-window
//                             raw statistics carry the regime, so models that
//                             can see them (the blending gate) have an edge
//                             over purely stationarized ones.
//   * make_white_noise / make_random_walk — scalar diagnostics series for
//                             the stationarity statistic (strongly
//                             stationary vs unit root).
// ============================================================================

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "canet/dataset.hpp"
#include "canet/random.hpp"

namespace canet {

inline SeriesFrame frame_from_channels(const std::vector<std::vector<double>>& chans,
                                       const std::string& prefix = "c") {
  SeriesFrame f;
  f.C = static_cast<std::int64_t>(chans.size());
  f.T = f.C > 0 ? static_cast<std::int64_t>(chans[0].size()) : 0;
  for (std::int64_t c = 0; c < f.C; ++c) {
    if (static_cast<std::int64_t>(chans[static_cast<std::size_t>(c)].size()) != f.T) {
      throw shape_error("frame_from_channels: ragged channel lengths");
    }
    f.channels.push_back(prefix + std::to_string(c));
    f.values.insert(f.values.end(), chans[static_cast<std::size_t>(c)].begin(),
                    chans[static_cast<std::size_t>(c)].end());
  }
  return f;
}

inline SeriesFrame make_sine_trend(std::int64_t C, std::int64_t T, std::uint64_t seed) {
  auto eng = make_stream(seed, "synthetic");
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> noise(0.0, 1.0);

  std::vector<std::vector<double>> chans;
  for (std::int64_t c = 0; c < C; ++c) {
    const double p1 = 24.0;
    const double p2 = 57.0 + 8.0 * static_cast<double>(c);
    const double a1 = 1.0;
    const double a2 = 0.6;
    const double ph1 = phase(eng);
    const double ph2 = phase(eng);
    const double slope = (0.3 + 0.2 * static_cast<double>(c)) / static_cast<double>(T);
    std::vector<double> x(static_cast<std::size_t>(T));
    for (std::int64_t t = 0; t < T; ++t) {
      const double td = static_cast<double>(t);
      x[static_cast<std::size_t>(t)] =
          a1 * std::sin(2.0 * std::numbers::pi * td / p1 + ph1) +
          a2 * std::sin(2.0 * std::numbers::pi * td / p2 + ph2) + slope * td +
          0.1 * noise(eng);
    }
    chans.push_back(std::move(x));
  }
  return frame_from_channels(chans);
}

inline SeriesFrame make_regime_switching(std::int64_t C, std::int64_t T, std::uint64_t seed,
                                         std::int64_t segment = 80, double level = 2.5) {
  auto eng = make_stream(seed, "synthetic");
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> noise(0.0, 1.0);

  std::vector<std::vector<double>> chans;
  for (std::int64_t c = 0; c < C; ++c) {
    const double ph = phase(eng);
    const double period = 20.0 + 4.0 * static_cast<double>(c);
    std::vector<double> x(static_cast<std::size_t>(T));
    for (std::int64_t t = 0; t < T; ++t) {
      const bool high = ((t / segment) % 2) == 0;
      const double mean = high ? level : -level;
      const double amp = high ? 1.3 : 0.6;
      x[static_cast<std::size_t>(t)] =
          mean +
          amp * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / period + ph) +
          0.05 * noise(eng);
    }
    chans.push_back(std::move(x));
  }
  return frame_from_channels(chans);
}

inline std::vector<double> make_white_noise(std::int64_t T, std::uint64_t seed) {
  auto eng = make_stream(seed, "synthetic");
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<double> x(static_cast<std::size_t>(T));
  for (auto& v : x) v = noise(eng);
  return x;
}

inline std::vector<double> make_random_walk(std::int64_t T, std::uint64_t seed) {
  auto eng = make_stream(seed, "synthetic");
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<double> x(static_cast<std::size_t>(T));
  double acc = 0.0;
  for (auto& v : x) {
    acc += noise(eng);
    v = acc;
  }
  return x;
}

}  // namespace canet

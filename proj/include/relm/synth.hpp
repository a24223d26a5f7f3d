#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <string_view>

#include "relm/dataset.hpp"
#include "relm/errors.hpp"
#include "relm/tensor.hpp"

namespace relm {

enum class SynthKind : std::uint8_t { sine, ar2, random_walk };

inline std::string_view to_string(SynthKind k) noexcept {
  switch (k) {
    case SynthKind::sine: return "sine";
    case SynthKind::ar2: return "ar2";
    case SynthKind::random_walk: return "random_walk";
  }
  return "?";
}

inline SynthKind parse_synth_kind(std::string_view s) {
  if (s == "sine") return SynthKind::sine;
  if (s == "ar2") return SynthKind::ar2;
  if (s == "random_walk" || s == "rw") return SynthKind::random_walk;
  throw FormatError("unknown synthetic series '" + std::string(s) + "'");
}

inline constexpr double kSinePeriod = 25.0;

/// Deterministic synthetic series; eps_t are standard normal draws.
///   sine:        sin(2 pi t / 25) + noise eps_t
///   ar2:         y_0 = y_1 = 1, y_t = 0.6 y_{t-1} - 0.2 y_{t-2} + noise eps_t
///   random_walk: y_0 = 0, y_t = y_{t-1} + noise eps_t
inline RawSeries synth_series(SynthKind kind, std::size_t length, double noise, std::uint64_t seed) {
  if (length < 3) throw DatasetError("synthetic series needs length >= 3");
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw DatasetError("noise must be finite and non-negative");
  SeededRng rng(seed);
  RawSeries s{std::string(to_string(kind)), std::vector<double>(length)};
  auto& y = s.values;
  switch (kind) {
    case SynthKind::sine:
      for (std::size_t t = 0; t < length; ++t) {
        y[t] = std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / kSinePeriod);
        if (noise > 0.0) y[t] += noise * rng.normal();
      }
      break;
    case SynthKind::ar2:
      y[0] = y[1] = 1.0;
      for (std::size_t t = 2; t < length; ++t) {
        y[t] = 0.6 * y[t - 1] - 0.2 * y[t - 2];
        if (noise > 0.0) y[t] += noise * rng.normal();
      }
      break;
    case SynthKind::random_walk:
      y[0] = 0.0;
      for (std::size_t t = 1; t < length; ++t) y[t] = y[t - 1] + (noise > 0.0 ? noise * rng.normal() : 0.0);
      break;
  }
  return s;
}

}  // namespace relm

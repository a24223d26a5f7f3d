#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string_view>

namespace relm {

/// Memory regions a cell program touches. Reads and writes are tallied per
/// region so a mismatch against a closed form can be traced to its term.
enum class Region : std::uint8_t {
  input,      // X
  weight,     // W and gate input weights
  bias,       // b and gate biases
  recurrent,  // alpha, gate recurrent weights u, NARMAX feedback weights
  history,    // previously written H entries (or the zero initial state)
  feedback,   // teacher output y and error e signals
  gate,       // per-cell gate activations (LSTM o/forget/in, GRU z/r)
  state,      // LSTM carry c
  output,     // H
};

inline constexpr std::size_t kRegionCount = 9;

inline constexpr std::string_view region_name(Region r) noexcept {
  constexpr std::array<std::string_view, kRegionCount> names{
      "input", "weight", "bias", "recurrent", "history", "feedback", "gate", "state", "output"};
  return names[static_cast<std::size_t>(r)];
}

/// Zero-cost probe used on every production path.
struct NoProbe {
  static constexpr bool counting = false;
  constexpr void read(Region, std::uint64_t = 1) noexcept {}
  constexpr void write(Region, std::uint64_t = 1) noexcept {}
  constexpr void flop(std::uint64_t = 1) noexcept {}
};

/// Counting probe: one read is one scalar load from global storage, one write
/// one scalar store, one flop one scalar add, subtract or multiply.
/// Activation functions are not counted as flops.
struct CountingProbe {
  static constexpr bool counting = true;

  std::array<std::uint64_t, kRegionCount> reads{};
  std::array<std::uint64_t, kRegionCount> writes{};
  std::uint64_t flops = 0;

  void read(Region r, std::uint64_t n = 1) noexcept { reads[static_cast<std::size_t>(r)] += n; }
  void write(Region r, std::uint64_t n = 1) noexcept { writes[static_cast<std::size_t>(r)] += n; }
  void flop(std::uint64_t n = 1) noexcept { flops += n; }

  std::uint64_t total_reads() const noexcept {
    std::uint64_t s = 0;
    for (auto v : reads) s += v;
    return s;
  }
  std::uint64_t total_writes() const noexcept {
    std::uint64_t s = 0;
    for (auto v : writes) s += v;
    return s;
  }

  CountingProbe& operator+=(const CountingProbe& o) noexcept {
    for (std::size_t k = 0; k < kRegionCount; ++k) {
      reads[k] += o.reads[k];
      writes[k] += o.writes[k];
    }
    flops += o.flops;
    return *this;
  }
};

}  // namespace relm

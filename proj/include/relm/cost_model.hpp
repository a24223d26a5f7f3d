#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "relm/arch.hpp"
#include "relm/dataset.hpp"
#include "relm/errors.hpp"
#include "relm/format.hpp"
#include "relm/hgen.hpp"
#include "relm/probe.hpp"

namespace relm {

struct CostCounts {
  double reads = 0.0;
  double writes = 0.0;
  double flops = 0.0;

  double mem_to_flop() const noexcept { return flops > 0.0 ? (reads + writes) / flops : 0.0; }
  friend bool operator==(const CostCounts&, const CostCounts&) = default;
};

struct CostReport {
  ArchKind kind = ArchKind::elman;
  Backend backend = Backend::basic_parallel;
  std::size_t S = 1, Q = 1, M = 1, F = 0, R = 0, TW = 16;
  CostCounts predicted;
  std::optional<CostCounts> measured;
  CountingProbe raw;  // whole-run tallies behind `measured`
  std::size_t cells = 0;
  std::string note;

  double ratio_mem_to_flop() const noexcept { return (measured ? *measured : predicted).mem_to_flop(); }
};

/// Per-cell counts of the basic backend from the closed forms of the cost
/// table, evaluated in exact integer arithmetic. For the tiled backend the
/// Elman read count is replaced by the staged closed form.
inline CostCounts predict_costs(const ArchitectureSpec& spec, const ExecConfig& cfg) {
  spec.validate();
  const std::uint64_t S = spec.S, Q = spec.Q, M = spec.M, F = spec.F, R = spec.R;
  const std::uint64_t tri = Q * (Q + 1) / 2;  // Q(Q+1)/2 is always integral
  std::uint64_t reads = 0, writes = Q, flops = 0;
  switch (spec.kind) {
    case ArchKind::elman:
      reads = Q * (2 * S + Q + 2);
      flops = Q * (2 * S + Q + 2);
      break;
    case ArchKind::jordan:
      // Q(2S + 1 + (Q+1)(1/2 + M)) and Q(2S + 1 + (Q+1)/2 (2SM + M))
      reads = Q * (2 * S + 1) + tri + Q * (Q + 1) * M;
      flops = Q * (2 * S + 1) + tri * (2 * S * M + M);
      break;
    case ArchKind::narmax:
      reads = Q * (2 * S + 1) + 2 * (2 * F + M + R);
      flops = Q * (2 * S + 1 + 2 * F + R * (2 + 2 * S * M + M));
      break;
    case ArchKind::fully_connected:
      reads = Q * (2 * S + 1 + 2 * M * Q);
      flops = Q * (2 * S + Q + 2 * Q * M);
      break;
    case ArchKind::lstm:
      reads = Q * (5 * S + 13);
      writes = 5 * Q;
      flops = Q * (8 * S + 18);
      break;
    case ArchKind::gru:
      reads = Q * (4 * S + 8);
      writes = 3 * Q;
      flops = Q * (3 * S + 17);
      break;
  }
  if (cfg.backend == Backend::tiled_parallel && spec.kind == ArchKind::elman) reads = staged_read_count(spec, cfg);
  return {static_cast<double>(reads), static_cast<double>(writes), static_cast<double>(flops)};
}

/// True when this build carries the counting interpreter.
inline constexpr bool counting_available() noexcept {
#ifdef RELM_NO_COUNTING
  return false;
#else
  return true;
#endif
}

/// Runs the configured backend through the counting probe and reports
/// whole-run tallies divided by the number of cells n * M.
inline CostReport measure_costs(const TimeSeriesDataset& ds, const ArchitectureSpec& spec, const WeightSet& w,
                                const ExecConfig& cfg) {
  if constexpr (!counting_available()) {
    throw UnsupportedError("counting mode is compiled out of this build (RELM_NO_COUNTING)");
  }
  CostReport r;
  r.kind = spec.kind;
  r.backend = cfg.backend;
  r.S = spec.S;
  r.Q = spec.Q;
  r.M = spec.M;
  r.F = spec.F;
  r.R = spec.R;
  r.TW = cfg.block_size;
  r.predicted = predict_costs(spec, cfg);
  compute_h_counted(ds, spec, w, cfg, r.raw);
  r.cells = ds.rows() * spec.M;
  const auto cells = static_cast<double>(r.cells);
  r.measured = CostCounts{static_cast<double>(r.raw.total_reads()) / cells,
                          static_cast<double>(r.raw.total_writes()) / cells, static_cast<double>(r.raw.flops) / cells};
  if (spec.kind == ArchKind::narmax) {
    r.note = "narmax closed form reported, not asserted";
  } else if (cfg.backend == Backend::tiled_parallel) {
    r.note = "tiled: block-averaged staged loads per cell";
  }
  return r;
}

inline constexpr const char* kCostCsvHeader =
    "arch,backend,S,Q,M,F,R,TW,predicted_reads,measured_reads,predicted_writes,measured_writes,"
    "predicted_flops,measured_flops,predicted_ratio,measured_ratio,note";

inline void write_cost_csv_row(std::ostream& out, const CostReport& r) {
  auto num = [](double v) { return format_double(v); };
  out << to_string(r.kind) << ',' << to_string(r.backend) << ',' << r.S << ',' << r.Q << ',' << r.M << ',' << r.F
      << ',' << r.R << ',' << r.TW << ',' << num(r.predicted.reads) << ','
      << (r.measured ? num(r.measured->reads) : "") << ',' << num(r.predicted.writes) << ','
      << (r.measured ? num(r.measured->writes) : "") << ',' << num(r.predicted.flops) << ','
      << (r.measured ? num(r.measured->flops) : "") << ',' << num(r.predicted.mem_to_flop()) << ','
      << (r.measured ? num(r.measured->mem_to_flop()) : "") << ',' << r.note << '\n';
}

}  // namespace relm

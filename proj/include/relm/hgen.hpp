#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "relm/arch.hpp"
#include "relm/dataset.hpp"
#include "relm/errors.hpp"
#include "relm/parallel.hpp"
#include "relm/probe.hpp"
#include "relm/tensor.hpp"

namespace relm {

enum class Backend : std::uint8_t { sequential, basic_parallel, tiled_parallel };

inline std::string_view to_string(Backend b) noexcept {
  switch (b) {
    case Backend::sequential: return "seq";
    case Backend::basic_parallel: return "basic";
    case Backend::tiled_parallel: return "tiled";
  }
  return "?";
}

inline Backend parse_backend(std::string_view s) {
  if (s == "seq" || s == "sequential") return Backend::sequential;
  if (s == "basic" || s == "basic_parallel") return Backend::basic_parallel;
  if (s == "tiled" || s == "tiled_parallel" || s == "opt") return Backend::tiled_parallel;
  throw FormatError("unknown backend '" + std::string(s) + "'");
}

struct ExecConfig {
  Backend backend = Backend::sequential;
  std::size_t block_size = 16;  // BS; the tile width TW equals BS
  unsigned workers = 0;         // 0 = auto (see resolve_workers)
  bool final_only = false;      // keep only H(Q) as an n x M matrix
  bool debug_checks = false;    // write-count shadow + staged-read barrier checks
};

/// Duration records (seconds). `staging` covers output allocation and worker
/// setup, `h_compute` the cell programs themselves.
struct HTiming {
  double staging = 0.0;
  double h_compute = 0.0;
  double total = 0.0;
};

struct TileStats {
  std::size_t dot_phases_per_step = 0;  // input-projection tile phases per time step
  std::uint64_t barriers = 0;           // barrier phases executed over all blocks
};

/// H as n x M x Q (H(i, j, t-1) = h_ij[t]) or, with final_only, the n x M
/// slice H(Q).
struct HiddenTensor {
  DenseTensor H;
  bool final_only = false;
  HTiming timing;
  TileStats tiles;

  DenseTensor final_slice() const {
    if (final_only) return H;
    const std::size_t n = H.extent(0), M = H.extent(1), Q = H.extent(2);
    DenseTensor out({n, M});
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < M; ++j) out(i, j) = H(i, j, Q - 1);
    }
    return out;
  }
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

inline void check_inputs(const TimeSeriesDataset& ds, const ArchitectureSpec& spec,
                         const WeightSet& w, const ExecConfig& cfg) {
  check_weights(spec, w);
  if (ds.rows() == 0) throw DimensionError("dataset has no rows");
  if (ds.S != spec.S || ds.Q != spec.Q) {
    throw DimensionError("dataset (S=" + std::to_string(ds.S) + ", Q=" + std::to_string(ds.Q) +
                         ") does not match architecture (S=" + std::to_string(spec.S) +
                         ", Q=" + std::to_string(spec.Q) + ")");
  }
  if (ds.X.dims() != std::vector<std::size_t>{ds.rows(), ds.S, ds.Q} ||
      ds.teacher.dims() != std::vector<std::size_t>{ds.rows(), ds.Q}) {
    throw DimensionError("dataset tensors are inconsistent");
  }
  if (cfg.block_size == 0) throw DimensionError("block size must be positive");
}

/// Counts stores per H entry when debug checks are on; every entry must end
/// with exactly one store.
class WriteShadow {
 public:
  explicit WriteShadow(std::size_t n) : counts_(std::make_unique<std::atomic<std::uint8_t>[]>(n)), n_(n) {
    for (std::size_t k = 0; k < n; ++k) counts_[k].store(0, std::memory_order_relaxed);
  }
  void mark(std::size_t k) noexcept { counts_[k].fetch_add(1, std::memory_order_relaxed); }
  void verify() const {
    for (std::size_t k = 0; k < n_; ++k) {
      const auto c = counts_[k].load(std::memory_order_relaxed);
      if (c != 1) {
        throw std::logic_error("H entry " + std::to_string(k) + " written " + std::to_string(c) +
                               " times (expected exactly once)");
      }
    }
  }

 private:
  std::unique_ptr<std::atomic<std::uint8_t>[]> counts_;
  std::size_t n_;
};

struct HOutput {
  DenseTensor* H;
  bool final_only;
  WriteShadow* shadow;
  std::size_t Q;

  void store(std::size_t i, std::size_t j, std::size_t t, double h) const noexcept {
    if (final_only) {
      if (t != Q) return;
      const std::size_t k = H->offset(i, j);
      H->raw()[k] = h;
      if (shadow) shadow->mark(k);
    } else {
      const std::size_t k = H->offset(i, j, t - 1);
      H->raw()[k] = h;
      if (shadow) shadow->mark(k);
    }
  }
};

/// The per-cell program of the basic backend: one work item owns cell (i, j)
/// for t = 1..Q. History is read back from H (or from a cell-local buffer when
/// only H(Q) is kept).
template <class Probe>
void run_cell(const TimeSeriesDataset& ds, const ArchitectureSpec& spec, const WeightSet& w,
              std::size_t i, std::size_t j, const HOutput& out, std::vector<double>& local,
              Probe& probe) {
  const std::size_t Q = spec.Q, S = spec.S;
  double* hist = out.final_only ? local.data() : out.H->raw() + out.H->offset(i, j, 0);
  CellContext ctx;
  ctx.col = j;
  ctx.history = {hist, Q};
  ctx.outputs = {ds.teacher.raw() + i * Q, Q};
  const double* xrow = ds.X.raw() + i * S * Q;
  double c = 0.0;
  for (std::size_t t = 1; t <= Q; ++t) {
    ctx.t = t;
    ctx.x = StridedView{xrow + (t - 1), S, Q};
    ctx.c_prev = c;
    const auto [h, c_next] = step_cell(ctx, spec, w, probe);
    if (out.final_only) local[t - 1] = h;
    out.store(i, j, t, h);
    probe.write(Region::output);
    c = c_next;
  }
}

struct BlockGrid {
  std::size_t bs, block_rows, block_cols;
  BlockGrid(std::size_t n, std::size_t M, std::size_t bs_)
      : bs(bs_), block_rows((n + bs_ - 1) / bs_), block_cols((M + bs_ - 1) / bs_) {}
  std::size_t count() const noexcept { return block_rows * block_cols; }
};

/// Block-local staging storage. With Checked, every slot remembers the phase
/// that wrote it and a read must come from the phase right after that write
/// (i.e. after exactly one barrier); persistent slots only need to have been
/// written in some earlier phase.
template <bool Checked>
class StageBuffer {
 public:
  static constexpr std::uint64_t kNever = std::numeric_limits<std::uint64_t>::max();

  void resize(std::size_t n) {
    values_.assign(n, 0.0);
    if constexpr (Checked) tags_.assign(n, kNever);
  }
  void put(std::size_t k, double v, std::uint64_t phase) {
    values_[k] = v;
    if constexpr (Checked) tags_[k] = phase;
  }
  double get(std::size_t k, std::uint64_t phase) const {
    if constexpr (Checked) {
      if (tags_[k] == kNever || tags_[k] + 1 != phase) {
        throw std::logic_error("staged slot " + std::to_string(k) +
                               " read without a barrier after its load");
      }
    }
    return values_[k];
  }
  double get_persistent(std::size_t k, std::uint64_t phase) const {
    if constexpr (Checked) {
      if (tags_[k] == kNever || tags_[k] >= phase) {
        throw std::logic_error("persistent staged slot " + std::to_string(k) +
                               " read before its load was published");
      }
    }
    return values_[k];
  }

 private:
  std::vector<double> values_;
  std::vector<std::uint64_t> tags_;
};

/// Block owner of the tiled backend. All cells of one BS x BS block advance
/// phase by phase: stage a tile of shared operands, barrier, consume, barrier.
/// Column parameters (biases, gate u and b) are staged once per block; the
/// history h_ij[1..Q] and the LSTM carry stay in cell-local storage.
template <class Probe, bool Checked>
class TiledBlockRunner {
 public:
  TiledBlockRunner(const TimeSeriesDataset& ds, const ArchitectureSpec& spec, const WeightSet& w,
                   std::size_t bs, const HOutput& out)
      : ds_(ds), spec_(spec), w_(w), bs_(bs), out_(out) {
    switch (spec.kind) {
      case ArchKind::lstm: projections_ = 4; break;
      case ArchKind::gru: projections_ = 3; break;
      default: projections_ = 1; break;
    }
    for (std::size_t g = 0; g < projections_; ++g) {
      proj_w_[g] = is_gated(spec.kind) ? &w.gates[g].W : &w.W;
    }
    const std::size_t tw = bs_;
    xs_.resize(bs_ * tw);
    ws_.resize(projections_ * tw * bs_);
    cs_.resize(2 * projections_ * bs_);
    const std::size_t rec = spec.kind == ArchKind::fully_connected ? bs_ * spec.M * tw : bs_ * tw;
    rs_.resize(rec);
    ys_.resize(bs_ * tw);
    acc_.assign(projections_ * bs_ * bs_, 0.0);
    hloc_.assign(bs_ * bs_ * spec.Q, 0.0);
    cloc_.assign(bs_ * bs_, 0.0);
  }

  std::uint64_t barriers() const noexcept { return barriers_; }
  std::size_t dot_phases_per_step() const noexcept { return dot_phases_; }

  void run(std::size_t br, std::size_t bc, Probe& probe) {
    const std::size_t n = ds_.rows(), M = spec_.M, Q = spec_.Q;
    r0_ = br * bs_;
    c0_ = bc * bs_;
    rows_ = std::min(bs_, n - r0_);
    cols_ = std::min(bs_, M - c0_);
    std::fill(hloc_.begin(), hloc_.end(), 0.0);
    std::fill(cloc_.begin(), cloc_.end(), 0.0);

    stage_column_params(probe);
    barrier();
    for (std::size_t t = 1; t <= Q; ++t) {
      input_projections(t, probe);
      switch (spec_.kind) {
        case ArchKind::elman:
        case ArchKind::jordan: lagged_feedback(t, probe); break;
        case ArchKind::narmax: narmax_feedback(t, probe); break;
        case ArchKind::fully_connected: full_feedback(t, probe); break;
        case ArchKind::lstm:
        case ArchKind::gru: break;
      }
      emit(t, probe);
    }
  }

 private:
  void barrier() noexcept {
    ++phase_;
    ++barriers_;
  }

  double& acc(std::size_t g, std::size_t r, std::size_t c) noexcept {
    return acc_[(g * bs_ + r) * bs_ + c];
  }
  double& hloc(std::size_t r, std::size_t c, std::size_t tau) noexcept {
    return hloc_[(r * bs_ + c) * spec_.Q + (tau - 1)];
  }
  double hist(std::size_t r, std::size_t c, std::ptrdiff_t tau) noexcept {
    return tau <= 0 ? 0.0 : hloc(r, c, static_cast<std::size_t>(tau));
  }

  void stage_column_params(Probe& probe) {
    if (is_gated(spec_.kind)) {
      for (std::size_t g = 0; g < projections_; ++g) {
        for (std::size_t c = 0; c < cols_; ++c) {
          cs_.put((2 * g) * bs_ + c, w_.gates[g].u(c0_ + c), phase_);
          cs_.put((2 * g + 1) * bs_ + c, w_.gates[g].b(c0_ + c), phase_);
          probe.read(Region::recurrent);
          probe.read(Region::bias);
        }
      }
    } else {
      for (std::size_t c = 0; c < cols_; ++c) {
        cs_.put(c, w_.b(c0_ + c), phase_);
        probe.read(Region::bias);
      }
    }
  }

  void input_projections(std::size_t t, Probe& probe) {
    const std::size_t S = spec_.S, Q = spec_.Q, M = spec_.M, tw = bs_;
    const bool bias_first = spec_.kind == ArchKind::fully_connected;
    for (std::size_t g = 0; g < projections_; ++g) {
      for (std::size_t r = 0; r < rows_; ++r) {
        for (std::size_t c = 0; c < cols_; ++c) {
          acc(g, r, c) = bias_first ? cs_.get_persistent(c, phase_) : 0.0;
        }
      }
    }
    std::size_t phases = 0;
    for (std::size_t s0 = 0; s0 < S; s0 += tw) {
      const std::size_t sw = std::min(tw, S - s0);
      for (std::size_t r = 0; r < rows_; ++r) {
        const double* xrow = ds_.X.raw() + (r0_ + r) * S * Q;
        for (std::size_t a = 0; a < sw; ++a) {
          xs_.put(r * tw + a, xrow[(s0 + a) * Q + (t - 1)], phase_);
          probe.read(Region::input);
        }
      }
      for (std::size_t g = 0; g < projections_; ++g) {
        const double* W = proj_w_[g]->raw();
        for (std::size_t a = 0; a < sw; ++a) {
          for (std::size_t c = 0; c < cols_; ++c) {
            ws_.put((g * tw + a) * bs_ + c, W[(s0 + a) * M + c0_ + c], phase_);
            probe.read(Region::weight);
          }
        }
      }
      barrier();
      for (std::size_t r = 0; r < rows_; ++r) {
        for (std::size_t c = 0; c < cols_; ++c) {
          for (std::size_t g = 0; g < projections_; ++g) {
            double v = acc(g, r, c);
            for (std::size_t a = 0; a < sw; ++a) {
              v += ws_.get((g * tw + a) * bs_ + c, phase_) * xs_.get(r * tw + a, phase_);
            }
            probe.flop(2 * sw);
            acc(g, r, c) = v;
          }
        }
      }
      barrier();
      ++phases;
    }
    dot_phases_ = phases;
  }

  void add_bias(Probe& probe) {
    for (std::size_t r = 0; r < rows_; ++r) {
      for (std::size_t c = 0; c < cols_; ++c) {
        acc(0, r, c) += cs_.get_persistent(c, phase_);
        probe.flop();
      }
    }
  }

  // Elman (own history) and Jordan (teacher signal): lags k = 1..t in tiles.
  void lagged_feedback(std::size_t t, Probe& probe) {
    add_bias(probe);
    const bool jordan = spec_.kind == ArchKind::jordan;
    const std::size_t Q = spec_.Q, tw = bs_;
    const auto ti = static_cast<std::ptrdiff_t>(t);
    for (std::size_t k0 = 1; k0 <= t; k0 += tw) {
      const std::size_t kw = std::min(tw, t - k0 + 1);
      for (std::size_t c = 0; c < cols_; ++c) {
        for (std::size_t a = 0; a < kw; ++a) {
          rs_.put(c * tw + a, w_.alpha(c0_ + c, k0 + a - 1), phase_);
          probe.read(Region::recurrent);
        }
      }
      if (jordan) {
        for (std::size_t r = 0; r < rows_; ++r) {
          for (std::size_t a = 0; a < kw; ++a) {
            const std::ptrdiff_t tau = ti - static_cast<std::ptrdiff_t>(k0 + a);
            double y = 0.0;
            if (tau >= 1) {
              y = ds_.teacher.raw()[(r0_ + r) * Q + static_cast<std::size_t>(tau - 1)];
              probe.read(Region::feedback);
            }
            ys_.put(r * tw + a, y, phase_);
          }
        }
      }
      barrier();
      for (std::size_t r = 0; r < rows_; ++r) {
        for (std::size_t c = 0; c < cols_; ++c) {
          double v = acc(0, r, c);
          for (std::size_t a = 0; a < kw; ++a) {
            const std::ptrdiff_t tau = ti - static_cast<std::ptrdiff_t>(k0 + a);
            const double fb = jordan ? ys_.get(r * tw + a, phase_) : hist(r, c, tau);
            v += rs_.get(c * tw + a, phase_) * fb;
          }
          probe.flop(2 * kw);
          acc(0, r, c) = v;
        }
      }
      barrier();
    }
  }

  void narmax_feedback(std::size_t t, Probe& probe) {
    add_bias(probe);
    const std::size_t Q = spec_.Q, tw = bs_;
    const auto ti = static_cast<std::ptrdiff_t>(t);
    auto pass = [&](std::size_t length, const DenseTensor& weights, bool outputs) {
      for (std::size_t l0 = 1; l0 <= length; l0 += tw) {
        const std::size_t lw = std::min(tw, length - l0 + 1);
        for (std::size_t c = 0; c < cols_; ++c) {
          for (std::size_t a = 0; a < lw; ++a) {
            rs_.put(c * tw + a, weights(c0_ + c, l0 + a - 1), phase_);
            probe.read(Region::recurrent);
          }
        }
        for (std::size_t r = 0; r < rows_; ++r) {
          for (std::size_t a = 0; a < lw; ++a) {
            const std::ptrdiff_t tau = ti - static_cast<std::ptrdiff_t>(l0 + a);
            double v = 0.0;  // the error signal is zero during construction
            if (outputs && tau >= 1) {
              v = ds_.teacher.raw()[(r0_ + r) * Q + static_cast<std::size_t>(tau - 1)];
              probe.read(Region::feedback);
            }
            ys_.put(r * tw + a, v, phase_);
          }
        }
        barrier();
        for (std::size_t r = 0; r < rows_; ++r) {
          for (std::size_t c = 0; c < cols_; ++c) {
            double v = acc(0, r, c);
            for (std::size_t a = 0; a < lw; ++a) {
              v += rs_.get(c * tw + a, phase_) * ys_.get(r * tw + a, phase_);
            }
            probe.flop(2 * lw);
            acc(0, r, c) = v;
          }
        }
        barrier();
      }
    };
    pass(spec_.F, w_.w_out, true);
    pass(spec_.R, w_.w_err, false);
  }

  // Fully connected: lags k = 1..Q in tiles, alpha[j, l, k] staged per column.
  void full_feedback(std::size_t t, Probe& probe) {
    const std::size_t Q = spec_.Q, M = spec_.M, tw = bs_;
    const auto ti = static_cast<std::ptrdiff_t>(t);
    for (std::size_t k0 = 1; k0 <= Q; k0 += tw) {
      const std::size_t kw = std::min(tw, Q - k0 + 1);
      for (std::size_t c = 0; c < cols_; ++c) {
        for (std::size_t l = 0; l < M; ++l) {
          for (std::size_t a = 0; a < kw; ++a) {
            rs_.put((c * M + l) * tw + a, w_.alpha(c0_ + c, l, k0 + a - 1), phase_);
            probe.read(Region::recurrent);
          }
        }
      }
      barrier();
      for (std::size_t r = 0; r < rows_; ++r) {
        for (std::size_t c = 0; c < cols_; ++c) {
          double v = acc(0, r, c);
          for (std::size_t a = 0; a < kw; ++a) {
            const double hv = hist(r, c, ti - static_cast<std::ptrdiff_t>(k0 + a));
            double partial = 0.0;
            for (std::size_t l = 0; l < M; ++l) partial += rs_.get((c * M + l) * tw + a, phase_) * hv;
            v += partial;
            probe.flop(2 * M + 1);
          }
          acc(0, r, c) = v;
        }
      }
      barrier();
    }
  }

  void emit(std::size_t t, Probe& probe) {
    const auto ti = static_cast<std::ptrdiff_t>(t);
    for (std::size_t r = 0; r < rows_; ++r) {
      for (std::size_t c = 0; c < cols_; ++c) {
        double h = 0.0;
        if (spec_.kind == ArchKind::lstm) {
          std::array<double, 4> dot{}, u{}, b{};
          for (std::size_t g = 0; g < 4; ++g) {
            dot[g] = acc(g, r, c);
            u[g] = cs_.get_persistent((2 * g) * bs_ + c, phase_);
            b[g] = cs_.get_persistent((2 * g + 1) * bs_ + c, phase_);
          }
          const auto st = lstm_finish(dot, u, b, hist(r, c, ti - 1), cloc_[r * bs_ + c], spec_.act, probe);
          cloc_[r * bs_ + c] = st.c;
          h = st.h;
        } else if (spec_.kind == ArchKind::gru) {
          std::array<double, 3> dot{}, u{}, b{};
          for (std::size_t g = 0; g < 3; ++g) {
            dot[g] = acc(g, r, c);
            u[g] = cs_.get_persistent((2 * g) * bs_ + c, phase_);
            b[g] = cs_.get_persistent((2 * g + 1) * bs_ + c, phase_);
          }
          h = gru_finish(dot, u, b, hist(r, c, ti - 1), spec_.act, probe).h;
        } else {
          h = activation(spec_.act.g, acc(0, r, c));
        }
        hloc(r, c, t) = h;
        out_.store(r0_ + r, c0_ + c, t, h);
        if (!out_.final_only || t == spec_.Q) probe.write(Region::output);
      }
    }
  }

  const TimeSeriesDataset& ds_;
  const ArchitectureSpec& spec_;
  const WeightSet& w_;
  std::size_t bs_;
  HOutput out_;
  std::size_t projections_ = 1;
  std::array<const DenseTensor*, 4> proj_w_{};

  StageBuffer<Checked> xs_, ws_, cs_, rs_, ys_;
  std::vector<double> acc_, hloc_, cloc_;
  std::size_t r0_ = 0, c0_ = 0, rows_ = 0, cols_ = 0;
  std::uint64_t phase_ = 0;
  std::uint64_t barriers_ = 0;
  std::size_t dot_phases_ = 0;
};

template <class Probe>
HiddenTensor compute_h_impl(const TimeSeriesDataset& ds, const ArchitectureSpec& spec,
                            const WeightSet& w, const ExecConfig& cfg, Probe* probe) {
  check_inputs(ds, spec, w, cfg);
  const auto t0 = Clock::now();
  const std::size_t n = ds.rows(), M = spec.M, Q = spec.Q;

  HiddenTensor result;
  result.final_only = cfg.final_only;
  result.H = cfg.final_only ? DenseTensor({n, M}) : DenseTensor({n, M, Q});
  std::unique_ptr<WriteShadow> shadow;
  if (cfg.debug_checks) shadow = std::make_unique<WriteShadow>(result.H.size());
  const HOutput out{&result.H, cfg.final_only, shadow.get(), Q};
  // A counting probe is not shared between threads.
  const unsigned workers = probe != nullptr ? 1u : resolve_workers(cfg.workers);
  const auto t1 = Clock::now();
  result.timing.staging = std::chrono::duration<double>(t1 - t0).count();

  NoProbe none;
  auto probe_for = [&]() -> Probe& {
    if constexpr (std::is_same_v<Probe, NoProbe>) {
      return none;
    } else {
      return *probe;
    }
  };

  switch (cfg.backend) {
    case Backend::sequential: {
      std::vector<double> local(Q);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < M; ++j) run_cell(ds, spec, w, i, j, out, local, probe_for());
      }
      break;
    }
    case Backend::basic_parallel: {
      const BlockGrid grid(n, M, cfg.block_size);
      std::vector<std::vector<double>> locals(workers, std::vector<double>(Q));
      parallel_for(grid.count(), workers, [&](std::size_t blk, unsigned worker) {
        const std::size_t br = blk / grid.block_cols, bc = blk % grid.block_cols;
        const std::size_t r_end = std::min(n, (br + 1) * grid.bs);
        const std::size_t c_end = std::min(M, (bc + 1) * grid.bs);
        // Items with Row >= n or Col >= M fall outside these bounds and do nothing.
        for (std::size_t i = br * grid.bs; i < r_end; ++i) {
          for (std::size_t j = bc * grid.bs; j < c_end; ++j) {
            if constexpr (std::is_same_v<Probe, NoProbe>) {
              NoProbe p;
              run_cell(ds, spec, w, i, j, out, locals[worker], p);
            } else {
              run_cell(ds, spec, w, i, j, out, locals[worker], *probe);
            }
          }
        }
      });
      break;
    }
    case Backend::tiled_parallel: {
      const BlockGrid grid(n, M, cfg.block_size);
      auto launch = [&]<bool Checked>() {
        std::vector<std::unique_ptr<TiledBlockRunner<Probe, Checked>>> runners;
        for (unsigned k = 0; k < workers; ++k) {
          runners.push_back(std::make_unique<TiledBlockRunner<Probe, Checked>>(ds, spec, w, grid.bs, out));
        }
        parallel_for(grid.count(), workers, [&](std::size_t blk, unsigned worker) {
          const std::size_t br = blk / grid.block_cols, bc = blk % grid.block_cols;
          if constexpr (std::is_same_v<Probe, NoProbe>) {
            NoProbe p;
            runners[worker]->run(br, bc, p);
          } else {
            runners[worker]->run(br, bc, *probe);
          }
        });
        for (const auto& r : runners) {
          result.tiles.barriers += r->barriers();
          result.tiles.dot_phases_per_step =
              std::max(result.tiles.dot_phases_per_step, r->dot_phases_per_step());
        }
      };
      if (cfg.debug_checks) {
        launch.template operator()<true>();
      } else {
        launch.template operator()<false>();
      }
      break;
    }
  }

  result.timing.h_compute = seconds_since(t1);
  result.timing.total = result.timing.staging + result.timing.h_compute;
  if (shadow) shadow->verify();
  return result;
}

}  // namespace detail

/// Reference backend: a single thread walks i -> j -> t applying the step
/// function.
inline HiddenTensor compute_h_sequential(const TimeSeriesDataset& ds, const ArchitectureSpec& spec,
                                         const WeightSet& w, ExecConfig cfg = {}) {
  cfg.backend = Backend::sequential;
  return detail::compute_h_impl<NoProbe>(ds, spec, w, cfg, nullptr);
}

/// One work item per cell (i, j), dispatched in BS x BS blocks to a worker pool.
inline HiddenTensor compute_h_basic_parallel(const TimeSeriesDataset& ds, const ArchitectureSpec& spec,
                                             const WeightSet& w, ExecConfig cfg = {}) {
  cfg.backend = Backend::basic_parallel;
  return detail::compute_h_impl<NoProbe>(ds, spec, w, cfg, nullptr);
}

/// Blocks cooperatively stage shared operands in tiles of width TW = BS.
inline HiddenTensor compute_h_tiled_parallel(const TimeSeriesDataset& ds, const ArchitectureSpec& spec,
                                             const WeightSet& w, ExecConfig cfg = {}) {
  cfg.backend = Backend::tiled_parallel;
  return detail::compute_h_impl<NoProbe>(ds, spec, w, cfg, nullptr);
}

inline HiddenTensor compute_h(const TimeSeriesDataset& ds, const ArchitectureSpec& spec,
                              const WeightSet& w, const ExecConfig& cfg) {
  return detail::compute_h_impl<NoProbe>(ds, spec, w, cfg, nullptr);
}

/// Single-threaded run with every memory access and flop tallied in `probe`.
/// Always keeps the full H and enables the debug checks.
inline HiddenTensor compute_h_counted(const TimeSeriesDataset& ds, const ArchitectureSpec& spec,
                                      const WeightSet& w, ExecConfig cfg, CountingProbe& probe) {
  cfg.final_only = false;
  cfg.debug_checks = true;
  return detail::compute_h_impl<CountingProbe>(ds, spec, w, cfg, &probe);
}

/// Number of input-projection tile phases per time step: ceil(S / TW).
inline std::size_t tile_phase_count(std::size_t S, std::size_t tw) noexcept { return (S + tw - 1) / tw; }

/// Closed-form staged reads per cell for the tiled Elman kernel as stated by
/// the cost analysis: ceil((2 S Q + Q (Q + 1) / 2) / TW^2) + 1. TW = 1 means
/// no sharing and returns the unstaged count Q (2S + Q + 2).
inline std::uint64_t staged_read_count(const ArchitectureSpec& spec, const ExecConfig& cfg) {
  if (spec.kind != ArchKind::elman) {
    throw UnsupportedError("staged read closed form is only available for Elman");
  }
  const std::uint64_t S = spec.S, Q = spec.Q, tw = cfg.block_size;
  if (tw == 0) throw DimensionError("tile width must be positive");
  if (tw == 1) return Q * (2 * S + Q + 2);
  const std::uint64_t shared = 2 * S * Q + Q * (Q + 1) / 2;
  return (shared + tw * tw - 1) / (tw * tw) + 1;
}

}  // namespace relm

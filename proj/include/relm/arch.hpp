#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "relm/errors.hpp"
#include "relm/probe.hpp"
#include "relm/tensor.hpp"

namespace relm {

enum class ArchKind : std::uint8_t { elman, jordan, narmax, fully_connected, lstm, gru };

inline constexpr std::array<ArchKind, 6> kAllArchs{ArchKind::elman,           ArchKind::jordan,
                                                   ArchKind::narmax,          ArchKind::fully_connected,
                                                   ArchKind::lstm,            ArchKind::gru};

inline std::string_view to_string(ArchKind k) noexcept {
  switch (k) {
    case ArchKind::elman: return "elman";
    case ArchKind::jordan: return "jordan";
    case ArchKind::narmax: return "narmax";
    case ArchKind::fully_connected: return "fully";
    case ArchKind::lstm: return "lstm";
    case ArchKind::gru: return "gru";
  }
  return "?";
}

inline ArchKind parse_arch(std::string_view s) {
  for (auto k : kAllArchs) {
    if (s == to_string(k)) return k;
  }
  if (s == "fully_connected" || s == "fc") return ArchKind::fully_connected;
  throw FormatError("unknown architecture '" + std::string(s) + "'");
}

inline bool is_gated(ArchKind k) noexcept { return k == ArchKind::lstm || k == ArchKind::gru; }

/// Activation choices. g drives the plain recurrences; the gated cells use the
/// named gate squashers, with g_c (LSTM candidate) and g_f (LSTM cell output,
/// GRU candidate) defaulting to tanh.
struct Activations {
  Activation g = Activation::sigmoid;
  Activation g_f = Activation::tanh;
  Activation g_o = Activation::sigmoid;
  Activation g_c = Activation::tanh;
  Activation g_lambda = Activation::sigmoid;
  Activation g_in = Activation::sigmoid;
  Activation g_z = Activation::sigmoid;
  Activation g_r = Activation::sigmoid;

  friend bool operator==(const Activations&, const Activations&) = default;
};

struct ArchitectureSpec {
  ArchKind kind = ArchKind::elman;
  std::size_t M = 1;  // hidden neurons
  std::size_t Q = 1;  // lags
  std::size_t S = 1;  // input dimension
  std::size_t F = 0;  // NARMAX output-feedback length
  std::size_t R = 0;  // NARMAX error-feedback length
  Activations act;

  void validate() const {
    if (M < 1 || Q < 1 || S < 1) throw DimensionError("architecture needs M, Q, S >= 1");
  }

  friend bool operator==(const ArchitectureSpec&, const ArchitectureSpec&) = default;
};

/// Gate slot order inside WeightSet::gates.
namespace lstm_gate {
inline constexpr std::size_t out = 0, forget = 1, in = 2, cell = 3, count = 4;
}
namespace gru_gate {
inline constexpr std::size_t update = 0, reset = 1, cand = 2, count = 3;
}

/// One gate's parameters: input weights W (S x M), diagonal recurrent weights
/// u (M), bias b (M).
struct GateWeights {
  DenseTensor W;
  DenseTensor u;
  DenseTensor b;

  friend bool operator==(const GateWeights&, const GateWeights&) = default;
};

/// Fixed random parameters plus the learned readout beta.
///   W      S x M          (plain recurrences)
///   b      M
///   alpha  M x Q          (Elman, Jordan) or M x M x Q (fully connected)
///   w_out  M x F, w_err M x R  (NARMAX)
///   gates  4 (LSTM: out, forget, in, cell) or 3 (GRU: update, reset, candidate)
struct WeightSet {
  DenseTensor W;
  DenseTensor b;
  DenseTensor alpha;
  DenseTensor w_out;
  DenseTensor w_err;
  std::vector<GateWeights> gates;
  DenseTensor beta;

  friend bool operator==(const WeightSet&, const WeightSet&) = default;
};

inline constexpr double kInitLow = -1.0;
inline constexpr double kInitHigh = 1.0;

/// Draws every fixed parameter from uniform[-1, 1) in a fixed order:
/// W, b, alpha, w_out, w_err, then each gate's (W, u, b).
inline WeightSet init_weights(const ArchitectureSpec& spec, SeededRng& rng) {
  spec.validate();
  const std::size_t S = spec.S, M = spec.M, Q = spec.Q;
  WeightSet w;
  auto draw = [&](std::vector<std::size_t> dims) {
    return uniform_fill(rng, dims, kInitLow, kInitHigh);
  };
  if (!is_gated(spec.kind)) {
    w.W = draw({S, M});
    w.b = draw({M});
  }
  switch (spec.kind) {
    case ArchKind::elman:
    case ArchKind::jordan: w.alpha = draw({M, Q}); break;
    case ArchKind::fully_connected: w.alpha = draw({M, M, Q}); break;
    case ArchKind::narmax:
      if (spec.F > 0) w.w_out = draw({M, spec.F});
      if (spec.R > 0) w.w_err = draw({M, spec.R});
      break;
    case ArchKind::lstm:
    case ArchKind::gru: {
      const std::size_t count = spec.kind == ArchKind::lstm ? lstm_gate::count : gru_gate::count;
      for (std::size_t g = 0; g < count; ++g) w.gates.push_back({draw({S, M}), draw({M}), draw({M})});
      break;
    }
  }
  return w;
}

/// Shape check of a weight set against its architecture.
inline void check_weights(const ArchitectureSpec& spec, const WeightSet& w) {
  spec.validate();
  const std::size_t S = spec.S, M = spec.M, Q = spec.Q;
  auto expect = [](const DenseTensor& t, std::vector<std::size_t> dims, const char* what) {
    if (t.dims() != dims) throw DimensionError(std::string("weight block '") + what + "' has the wrong shape");
  };
  if (!is_gated(spec.kind)) {
    expect(w.W, {S, M}, "W");
    expect(w.b, {M}, "b");
  }
  switch (spec.kind) {
    case ArchKind::elman:
    case ArchKind::jordan: expect(w.alpha, {M, Q}, "alpha"); break;
    case ArchKind::fully_connected: expect(w.alpha, {M, M, Q}, "alpha"); break;
    case ArchKind::narmax:
      if (spec.F > 0) expect(w.w_out, {M, spec.F}, "w_out");
      if (spec.R > 0) expect(w.w_err, {M, spec.R}, "w_err");
      break;
    case ArchKind::lstm:
    case ArchKind::gru: {
      const std::size_t count = spec.kind == ArchKind::lstm ? lstm_gate::count : gru_gate::count;
      if (w.gates.size() != count) throw DimensionError("wrong number of gate blocks");
      for (const auto& g : w.gates) {
        expect(g.W, {S, M}, "gate W");
        expect(g.u, {M}, "gate u");
        expect(g.b, {M}, "gate b");
      }
      break;
    }
  }
  if (!w.beta.empty()) expect(w.beta, {M}, "beta");
}

/// Thread-local view of one (row, neuron) cell at window time t (1-based).
/// Accessors return 0 for tau <= 0; `errors` may be empty (e == 0).
struct CellContext {
  StridedView x;                      // X[i, :, t]
  std::size_t col = 0;                // neuron j
  std::size_t t = 1;
  std::span<const double> history;    // history[tau - 1] = h_ij[tau]
  std::span<const double> outputs;    // outputs[tau - 1] = y(tau)
  std::span<const double> errors;     // errors[tau - 1] = e(tau)
  double c_prev = 0.0;                // LSTM carry c_ij[t - 1]

  double h(std::ptrdiff_t tau) const noexcept {
    return tau <= 0 ? 0.0 : history[static_cast<std::size_t>(tau - 1)];
  }
  double y(std::ptrdiff_t tau) const noexcept {
    return tau <= 0 ? 0.0 : outputs[static_cast<std::size_t>(tau - 1)];
  }
  double e(std::ptrdiff_t tau) const noexcept {
    return tau <= 0 || errors.empty() ? 0.0 : errors[static_cast<std::size_t>(tau - 1)];
  }
};

// ---------------------------------------------------------------------------
// Step functions. Each evaluates h_ij[t] for one cell; the Probe template
// parameter records the memory traffic of the basic (one work item per cell)
// execution and compiles away for NoProbe.
// ---------------------------------------------------------------------------

namespace detail {

template <class Probe>
inline double input_dot(const CellContext& ctx, const DenseTensor& W, double acc, Probe& probe) {
  const std::size_t M = W.extent(1);
  for (std::size_t s = 0; s < ctx.x.size(); ++s) {
    probe.read(Region::weight);
    probe.read(Region::input);
    acc += W.raw()[s * M + ctx.col] * ctx.x[s];
    probe.flop(2);
  }
  return acc;
}

}  // namespace detail

/// h = g(W[:,j].x + b_j + sum_{k=1..t} alpha[j,k] h[t-k]); the k = t term
/// reads the zero initial state.
template <class Probe = NoProbe>
double step_elman(const CellContext& ctx, const ArchitectureSpec& spec, const WeightSet& w,
                  Probe&& probe = Probe{}) {
  const std::size_t j = ctx.col, Q = spec.Q;
  double acc = detail::input_dot(ctx, w.W, 0.0, probe);
  probe.read(Region::bias);
  acc += w.b(j);
  probe.flop();
  const double* alpha = w.alpha.raw() + j * Q;
  const auto t = static_cast<std::ptrdiff_t>(ctx.t);
  for (std::ptrdiff_t k = 1; k <= t; ++k) {
    probe.read(Region::recurrent);
    probe.read(Region::history);
    acc += alpha[k - 1] * ctx.h(t - k);
    probe.flop(2);
  }
  return activation(spec.act.g, acc);
}

/// Elman with the feedback taken from the output signal y(t-k) (teacher
/// forcing during construction, own predictions in recursive prediction).
template <class Probe = NoProbe>
double step_jordan(const CellContext& ctx, const ArchitectureSpec& spec, const WeightSet& w,
                   Probe&& probe = Probe{}) {
  const std::size_t j = ctx.col, Q = spec.Q;
  double acc = detail::input_dot(ctx, w.W, 0.0, probe);
  probe.read(Region::bias);
  acc += w.b(j);
  probe.flop();
  const double* alpha = w.alpha.raw() + j * Q;
  const auto t = static_cast<std::ptrdiff_t>(ctx.t);
  for (std::ptrdiff_t k = 1; k <= t; ++k) {
    probe.read(Region::recurrent);
    probe.read(Region::feedback);
    acc += alpha[k - 1] * ctx.y(t - k);
    probe.flop(2);
  }
  return activation(spec.act.g, acc);
}

/// h = g(W[:,j].x + b_j + sum_{l<=F} w_out[j,l] y(t-l) + sum_{l<=R} w_err[j,l] e(t-l)).
template <class Probe = NoProbe>
double step_narmax(const CellContext& ctx, const ArchitectureSpec& spec, const WeightSet& w,
                   Probe&& probe = Probe{}) {
  const std::size_t j = ctx.col;
  double acc = detail::input_dot(ctx, w.W, 0.0, probe);
  probe.read(Region::bias);
  acc += w.b(j);
  probe.flop();
  const auto t = static_cast<std::ptrdiff_t>(ctx.t);
  for (std::size_t l = 1; l <= spec.F; ++l) {
    probe.read(Region::recurrent);
    probe.read(Region::feedback);
    acc += w.w_out(j, l - 1) * ctx.y(t - static_cast<std::ptrdiff_t>(l));
    probe.flop(2);
  }
  for (std::size_t l = 1; l <= spec.R; ++l) {
    probe.read(Region::recurrent);
    probe.read(Region::feedback);
    acc += w.w_err(j, l - 1) * ctx.e(t - static_cast<std::ptrdiff_t>(l));
    probe.flop(2);
  }
  return activation(spec.act.g, acc);
}

/// h = g(b_j + W[:,j].x + sum_{k=1..Q} sum_{l=1..M} alpha[j,l,k] h[t-k]).
/// The accumulator starts from the bias; each lag k forms its partial sum over
/// l before it is added. History before t = 1 is zero.
template <class Probe = NoProbe>
double step_fully_connected(const CellContext& ctx, const ArchitectureSpec& spec,
                            const WeightSet& w, Probe&& probe = Probe{}) {
  const std::size_t j = ctx.col, M = spec.M, Q = spec.Q;
  probe.read(Region::bias);
  double acc = detail::input_dot(ctx, w.W, w.b(j), probe);
  const auto t = static_cast<std::ptrdiff_t>(ctx.t);
  for (std::size_t k = 1; k <= Q; ++k) {
    double partial = 0.0;
    for (std::size_t l = 0; l < M; ++l) {
      probe.read(Region::recurrent);
      probe.read(Region::history);
      partial += w.alpha(j, l, k - 1) * ctx.h(t - static_cast<std::ptrdiff_t>(k));
      probe.flop(2);
    }
    acc += partial;
    probe.flop();
  }
  return activation(spec.act.g, acc);
}

struct LstmState {
  double h = 0.0;
  double c = 0.0;
  double out = 0.0;     // o
  double forget = 0.0;  // lambda
  double in = 0.0;
  double cand = 0.0;    // g_c(.)
};

/// Completes an LSTM step from the four input projections W_g[:,j].x
/// (order: out, forget, in, cell) and the column parameters.
template <class Probe>
LstmState lstm_finish(const std::array<double, 4>& dot, const std::array<double, 4>& u,
                      const std::array<double, 4>& b, double h_prev, double c_prev,
                      const Activations& act, Probe& probe) {
  std::array<double, 4> a = dot;
  for (std::size_t g = 0; g < 4; ++g) {
    a[g] += u[g] * h_prev;
    a[g] += b[g];
  }
  probe.flop(12);
  LstmState st;
  st.out = activation(act.g_o, a[lstm_gate::out]);
  st.forget = activation(act.g_lambda, a[lstm_gate::forget]);
  st.in = activation(act.g_in, a[lstm_gate::in]);
  st.cand = activation(act.g_c, a[lstm_gate::cell]);
  st.c = st.forget * c_prev + st.in * st.cand;
  probe.flop(3);
  st.h = st.out * activation(act.g_f, st.c);
  probe.flop();
  return st;
}

/// LSTM step with diagonal recurrent weights: gates read only this neuron's
/// own h[t-1]. Gate activations are published (out, forget, in) and re-read by
/// the state update and output phases; the candidate stays in registers.
template <class Probe = NoProbe>
LstmState step_lstm(const CellContext& ctx, const ArchitectureSpec& spec, const WeightSet& w,
                    Probe&& probe = Probe{}) {
  const std::size_t j = ctx.col, M = spec.M;
  std::array<double, 4> dot{};
  for (std::size_t s = 0; s < ctx.x.size(); ++s) {
    probe.read(Region::input);
    const double xs = ctx.x[s];
    for (std::size_t g = 0; g < 4; ++g) {
      probe.read(Region::weight);
      dot[g] += w.gates[g].W.raw()[s * M + j] * xs;
      probe.flop(2);
    }
  }
  probe.read(Region::history);
  const double h_prev = ctx.h(static_cast<std::ptrdiff_t>(ctx.t) - 1);
  probe.read(Region::state);
  const double c_prev = ctx.c_prev;
  std::array<double, 4> u{}, b{};
  for (std::size_t g = 0; g < 4; ++g) {
    probe.read(Region::recurrent);
    probe.read(Region::bias);
    u[g] = w.gates[g].u(j);
    b[g] = w.gates[g].b(j);
  }
  const LstmState st = lstm_finish(dot, u, b, h_prev, c_prev, spec.act, probe);
  probe.write(Region::gate, 3);  // out, forget, in
  probe.read(Region::gate, 2);   // forget, in for the carry update
  probe.write(Region::state);    // c
  probe.read(Region::gate);      // out for the emitted state
  return st;
}

struct GruState {
  double h = 0.0;
  double update = 0.0;  // z
  double reset = 0.0;   // r
  double cand = 0.0;    // g_f(.)
};

/// Completes a GRU step from the three input projections (update, reset,
/// candidate): h = (1 - z) h_prev + z g_f(W_f.x + u_f (r h_prev) + b_f).
template <class Probe>
GruState gru_finish(const std::array<double, 3>& dot, const std::array<double, 3>& u,
                    const std::array<double, 3>& b, double h_prev, const Activations& act,
                    Probe& probe) {
  double az = dot[gru_gate::update];
  az += u[gru_gate::update] * h_prev;
  az += b[gru_gate::update];
  double ar = dot[gru_gate::reset];
  ar += u[gru_gate::reset] * h_prev;
  ar += b[gru_gate::reset];
  probe.flop(6);
  GruState st;
  st.update = activation(act.g_z, az);
  st.reset = activation(act.g_r, ar);
  const double rh = st.reset * h_prev;
  double af = dot[gru_gate::cand];
  af += u[gru_gate::cand] * rh;
  af += b[gru_gate::cand];
  probe.flop(4);
  st.cand = activation(act.g_f, af);
  st.h = (1.0 - st.update) * h_prev + st.update * st.cand;
  probe.flop(4);
  return st;
}

/// GRU step with diagonal recurrent weights. z and r are published; r is
/// consumed by the candidate in the same phase, z is re-read by the blend.
template <class Probe = NoProbe>
GruState step_gru_state(const CellContext& ctx, const ArchitectureSpec& spec, const WeightSet& w,
                        Probe&& probe = Probe{}) {
  const std::size_t j = ctx.col, M = spec.M;
  std::array<double, 3> dot{};
  for (std::size_t s = 0; s < ctx.x.size(); ++s) {
    probe.read(Region::input);
    const double xs = ctx.x[s];
    for (std::size_t g = 0; g < 3; ++g) {
      probe.read(Region::weight);
      dot[g] += w.gates[g].W.raw()[s * M + j] * xs;
      probe.flop(2);
    }
  }
  probe.read(Region::history);
  const double h_prev = ctx.h(static_cast<std::ptrdiff_t>(ctx.t) - 1);
  std::array<double, 3> u{}, b{};
  for (std::size_t g = 0; g < 3; ++g) {
    probe.read(Region::recurrent);
    probe.read(Region::bias);
    u[g] = w.gates[g].u(j);
    b[g] = w.gates[g].b(j);
  }
  const GruState st = gru_finish(dot, u, b, h_prev, spec.act, probe);
  probe.write(Region::gate, 2);  // z, r
  probe.read(Region::gate);      // z for the blend
  return st;
}

template <class Probe = NoProbe>
double step_gru(const CellContext& ctx, const ArchitectureSpec& spec, const WeightSet& w,
                Probe&& probe = Probe{}) {
  return step_gru_state(ctx, spec, w, probe).h;
}

/// Uniform entry point: returns the new (h, c) for any architecture (c is 0
/// except for LSTM).
template <class Probe = NoProbe>
std::pair<double, double> step_cell(const CellContext& ctx, const ArchitectureSpec& spec,
                                    const WeightSet& w, Probe&& probe = Probe{}) {
  switch (spec.kind) {
    case ArchKind::elman: return {step_elman(ctx, spec, w, probe), 0.0};
    case ArchKind::jordan: return {step_jordan(ctx, spec, w, probe), 0.0};
    case ArchKind::narmax: return {step_narmax(ctx, spec, w, probe), 0.0};
    case ArchKind::fully_connected: return {step_fully_connected(ctx, spec, w, probe), 0.0};
    case ArchKind::lstm: {
      const auto st = step_lstm(ctx, spec, w, probe);
      return {st.h, st.c};
    }
    case ArchKind::gru: return {step_gru(ctx, spec, w, probe), 0.0};
  }
  return {0.0, 0.0};
}

}  // namespace relm

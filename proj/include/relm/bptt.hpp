#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "relm/arch.hpp"
#include "relm/dataset.hpp"
#include "relm/errors.hpp"
#include "relm/tensor.hpp"
#include "relm/trainer.hpp"

namespace relm {

enum class Optimizer : std::uint8_t { sgd, adam };

inline std::string_view to_string(Optimizer o) noexcept { return o == Optimizer::sgd ? "sgd" : "adam"; }

inline Optimizer parse_optimizer(std::string_view s) {
  if (s == "sgd") return Optimizer::sgd;
  if (s == "adam") return Optimizer::adam;
  throw FormatError("unknown optimizer '" + std::string(s) + "'");
}

struct BpttConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  Optimizer optimizer = Optimizer::adam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const {
    if (epochs < 1) throw DimensionError("epochs must be at least 1");
    if (batch_size < 1) throw DimensionError("batch size must be at least 1");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
      throw DimensionError("learning rate must be finite and non-negative");
    }
  }
};

struct EpochRecord {
  std::size_t epoch = 0;        // 1-based
  double seconds = 0.0;         // cumulative training time at the end of the epoch
  double train_mse = 0.0;
  double test_mse = 0.0;        // NaN when the dataset has no held-out rows
};

struct TrainTrace {
  std::vector<EpochRecord> epochs;
  double total_seconds = 0.0;  // training time, evaluation passes excluded
};

/// Calls fn(tensor) for every trainable block of the architecture in a fixed
/// order; the order defines the flat parameter layout.
template <class WS, class Fn>
void for_each_param(const ArchitectureSpec& spec, WS& w, Fn&& fn) {
  if (spec.kind == ArchKind::fully_connected) {
    fn(w.W);
    fn(w.b);
    fn(w.alpha);
  } else {
    for (auto& g : w.gates) {
      fn(g.W);
      fn(g.u);
      fn(g.b);
    }
  }
  fn(w.beta);
}

inline std::size_t param_count(const ArchitectureSpec& spec, const WeightSet& w) {
  std::size_t n = 0;
  for_each_param(spec, w, [&](const DenseTensor& t) { n += t.size(); });
  return n;
}

inline std::vector<double> flatten(const ArchitectureSpec& spec, const WeightSet& w) {
  std::vector<double> v;
  for_each_param(spec, w, [&](const DenseTensor& t) { v.insert(v.end(), t.data().begin(), t.data().end()); });
  return v;
}

inline void unflatten(const ArchitectureSpec& spec, const std::vector<double>& v, WeightSet& w) {
  std::size_t k = 0;
  for_each_param(spec, w, [&](DenseTensor& t) {
    std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(k), t.size(), t.raw());
    k += t.size();
  });
}

inline void check_bptt_arch(const ArchitectureSpec& spec) {
  if (spec.kind != ArchKind::fully_connected && spec.kind != ArchKind::lstm && spec.kind != ArchKind::gru) {
    throw UnsupportedError("the BPTT baseline supports fully connected, LSTM and GRU networks only");
  }
}

/// Fixed weights drawn as for ELM, plus a readout uniform in +-1/sqrt(M).
inline WeightSet bptt_init(const ArchitectureSpec& spec, SeededRng& rng) {
  check_bptt_arch(spec);
  WeightSet w = init_weights(spec, rng);
  const double r = 1.0 / std::sqrt(static_cast<double>(spec.M));
  w.beta = uniform_fill(rng, {spec.M}, -r, r);
  return w;
}

namespace detail {

inline WeightSet zeros_like(const ArchitectureSpec& spec, const WeightSet& w) {
  WeightSet g = w;
  for_each_param(spec, g, [](DenseTensor& t) { t.fill(0.0); });
  return g;
}

/// Forward pass of one row through the step functions, then reverse-mode
/// accumulation into `grad` scaled by `scale` (dLoss/dprediction).
class RowBackprop {
 public:
  RowBackprop(const ArchitectureSpec& spec, const WeightSet& w) : spec_(spec), w_(w) {
    const std::size_t M = spec.M, Q = spec.Q;
    h_.assign(M * Q, 0.0);
    c_.assign(M * Q, 0.0);
    g0_.assign(M * Q, 0.0);
    g1_.assign(M * Q, 0.0);
    g2_.assign(M * Q, 0.0);
    g3_.assign(M * Q, 0.0);
    dh_.assign(M * Q, 0.0);
  }

  double forward(const TimeSeriesDataset& ds, std::size_t i) {
    const std::size_t M = spec_.M, Q = spec_.Q, S = spec_.S;
    xrow_ = ds.X.raw() + i * S * Q;
    double y = 0.0;
    for (std::size_t j = 0; j < M; ++j) {
      CellContext ctx;
      ctx.col = j;
      ctx.history = {h_.data() + j * Q, Q};
      double c = 0.0;
      for (std::size_t t = 1; t <= Q; ++t) {
        ctx.t = t;
        ctx.x = StridedView{xrow_ + (t - 1), S, Q};
        ctx.c_prev = c;
        const std::size_t k = j * Q + t - 1;
        switch (spec_.kind) {
          case ArchKind::fully_connected: h_[k] = step_fully_connected(ctx, spec_, w_); break;
          case ArchKind::lstm: {
            const LstmState st = step_lstm(ctx, spec_, w_);
            h_[k] = st.h;
            c_[k] = c = st.c;
            g0_[k] = st.out;
            g1_[k] = st.forget;
            g2_[k] = st.in;
            g3_[k] = st.cand;
            break;
          }
          case ArchKind::gru: {
            const GruState st = step_gru_state(ctx, spec_, w_);
            h_[k] = st.h;
            g0_[k] = st.update;
            g1_[k] = st.reset;
            g2_[k] = st.cand;
            break;
          }
          default: throw UnsupportedError("unsupported architecture for BPTT");
        }
      }
      y += w_.beta(j) * h_[j * Q + Q - 1];
    }
    return y;
  }

  void backward(double dy, WeightSet& grad) {
    const std::size_t M = spec_.M, Q = spec_.Q;
    std::fill(dh_.begin(), dh_.end(), 0.0);
    for (std::size_t j = 0; j < M; ++j) {
      grad.beta(j) += dy * h_[j * Q + Q - 1];
      dh_[j * Q + Q - 1] = dy * w_.beta(j);
      switch (spec_.kind) {
        case ArchKind::fully_connected: back_fc(j, grad); break;
        case ArchKind::lstm: back_lstm(j, grad); break;
        case ArchKind::gru: back_gru(j, grad); break;
        default: break;
      }
    }
  }

 private:
  double x(std::size_t s, std::size_t t) const noexcept { return xrow_[s * spec_.Q + (t - 1)]; }
  double hv(std::size_t j, std::ptrdiff_t tau) const noexcept {
    return tau <= 0 ? 0.0 : h_[j * spec_.Q + static_cast<std::size_t>(tau - 1)];
  }

  void input_grad(DenseTensor& dW, std::size_t j, std::size_t t, double da) const {
    const std::size_t M = spec_.M;
    for (std::size_t s = 0; s < spec_.S; ++s) dW.raw()[s * M + j] += da * x(s, t);
  }

  void back_fc(std::size_t j, WeightSet& grad) {
    const std::size_t M = spec_.M, Q = spec_.Q;
    for (std::size_t t = Q; t >= 1; --t) {
      const double h = h_[j * Q + t - 1];
      const double da = dh_[j * Q + t - 1] * activation_slope(spec_.act.g, h);
      input_grad(grad.W, j, t, da);
      grad.b(j) += da;
      for (std::size_t k = 1; k <= Q; ++k) {
        const std::ptrdiff_t tau = static_cast<std::ptrdiff_t>(t) - static_cast<std::ptrdiff_t>(k);
        const double hp = hv(j, tau);
        double lag_sum = 0.0;
        for (std::size_t l = 0; l < M; ++l) {
          grad.alpha(j, l, k - 1) += da * hp;
          lag_sum += w_.alpha(j, l, k - 1);
        }
        if (tau >= 1) dh_[j * Q + static_cast<std::size_t>(tau - 1)] += da * lag_sum;
      }
    }
  }

  void back_lstm(std::size_t j, WeightSet& grad) {
    const std::size_t Q = spec_.Q;
    const auto& act = spec_.act;
    double dc_next = 0.0;
    for (std::size_t t = Q; t >= 1; --t) {
      const std::size_t k = j * Q + t - 1;
      const double o = g0_[k], lam = g1_[k], in = g2_[k], cand = g3_[k], c = c_[k];
      const double c_prev = t > 1 ? c_[k - 1] : 0.0;
      const double h_prev = hv(j, static_cast<std::ptrdiff_t>(t) - 1);
      const double dh = dh_[k];
      const double fc = activation(act.g_f, c);
      const double d_o = dh * fc;
      const double dc = dc_next + dh * o * activation_slope(act.g_f, fc);
      const double d_lam = dc * c_prev;
      const double d_in = dc * cand;
      const double d_cand = dc * in;
      dc_next = dc * lam;
      std::array<double, 4> da{};
      da[lstm_gate::out] = d_o * activation_slope(act.g_o, o);
      da[lstm_gate::forget] = d_lam * activation_slope(act.g_lambda, lam);
      da[lstm_gate::in] = d_in * activation_slope(act.g_in, in);
      da[lstm_gate::cell] = d_cand * activation_slope(act.g_c, cand);
      double dh_prev = 0.0;
      for (std::size_t g = 0; g < 4; ++g) {
        input_grad(grad.gates[g].W, j, t, da[g]);
        grad.gates[g].u(j) += da[g] * h_prev;
        grad.gates[g].b(j) += da[g];
        dh_prev += da[g] * w_.gates[g].u(j);
      }
      if (t > 1) dh_[k - 1] += dh_prev;
    }
  }

  void back_gru(std::size_t j, WeightSet& grad) {
    const std::size_t Q = spec_.Q;
    const auto& act = spec_.act;
    for (std::size_t t = Q; t >= 1; --t) {
      const std::size_t k = j * Q + t - 1;
      const double z = g0_[k], r = g1_[k], cand = g2_[k];
      const double h_prev = hv(j, static_cast<std::ptrdiff_t>(t) - 1);
      const double dh = dh_[k];
      const double dz = dh * (cand - h_prev);
      const double d_cand = dh * z;
      double dh_prev = dh * (1.0 - z);
      const double da_f = d_cand * activation_slope(act.g_f, cand);
      auto& gf = grad.gates[gru_gate::cand];
      input_grad(gf.W, j, t, da_f);
      gf.u(j) += da_f * r * h_prev;
      gf.b(j) += da_f;
      const double drh = da_f * w_.gates[gru_gate::cand].u(j);
      const double dr = drh * h_prev;
      dh_prev += drh * r;
      const double da_z = dz * activation_slope(act.g_z, z);
      const double da_r = dr * activation_slope(act.g_r, r);
      for (auto [g, da] : {std::pair{gru_gate::update, da_z}, std::pair{gru_gate::reset, da_r}}) {
        input_grad(grad.gates[g].W, j, t, da);
        grad.gates[g].u(j) += da * h_prev;
        grad.gates[g].b(j) += da;
        dh_prev += da * w_.gates[g].u(j);
      }
      if (t > 1) dh_[k - 1] += dh_prev;
    }
  }

  const ArchitectureSpec& spec_;
  const WeightSet& w_;
  const double* xrow_ = nullptr;
  std::vector<double> h_, c_, g0_, g1_, g2_, g3_, dh_;
};

}  // namespace detail

/// Mean squared error over `rows` and its gradient with respect to every
/// trainable block (same layout as the weights).
inline std::pair<double, WeightSet> loss_and_gradient(const TimeSeriesDataset& ds, const ArchitectureSpec& spec,
                                                      const WeightSet& w, const std::vector<std::size_t>& rows) {
  check_bptt_arch(spec);
  if (rows.empty()) throw DimensionError("loss needs at least one row");
  WeightSet grad = detail::zeros_like(spec, w);
  detail::RowBackprop bp(spec, w);
  const double inv = 1.0 / static_cast<double>(rows.size());
  double loss = 0.0;
  for (std::size_t i : rows) {
    const double err = bp.forward(ds, i) - ds.Y(i);
    loss += err * err * inv;
    bp.backward(2.0 * err * inv, grad);
  }
  return {loss, std::move(grad)};
}

/// Mean squared error only.
inline double bptt_mse(const TimeSeriesDataset& ds, const ArchitectureSpec& spec, const WeightSet& w,
                       RowRange rows) {
  if (rows.size() == 0) return std::nan("");
  detail::RowBackprop bp(spec, w);
  double s = 0.0;
  for (std::size_t i = rows.begin; i < rows.end; ++i) {
    const double err = bp.forward(ds, i) - ds.Y(i);
    s += err * err;
  }
  return s / static_cast<double>(rows.size());
}

struct BpttResult {
  WeightSet weights;
  TrainTrace trace;
};

/// Mini-batch gradient training of all weights through the unrolled Q steps.
/// Rows are reshuffled every epoch with the seeded generator.
inline BpttResult bptt_fit(const TimeSeriesDataset& ds, const ArchitectureSpec& spec, const BpttConfig& cfg,
                           std::uint64_t seed) {
  check_bptt_arch(spec);
  spec.validate();
  cfg.validate();
  if (ds.S != spec.S || ds.Q != spec.Q) throw DimensionError("dataset does not match architecture");
  if (ds.n_train == 0) throw DimensionError("no training rows");

  SeededRng rng(seed);
  BpttResult res;
  res.weights = bptt_init(spec, rng);
  std::vector<double> theta = flatten(spec, res.weights);
  std::vector<double> m1(theta.size(), 0.0), m2(theta.size(), 0.0);
  std::uint64_t step = 0;

  std::vector<std::size_t> order(ds.n_train);
  std::iota(order.begin(), order.end(), std::size_t{0});
  double train_seconds = 0.0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t k = order.size(); k > 1; --k) std::swap(order[k - 1], order[rng.below(k)]);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(end));
      const auto [loss, grad] = loss_and_gradient(ds, spec, res.weights, batch);
      if (!std::isfinite(loss)) {
        throw DivergenceError("training loss became non-finite in epoch " + std::to_string(epoch) +
                              "; try a lower learning rate");
      }
      const std::vector<double> g = flatten(spec, grad);
      ++step;
      if (cfg.optimizer == Optimizer::sgd) {
        for (std::size_t p = 0; p < theta.size(); ++p) theta[p] -= cfg.learning_rate * g[p];
      } else {
        const double c1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(step));
        for (std::size_t p = 0; p < theta.size(); ++p) {
          m1[p] = cfg.adam_beta1 * m1[p] + (1.0 - cfg.adam_beta1) * g[p];
          m2[p] = cfg.adam_beta2 * m2[p] + (1.0 - cfg.adam_beta2) * g[p] * g[p];
          theta[p] -= cfg.learning_rate * (m1[p] / c1) / (std::sqrt(m2[p] / c2) + cfg.adam_eps);
        }
      }
      unflatten(spec, theta, res.weights);
    }
    train_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    EpochRecord rec;
    rec.epoch = epoch;
    rec.seconds = train_seconds;
    rec.train_mse = bptt_mse(ds, spec, res.weights, ds.train_rows());
    rec.test_mse = bptt_mse(ds, spec, res.weights, ds.test_rows());
    if (!std::isfinite(rec.train_mse)) {
      throw DivergenceError("training MSE became non-finite after epoch " + std::to_string(epoch) +
                            "; try a lower learning rate");
    }
    res.trace.epochs.push_back(rec);
  }
  res.trace.total_seconds = train_seconds;
  return res;
}

enum class TraceMetric : std::uint8_t { train_mse, test_mse };

/// First cumulative time at which the chosen MSE is <= target; nullopt when
/// the trace never gets there.
inline std::optional<double> time_to_target(const TrainTrace& trace, double target_mse,
                                            TraceMetric metric = TraceMetric::train_mse) {
  if (trace.epochs.empty()) throw DimensionError("empty training trace");
  for (const auto& e : trace.epochs) {
    const double v = metric == TraceMetric::train_mse ? e.train_mse : e.test_mse;
    if (v <= target_mse) return e.seconds;
  }
  return std::nullopt;
}

}  // namespace relm

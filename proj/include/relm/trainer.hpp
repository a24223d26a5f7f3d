#pragma once

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "relm/arch.hpp"
#include "relm/dataset.hpp"
#include "relm/errors.hpp"
#include "relm/format.hpp"
#include "relm/hgen.hpp"
#include "relm/lsq.hpp"
#include "relm/tensor.hpp"

namespace relm {

/// Seconds spent per pipeline stage. `transfer_in` is the copy of the training
/// rows into the backend's input buffers, `transfer_out` the copy of beta back
/// into the model; `total` is the sum of the stages.
struct TrainTiming {
  double init = 0.0;
  double transfer_in = 0.0;
  double h_compute = 0.0;
  double solve = 0.0;
  double transfer_out = 0.0;
  double total = 0.0;

  friend bool operator==(const TrainTiming&, const TrainTiming&) = default;
};

struct TrainedModel {
  ArchitectureSpec spec;
  WeightSet weights;  // beta populated
  NormParams norm;
  std::uint64_t seed = 0;
  std::string rng_id{SeededRng::kGeneratorId};
  Backend backend = Backend::sequential;
  std::size_t block_size = 16;
  TrainTiming timing;
  RankFlag rank_flag = RankFlag::full_rank;
  double ridge_lambda = 0.0;

  friend bool operator==(const TrainedModel&, const TrainedModel&) = default;
};

struct EvalReport {
  double rmse_train = 0.0;  // normalized units
  double rmse_test = 0.0;
  double rmse_train_denorm = 0.0;  // original units
  double rmse_test_denorm = 0.0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
};

enum class FeedbackMode : std::uint8_t { teacher_forced, recursive };

namespace detail {

inline double elapsed(std::chrono::steady_clock::time_point& mark) {
  const auto now = std::chrono::steady_clock::now();
  const double s = std::chrono::duration<double>(now - mark).count();
  mark = now;
  return s;
}

}  // namespace detail

/// Root mean squared difference of two equally long sequences.
inline double rmse(const std::vector<double>& pred, const std::vector<double>& truth) {
  if (pred.size() != truth.size()) throw DimensionError("rmse: length mismatch");
  if (pred.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t k = 0; k < pred.size(); ++k) s += (pred[k] - truth[k]) * (pred[k] - truth[k]);
  return std::sqrt(s / static_cast<double>(pred.size()));
}

inline std::vector<double> targets(const TimeSeriesDataset& ds, RowRange rows) {
  return {ds.Y.raw() + rows.begin, ds.Y.raw() + rows.end};
}

/// RMSE of the naive forecast Y(i) ~ last observed value, in normalized units.
inline double last_value_rmse(const TimeSeriesDataset& ds, RowRange rows) {
  std::vector<double> pred;
  for (std::size_t i = rows.begin; i < rows.end; ++i) pred.push_back(ds.last_value(i));
  return rmse(pred, targets(ds, rows));
}

/// Draws the fixed weights, builds H on the training rows with the configured
/// backend and solves the readout from the final time slice.
inline TrainedModel fit(const TimeSeriesDataset& ds, const ArchitectureSpec& spec, const ExecConfig& cfg,
                        std::uint64_t seed) {
  spec.validate();
  if (ds.n_train < spec.M) {
    throw UnderdeterminedError("training rows (" + std::to_string(ds.n_train) + ") fewer than hidden neurons M=" +
                               std::to_string(spec.M));
  }
  TrainedModel model;
  model.spec = spec;
  model.norm = ds.norm;
  model.seed = seed;
  model.backend = cfg.backend;
  model.block_size = cfg.block_size;

  auto mark = std::chrono::steady_clock::now();
  SeededRng rng(seed);
  model.weights = init_weights(spec, rng);
  model.timing.init = detail::elapsed(mark);

  const TimeSeriesDataset train = slice_rows(ds, ds.train_rows());
  model.timing.transfer_in = detail::elapsed(mark);

  const HiddenTensor ht = compute_h(train, spec, model.weights, cfg);
  const DenseTensor HQ = ht.final_slice();
  model.timing.h_compute = detail::elapsed(mark);

  LsqSolution sol = solve_lsq(HQ, train.Y);
  model.timing.solve = detail::elapsed(mark);

  model.weights.beta = std::move(sol.beta);
  model.rank_flag = sol.rank_flag;
  model.ridge_lambda = sol.ridge_lambda;
  model.timing.transfer_out = detail::elapsed(mark);

  const auto& t = model.timing;
  model.timing.total = t.init + t.transfer_in + t.h_compute + t.solve + t.transfer_out;
  return model;
}

namespace detail {

inline std::vector<double> readout(const DenseTensor& HQ, const DenseTensor& beta) {
  const std::size_t n = HQ.extent(0), M = HQ.extent(1);
  std::vector<double> y(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < M; ++j) s += HQ(i, j) * beta(j);
    y[i] = s;
  }
  return y;
}

/// Output feedback from the model's own readout: y(tau) := sum_j beta_j h_j(tau).
/// Neurons of one row advance together because the feedback couples them.
inline std::vector<double> predict_recursive(const TrainedModel& model, const TimeSeriesDataset& ds) {
  const auto& spec = model.spec;
  const auto& w = model.weights;
  const std::size_t n = ds.rows(), M = spec.M, Q = spec.Q, S = spec.S;
  std::vector<double> out(n);
  std::vector<double> hist(M * Q), carry(M), yhat(Q);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(hist.begin(), hist.end(), 0.0);
    std::fill(carry.begin(), carry.end(), 0.0);
    const double* xrow = ds.X.raw() + i * S * Q;
    for (std::size_t t = 1; t <= Q; ++t) {
      double y = 0.0;
      for (std::size_t j = 0; j < M; ++j) {
        CellContext ctx;
        ctx.col = j;
        ctx.t = t;
        ctx.x = StridedView{xrow + (t - 1), S, Q};
        ctx.history = {hist.data() + j * Q, Q};
        ctx.outputs = {yhat.data(), Q};
        ctx.c_prev = carry[j];
        const auto [h, c] = step_cell(ctx, spec, w);
        hist[j * Q + t - 1] = h;
        carry[j] = c;
        y += h * w.beta(j);
      }
      yhat[t - 1] = y;
    }
    out[i] = yhat[Q - 1];
  }
  return out;
}

}  // namespace detail

/// Normalized-unit predictions for `rows`. Teacher-forced mode rebuilds H the
/// way training did; recursive mode feeds back the model's own outputs (only
/// differs for Jordan and NARMAX).
inline std::vector<double> predict(const TrainedModel& model, const TimeSeriesDataset& ds, RowRange rows,
                                   FeedbackMode mode = FeedbackMode::teacher_forced, unsigned workers = 0) {
  if (model.weights.beta.size() != model.spec.M) throw DimensionError("model has no trained readout");
  if (rows.size() == 0) return {};
  const TimeSeriesDataset part = slice_rows(ds, rows);
  const bool feedback = model.spec.kind == ArchKind::jordan || model.spec.kind == ArchKind::narmax;
  if (mode == FeedbackMode::recursive && feedback) return detail::predict_recursive(model, part);
  ExecConfig cfg;
  cfg.backend = model.backend;
  cfg.block_size = model.block_size;
  cfg.workers = workers;
  cfg.final_only = true;
  const HiddenTensor ht = compute_h(part, model.spec, model.weights, cfg);
  return detail::readout(ht.H, model.weights.beta);
}

inline EvalReport evaluate(const TrainedModel& model, const TimeSeriesDataset& ds,
                           FeedbackMode mode = FeedbackMode::teacher_forced) {
  EvalReport r;
  const RowRange tr = ds.train_rows(), te = ds.test_rows();
  r.n_train = tr.size();
  r.n_test = te.size();
  const double scale = ds.norm.applied ? ds.norm.target_std : 1.0;
  if (r.n_train > 0) {
    r.rmse_train = rmse(predict(model, ds, tr, mode), targets(ds, tr));
    r.rmse_train_denorm = r.rmse_train * scale;
  }
  if (r.n_test > 0) {
    r.rmse_test = rmse(predict(model, ds, te, mode), targets(ds, te));
    r.rmse_test_denorm = r.rmse_test * scale;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Model files: whitespace-separated text, one record per line. Doubles use the
// shortest round-trip decimal form, so a reload is bit-exact. Every array is
// prefixed by its rank and extents; the file ends with an "end" line.
// ---------------------------------------------------------------------------

inline constexpr int kModelFormatVersion = 1;
inline constexpr std::string_view kModelMagic = "relm-model";

namespace detail {

inline void write_tensor(std::ostream& out, std::string_view name, const DenseTensor& t) {
  out << "tensor " << name << ' ' << t.rank();
  for (std::size_t d : t.dims()) out << ' ' << d;
  for (double v : t.data()) out << ' ' << format_double(v);
  out << '\n';
}

class TokenReader {
 public:
  explicit TokenReader(std::istream& in) : in_(in) {}

  std::string word() {
    std::string s;
    if (!(in_ >> s)) throw FormatError("model file is truncated");
    return s;
  }
  void expect(std::string_view key) {
    const std::string s = word();
    if (s != key) throw FormatError("model file: expected '" + std::string(key) + "', found '" + s + "'");
  }
  template <class Int>
  Int integer() {
    const std::string s = word();
    Int v{};
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) throw FormatError("model file: bad integer '" + s + "'");
    return v;
  }
  double real() {
    const std::string s = word();
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) throw FormatError("model file: bad number '" + s + "'");
    return v;
  }
  DenseTensor tensor(std::string_view name) {
    expect("tensor");
    expect(name);
    const auto rank = integer<std::size_t>();
    if (rank > 3) throw FormatError("model file: tensor rank out of range");
    if (rank == 0) return {};
    std::vector<std::size_t> dims(rank);
    std::size_t count = 1;
    for (auto& d : dims) {
      d = integer<std::size_t>();
      if (d == 0 || d > (std::size_t{1} << 32)) throw FormatError("model file: bad tensor extent");
      count *= d;
    }
    std::vector<double> data(count);
    for (double& v : data) v = real();
    return DenseTensor(dims, std::move(data));
  }

 private:
  std::istream& in_;
};

}  // namespace detail

inline void save_model(const TrainedModel& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write model file '" + path + "'");
  const auto& s = m.spec;
  out << kModelMagic << ' ' << kModelFormatVersion << '\n';
  out << "arch " << to_string(s.kind) << '\n';
  out << "dims " << s.S << ' ' << s.Q << ' ' << s.M << ' ' << s.F << ' ' << s.R << '\n';
  const auto& a = s.act;
  out << "activations " << to_string(a.g) << ' ' << to_string(a.g_f) << ' ' << to_string(a.g_o) << ' '
      << to_string(a.g_c) << ' ' << to_string(a.g_lambda) << ' ' << to_string(a.g_in) << ' ' << to_string(a.g_z)
      << ' ' << to_string(a.g_r) << '\n';
  out << "seed " << m.seed << '\n';
  out << "rng " << m.rng_id << '\n';
  out << "backend " << to_string(m.backend) << ' ' << m.block_size << '\n';
  const auto& t = m.timing;
  out << "timing " << format_double(t.init) << ' ' << format_double(t.transfer_in) << ' '
      << format_double(t.h_compute) << ' ' << format_double(t.solve) << ' ' << format_double(t.transfer_out) << ' '
      << format_double(t.total) << '\n';
  out << "solution " << to_string(m.rank_flag) << ' ' << format_double(m.ridge_lambda) << '\n';
  out << "norm " << (m.norm.applied ? 1 : 0) << ' ' << format_double(m.norm.target_mean) << ' '
      << format_double(m.norm.target_std) << ' ' << m.norm.feature_mean.size();
  for (std::size_t k = 0; k < m.norm.feature_mean.size(); ++k) {
    out << ' ' << format_double(m.norm.feature_mean[k]) << ' ' << format_double(m.norm.feature_std[k]);
  }
  out << '\n';
  const auto& w = m.weights;
  detail::write_tensor(out, "W", w.W);
  detail::write_tensor(out, "b", w.b);
  detail::write_tensor(out, "alpha", w.alpha);
  detail::write_tensor(out, "w_out", w.w_out);
  detail::write_tensor(out, "w_err", w.w_err);
  out << "gates " << w.gates.size() << '\n';
  for (const auto& g : w.gates) {
    detail::write_tensor(out, "gate_W", g.W);
    detail::write_tensor(out, "gate_u", g.u);
    detail::write_tensor(out, "gate_b", g.b);
  }
  detail::write_tensor(out, "beta", w.beta);
  out << "end\n";
  if (!out) throw FormatError("failed writing model file '" + path + "'");
}

inline TrainedModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open model file '" + path + "'");
  detail::TokenReader rd(in);
  std::string magic;
  if (!(in >> magic) || magic != kModelMagic) throw FormatError("'" + path + "' is not a model file");
  const int version = rd.integer<int>();
  if (version != kModelFormatVersion) {
    throw VersionError("model format version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(kModelFormatVersion) + ")");
  }
  try {
    TrainedModel m;
    rd.expect("arch");
    m.spec.kind = parse_arch(rd.word());
    rd.expect("dims");
    m.spec.S = rd.integer<std::size_t>();
    m.spec.Q = rd.integer<std::size_t>();
    m.spec.M = rd.integer<std::size_t>();
    m.spec.F = rd.integer<std::size_t>();
    m.spec.R = rd.integer<std::size_t>();
    rd.expect("activations");
    auto& a = m.spec.act;
    for (Activation* slot : {&a.g, &a.g_f, &a.g_o, &a.g_c, &a.g_lambda, &a.g_in, &a.g_z, &a.g_r}) {
      *slot = parse_activation(rd.word());
    }
    rd.expect("seed");
    m.seed = rd.integer<std::uint64_t>();
    rd.expect("rng");
    m.rng_id = rd.word();
    rd.expect("backend");
    m.backend = parse_backend(rd.word());
    m.block_size = rd.integer<std::size_t>();
    rd.expect("timing");
    for (double* slot : {&m.timing.init, &m.timing.transfer_in, &m.timing.h_compute, &m.timing.solve,
                         &m.timing.transfer_out, &m.timing.total}) {
      *slot = rd.real();
    }
    rd.expect("solution");
    const std::string flag = rd.word();
    if (flag == "full_rank") {
      m.rank_flag = RankFlag::full_rank;
    } else if (flag == "regularized") {
      m.rank_flag = RankFlag::regularized;
    } else {
      throw FormatError("model file: unknown rank flag '" + flag + "'");
    }
    m.ridge_lambda = rd.real();
    rd.expect("norm");
    m.norm.applied = rd.integer<int>() != 0;
    m.norm.target_mean = rd.real();
    m.norm.target_std = rd.real();
    const auto nf = rd.integer<std::size_t>();
    if (nf > 1'000'000) throw FormatError("model file: feature count out of range");
    for (std::size_t k = 0; k < nf; ++k) {
      m.norm.feature_mean.push_back(rd.real());
      m.norm.feature_std.push_back(rd.real());
    }
    auto& w = m.weights;
    w.W = rd.tensor("W");
    w.b = rd.tensor("b");
    w.alpha = rd.tensor("alpha");
    w.w_out = rd.tensor("w_out");
    w.w_err = rd.tensor("w_err");
    rd.expect("gates");
    const auto ng = rd.integer<std::size_t>();
    if (ng > 4) throw FormatError("model file: gate count out of range");
    for (std::size_t g = 0; g < ng; ++g) {
      GateWeights gw;
      gw.W = rd.tensor("gate_W");
      gw.u = rd.tensor("gate_u");
      gw.b = rd.tensor("gate_b");
      w.gates.push_back(std::move(gw));
    }
    w.beta = rd.tensor("beta");
    rd.expect("end");
    check_weights(m.spec, m.weights);
    return m;
  } catch (const DimensionError& e) {
    throw FormatError(std::string("model file is corrupt: ") + e.what());
  }
}

}  // namespace relm

#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "relm/arch.hpp"
#include "relm/bptt.hpp"
#include "relm/dataset.hpp"
#include "relm/errors.hpp"
#include "relm/format.hpp"
#include "relm/hgen.hpp"
#include "relm/parallel.hpp"
#include "relm/synth.hpp"
#include "relm/trainer.hpp"

namespace relm {

// ---------------------------------------------------------------------------
// Plan files
//
// A small subset of TOML: top-level `key = value` lines, `[[run]]` tables,
// `#` comments, values that are quoted strings, numbers, booleans or flat
// arrays of those. An array value inside a run expands into one run per
// element (cartesian product over all array-valued keys).
// ---------------------------------------------------------------------------

struct PlanValue {
  std::vector<std::string> items;
  bool is_array = false;
};

using PlanTable = std::map<std::string, PlanValue>;

struct PlanDocument {
  PlanTable globals;
  std::vector<PlanTable> runs;
};

namespace detail {

inline std::string_view strip(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::string_view drop_comment(std::string_view s) {
  bool quoted = false;
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (s[k] == '"') quoted = !quoted;
    if (s[k] == '#' && !quoted) return s.substr(0, k);
  }
  return s;
}

inline std::string plan_scalar(std::string_view s, std::size_t line) {
  s = strip(s);
  if (s.empty()) throw FormatError("plan line " + std::to_string(line) + ": empty value");
  if (s.front() == '"') {
    if (s.size() < 2 || s.back() != '"') throw FormatError("plan line " + std::to_string(line) + ": unterminated string");
    return std::string(s.substr(1, s.size() - 2));
  }
  return std::string(s);
}

inline PlanValue plan_value(std::string_view s, std::size_t line) {
  s = strip(s);
  PlanValue v;
  if (!s.empty() && s.front() == '[') {
    if (s.back() != ']') throw FormatError("plan line " + std::to_string(line) + ": unterminated array");
    v.is_array = true;
    std::string_view body = s.substr(1, s.size() - 2);
    std::size_t start = 0;
    bool quoted = false;
    for (std::size_t k = 0; k <= body.size(); ++k) {
      if (k < body.size() && body[k] == '"') quoted = !quoted;
      if (k == body.size() || (body[k] == ',' && !quoted)) {
        const auto item = strip(body.substr(start, k - start));
        if (!item.empty()) v.items.push_back(plan_scalar(item, line));
        start = k + 1;
      }
    }
    if (v.items.empty()) throw FormatError("plan line " + std::to_string(line) + ": empty array");
  } else {
    v.items.push_back(plan_scalar(s, line));
  }
  return v;
}

}  // namespace detail

inline PlanDocument parse_plan_document(std::string_view text) {
  PlanDocument doc;
  PlanTable* current = &doc.globals;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = std::min(text.find('\n', pos), text.size());
    ++line_no;
    const auto line = detail::strip(detail::drop_comment(text.substr(pos, nl - pos)));
    pos = nl + 1;
    if (line.empty()) continue;
    if (line == "[[run]]") {
      doc.runs.emplace_back();
      current = &doc.runs.back();
      continue;
    }
    if (line.front() == '[') throw FormatError("plan line " + std::to_string(line_no) + ": unknown table " + std::string(line));
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw FormatError("plan line " + std::to_string(line_no) + ": expected key = value");
    const std::string key(detail::strip(line.substr(0, eq)));
    if (key.empty()) throw FormatError("plan line " + std::to_string(line_no) + ": empty key");
    if (current->count(key)) throw FormatError("plan line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    (*current)[key] = detail::plan_value(line.substr(eq + 1), line_no);
  }
  return doc;
}

struct DataSource {
  std::string path;    // CSV path, or empty for synthetic data
  std::string column;  // CSV column; first column when empty
  SynthKind synth = SynthKind::ar2;
  std::size_t length = 5000;
  double noise = 0.1;
  std::uint64_t data_seed = 0;
  double split = 0.8;

  bool synthetic() const noexcept { return path.empty(); }
  std::string label() const {
    return synthetic() ? "synth:" + std::string(to_string(synth)) + ":" + std::to_string(length) : path;
  }
  std::string key() const {
    return label() + "|" + column + "|" + format_double(noise) + "|" + std::to_string(data_seed) + "|" +
           format_double(split);
  }
};

/// Synthetic series when `data` starts with "synth:", otherwise a CSV file.
inline DataSource parse_data_source(std::string_view data) {
  DataSource d;
  if (data.substr(0, 6) == "synth:") {
    d.synth = parse_synth_kind(data.substr(6));
  } else {
    d.path = std::string(data);
  }
  return d;
}

/// Windowed, split and normalized dataset for the source and lag count.
inline TimeSeriesDataset load_dataset(const DataSource& d, std::size_t Q) {
  RawSeries raw;
  if (d.synthetic()) {
    raw = synth_series(d.synth, d.length, d.noise, d.data_seed);
  } else {
    raw = load_csv(d.path, d.column.empty() ? first_csv_column(d.path) : d.column);
  }
  return normalize_split(window(raw, Q), d.split);
}

struct BenchRun {
  std::string name;
  DataSource data;
  ArchitectureSpec spec;
  ExecConfig cfg;
  std::uint64_t base_seed = 1;
  std::size_t seeds = 5;
  bool bptt = false;
  BpttConfig bptt_cfg;

  std::uint64_t seed_at(std::size_t k) const noexcept { return base_seed + k; }

  /// Canonical single-line description; parsing it back as a plan entry
  /// reproduces the run.
  std::string serialize() const {
    std::ostringstream o;
    o << "name=" << name << ";data=" << data.label() << ";column=" << data.column << ";noise="
      << format_double(data.noise) << ";data_seed=" << data.data_seed << ";split=" << format_double(data.split)
      << ";arch=" << to_string(spec.kind) << ";hidden=" << spec.M << ";lags=" << spec.Q << ";F=" << spec.F
      << ";R=" << spec.R << ";backend=" << to_string(cfg.backend) << ";tile=" << cfg.block_size
      << ";seed=" << base_seed << ";seeds=" << seeds << ";bptt=" << (bptt ? 1 : 0);
    if (bptt) {
      o << ";epochs=" << bptt_cfg.epochs << ";batch=" << bptt_cfg.batch_size
        << ";lr=" << format_double(bptt_cfg.learning_rate) << ";optimizer=" << to_string(bptt_cfg.optimizer);
    }
    return o.str();
  }
};

inline constexpr double kDefaultWatts = 30.0;

struct BenchPlan {
  std::vector<BenchRun> runs;
  std::string output_dir = "bench_out";
  double watts = kDefaultWatts;
  bool parallel_runs = false;
  unsigned workers = 0;

  /// FNV-1a over the canonical run descriptions.
  std::uint64_t hash() const noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& r : runs) {
      for (unsigned char c : r.serialize() + "\n") {
        h ^= c;
        h *= 0x100000001b3ULL;
      }
    }
    return h;
  }
};

namespace detail {

inline std::uint64_t to_u64(const std::string& s, const std::string& key) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw FormatError("plan key '" + key + "': bad integer '" + s + "'");
  return v;
}

inline double to_real(const std::string& s, const std::string& key) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw FormatError("plan key '" + key + "': bad number '" + s + "'");
  return v;
}

inline bool to_bool(const std::string& s, const std::string& key) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw FormatError("plan key '" + key + "': bad boolean '" + s + "'");
}

inline void apply_run_key(BenchRun& r, const std::string& key, const std::string& v) {
  if (key == "name") r.name = v;
  else if (key == "data") {
    const DataSource d = parse_data_source(v);
    r.data.path = d.path;
    r.data.synth = d.synth;
  }
  else if (key == "column") r.data.column = v;
  else if (key == "length") r.data.length = to_u64(v, key);
  else if (key == "noise") r.data.noise = to_real(v, key);
  else if (key == "data_seed") r.data.data_seed = to_u64(v, key);
  else if (key == "split") r.data.split = to_real(v, key);
  else if (key == "arch") r.spec.kind = parse_arch(v);
  else if (key == "hidden") r.spec.M = to_u64(v, key);
  else if (key == "lags") r.spec.Q = to_u64(v, key);
  else if (key == "F") r.spec.F = to_u64(v, key);
  else if (key == "R") r.spec.R = to_u64(v, key);
  else if (key == "activation") r.spec.act.g = parse_activation(v);
  else if (key == "backend") r.cfg.backend = parse_backend(v);
  else if (key == "tile") r.cfg.block_size = to_u64(v, key);
  else if (key == "seed") r.base_seed = to_u64(v, key);
  else if (key == "seeds") r.seeds = to_u64(v, key);
  else if (key == "bptt") r.bptt = to_bool(v, key);
  else if (key == "epochs") r.bptt_cfg.epochs = to_u64(v, key);
  else if (key == "batch") r.bptt_cfg.batch_size = to_u64(v, key);
  else if (key == "lr") r.bptt_cfg.learning_rate = to_real(v, key);
  else if (key == "optimizer") r.bptt_cfg.optimizer = parse_optimizer(v);
  else throw FormatError("unknown plan key '" + key + "'");
}

}  // namespace detail

inline constexpr std::string_view kGlobalPlanKeys[] = {"output", "watts", "parallel", "workers"};

/// Builds the expanded run list. Top-level keys other than output, watts,
/// parallel and workers act as defaults for every run.
inline BenchPlan parse_plan(std::string_view text) {
  const PlanDocument doc = parse_plan_document(text);
  BenchPlan plan;
  PlanTable defaults;
  for (const auto& [key, value] : doc.globals) {
    if (key == "output") plan.output_dir = value.items.front();
    else if (key == "watts") plan.watts = detail::to_real(value.items.front(), key);
    else if (key == "parallel") plan.parallel_runs = detail::to_bool(value.items.front(), key);
    else if (key == "workers") plan.workers = static_cast<unsigned>(detail::to_u64(value.items.front(), key));
    else defaults[key] = value;
  }
  if (doc.runs.empty()) throw FormatError("plan has no [[run]] entries");
  if (!(plan.watts > 0.0)) throw FormatError("plan key 'watts' must be positive");

  for (std::size_t idx = 0; idx < doc.runs.size(); ++idx) {
    PlanTable table = defaults;
    for (const auto& [k, v] : doc.runs[idx]) table[k] = v;
    std::vector<std::pair<std::string, PlanValue>> keys(table.begin(), table.end());
    // "data" first so that data-related keys override the source defaults.
    std::stable_partition(keys.begin(), keys.end(), [](const auto& kv) { return kv.first == "data"; });
    std::vector<std::size_t> pick(keys.size(), 0);
    while (true) {
      BenchRun r;
      r.name = "run" + std::to_string(idx + 1);
      for (std::size_t k = 0; k < keys.size(); ++k) detail::apply_run_key(r, keys[k].first, keys[k].second.items[pick[k]]);
      r.cfg.workers = plan.workers;
      r.spec.validate();
      if (r.seeds < 1) throw FormatError("plan run '" + r.name + "': seeds must be at least 1");
      if (r.cfg.block_size < 1) throw FormatError("plan run '" + r.name + "': tile must be positive");
      plan.runs.push_back(std::move(r));
      bool done = true;
      for (std::size_t k = keys.size(); k-- > 0;) {
        if (++pick[k] < keys[k].second.items.size()) {
          done = false;
          break;
        }
        pick[k] = 0;
      }
      if (done) break;
    }
  }
  return plan;
}

inline BenchPlan load_plan(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open plan file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_plan(ss.str());
}

// ---------------------------------------------------------------------------
// Execution and reports
// ---------------------------------------------------------------------------

struct BpttOutcome {
  TrainTrace trace;
  double elm_test_mse = 0.0;
  double target_mse = 0.0;               // 1.1 x ELM held-out MSE
  std::optional<double> time_to_target;  // seconds, held-out MSE
};

struct RunRecord {
  std::size_t run_index = 0;
  std::string run_name;
  std::string run_spec;
  std::string dataset;
  ArchKind arch = ArchKind::elman;
  Backend backend = Backend::sequential;
  std::size_t M = 0, Q = 0, TW = 0;
  std::uint64_t seed = 0;
  EvalReport eval;
  double naive_rmse = 0.0;
  TrainTiming timing;
  std::vector<double> beta;
  std::optional<BpttOutcome> bptt;
};

struct SpeedupRow {
  std::string dataset;
  ArchKind arch = ArchKind::elman;
  Backend backend = Backend::sequential;
  std::size_t M = 0, Q = 0, TW = 0;
  std::size_t runs = 0;
  double mean_seconds = 0.0, std_seconds = 0.0;
  double mean_h_seconds = 0.0;
  double mean_rmse_test = 0.0, std_rmse_test = 0.0;
  double mean_naive_rmse = 0.0;
  std::optional<double> speedup;  // t_sequential / t_backend over matched seeds
  std::optional<bool> beta_match;  // beta equal to the sequential run's for every seed
  double joules = 0.0;             // watts x mean seconds (estimate)
  std::string seeds;
};

struct BenchResults {
  std::uint64_t plan_hash = 0;
  std::vector<RunRecord> records;
  std::vector<SpeedupRow> summary;
};

namespace detail {

inline std::pair<double, double> mean_and_std(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, v.size() > 1 ? std::sqrt(s / static_cast<double>(v.size() - 1)) : 0.0};
}

inline RunRecord execute_one(const BenchRun& run, std::size_t index, std::size_t seed_k, const TimeSeriesDataset& ds) {
  RunRecord rec;
  rec.run_index = index;
  rec.run_name = run.name;
  rec.run_spec = run.serialize();
  rec.dataset = run.data.label();
  rec.arch = run.spec.kind;
  rec.backend = run.cfg.backend;
  rec.M = run.spec.M;
  rec.Q = run.spec.Q;
  rec.TW = run.cfg.block_size;
  rec.seed = run.seed_at(seed_k);

  ArchitectureSpec spec = run.spec;
  spec.S = ds.S;
  const TrainedModel model = fit(ds, spec, run.cfg, rec.seed);
  rec.timing = model.timing;
  rec.eval = evaluate(model, ds);
  rec.naive_rmse = last_value_rmse(ds, ds.test_rows().size() > 0 ? ds.test_rows() : ds.train_rows());
  rec.beta.assign(model.weights.beta.data().begin(), model.weights.beta.data().end());
  if (run.bptt) {
    BpttOutcome b;
    const BpttResult res = bptt_fit(ds, spec, run.bptt_cfg, rec.seed);
    b.trace = res.trace;
    b.elm_test_mse = rec.eval.rmse_test * rec.eval.rmse_test;
    b.target_mse = 1.1 * b.elm_test_mse;
    b.time_to_target = time_to_target(res.trace, b.target_mse, TraceMetric::test_mse);
    rec.bptt = std::move(b);
  }
  return rec;
}

inline std::vector<SpeedupRow> summarize(const std::vector<RunRecord>& records, double watts) {
  using Key = std::tuple<std::string, int, int, std::size_t, std::size_t, std::size_t>;
  std::map<Key, std::vector<const RunRecord*>> groups;
  std::vector<Key> order;
  for (const auto& r : records) {
    const Key k{r.dataset, static_cast<int>(r.arch), static_cast<int>(r.backend), r.M, r.Q,
                r.backend == Backend::tiled_parallel ? r.TW : 0};
    if (!groups.count(k)) order.push_back(k);
    groups[k].push_back(&r);
  }
  std::vector<SpeedupRow> rows;
  for (const auto& k : order) {
    const auto& g = groups[k];
    SpeedupRow row;
    row.dataset = std::get<0>(k);
    row.arch = static_cast<ArchKind>(std::get<1>(k));
    row.backend = static_cast<Backend>(std::get<2>(k));
    row.M = std::get<3>(k);
    row.Q = std::get<4>(k);
    row.TW = g.front()->TW;
    row.runs = g.size();
    std::vector<double> secs, hsecs, rm, naive;
    for (const auto* r : g) {
      secs.push_back(r->timing.total);
      hsecs.push_back(r->timing.h_compute);
      rm.push_back(r->eval.rmse_test);
      naive.push_back(r->naive_rmse);
      row.seeds += (row.seeds.empty() ? "" : " ") + std::to_string(r->seed);
    }
    std::tie(row.mean_seconds, row.std_seconds) = mean_and_std(secs);
    row.mean_h_seconds = mean_and_std(hsecs).first;
    std::tie(row.mean_rmse_test, row.std_rmse_test) = mean_and_std(rm);
    row.mean_naive_rmse = mean_and_std(naive).first;
    row.joules = watts * row.mean_seconds;

    // Matched sequential group: same dataset/arch/M/Q, equal seeds.
    const Key sk{row.dataset, std::get<1>(k), static_cast<int>(Backend::sequential), row.M, row.Q, 0};
    if (auto it = groups.find(sk); it != groups.end()) {
      double t_seq = 0.0, t_b = 0.0;
      bool match = true;
      std::size_t matched = 0;
      for (const auto* r : g) {
        for (const auto* s : it->second) {
          if (s->seed != r->seed) continue;
          ++matched;
          t_seq += s->timing.total;
          t_b += r->timing.total;
          for (std::size_t j = 0; j < r->beta.size() && j < s->beta.size(); ++j) {
            match = match && std::abs(r->beta[j] - s->beta[j]) <= 1e-8;
          }
          break;
        }
      }
      if (matched > 0 && t_b > 0.0) {
        row.speedup = t_seq / t_b;
        row.beta_match = match;
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string opt_num(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

inline std::string hex64(std::uint64_t h) {
  char buf[17];
  static constexpr char digits[] = "0123456789abcdef";
  for (int k = 15; k >= 0; --k) {
    buf[k] = digits[h & 0xf];
    h >>= 4;
  }
  buf[16] = '\0';
  return buf;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Plots: standalone SVG line charts.
// ---------------------------------------------------------------------------

struct PlotSeries {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

inline void write_line_plot(const std::string& path, const std::string& title, const std::string& xlabel,
                            const std::string& ylabel, const std::vector<PlotSeries>& series) {
  constexpr double W = 640, H = 420, L = 70, R = 170, T = 40, B = 50;
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (const auto& s : series) {
    for (auto [x, y] : s.points) {
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  if (x0 > x1) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  y0 = std::min(y0, 0.0);
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };
  static constexpr const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
                                           "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  std::ofstream o(path);
  if (!o) throw FormatError("cannot write plot '" + path + "'");
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = x0 + (x1 - x0) * k / 4.0, yv = y0 + (y1 - y0) * k / 4.0;
    o << "<text x=\"" << px(xv) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">" << format_double(std::round(xv * 1000) / 1000)
      << "</text>\n";
    o << "<text x=\"" << L - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << format_double(std::round(yv * 1000) / 1000)
      << "</text>\n";
  }
  o << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">" << xlabel << "</text>\n";
  o << "<text x=\"16\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
    << (T + H - B) / 2 << ")\">" << ylabel << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* c = colors[s % 10];
    o << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"2\" points=\"";
    for (auto [x, y] : series[s].points) o << px(x) << ',' << py(y) << ' ';
    o << "\"/>\n";
    for (auto [x, y] : series[s].points) o << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"3\" fill=\"" << c << "\"/>\n";
    o << "<text x=\"" << W - R + 10 << "\" y=\"" << T + 16 * (s + 1) << "\" fill=\"" << c << "\">" << series[s].name
      << "</text>\n";
  }
  o << "</svg>\n";
}

/// Runs every (run, seed) pair, then writes runs.csv, timing.csv, summary.csv,
/// summary.md, speedup_vs_M.svg and, for BPTT runs, bptt_trace.csv,
/// bptt_ratio.csv and mse_vs_time.svg into `out_dir`.
inline BenchResults run_plan(const BenchPlan& plan, const std::string& out_dir, std::ostream& log) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  BenchResults res;
  res.plan_hash = plan.hash();
  const std::string hash = detail::hex64(res.plan_hash);

  std::map<std::string, TimeSeriesDataset> cache;
  struct Job {
    std::size_t run, seed_k;
  };
  std::vector<Job> jobs;
  for (std::size_t r = 0; r < plan.runs.size(); ++r) {
    const auto& run = plan.runs[r];
    const std::string key = run.data.key() + "|Q" + std::to_string(run.spec.Q);
    if (!cache.count(key)) {
      try {
        cache.emplace(key, load_dataset(run.data, run.spec.Q));
      } catch (const std::exception& e) {
        throw ExecutionError("run '" + run.name + "' failed: " + e.what());
      }
    }
    for (std::size_t s = 0; s < run.seeds; ++s) jobs.push_back({r, s});
  }

  res.records.resize(jobs.size());
  std::mutex log_mutex;
  auto body = [&](std::size_t k, unsigned) {
    const auto& run = plan.runs[jobs[k].run];
    const auto& ds = cache.at(run.data.key() + "|Q" + std::to_string(run.spec.Q));
    try {
      res.records[k] = detail::execute_one(run, jobs[k].run, jobs[k].seed_k, ds);
    } catch (const std::exception& e) {
      throw ExecutionError("run '" + run.name + "' (seed " + std::to_string(run.seed_at(jobs[k].seed_k)) +
                           ") failed: " + e.what());
    }
    std::lock_guard lock(log_mutex);
    const auto& rec = res.records[k];
    log << rec.run_name << " seed=" << rec.seed << " backend=" << to_string(rec.backend)
        << " total=" << format_double(rec.timing.total) << "s rmse_test=" << format_double(rec.eval.rmse_test) << '\n';
  };
  parallel_for(jobs.size(), plan.parallel_runs ? resolve_workers(plan.workers) : 1u, body);
  res.summary = detail::summarize(res.records, plan.watts);

  const fs::path dir(out_dir);
  {
    std::ofstream o(dir / "runs.csv");
    o << "plan_hash,run,dataset,arch,backend,M,Q,TW,seed,n_train,n_test,rmse_train,rmse_test,rmse_test_denorm,"
         "naive_rmse,total_seconds,joules_estimate,run_spec\n";
    for (const auto& r : res.records) {
      o << hash << ',' << r.run_name << ',' << r.dataset << ',' << to_string(r.arch) << ',' << to_string(r.backend)
        << ',' << r.M << ',' << r.Q << ',' << r.TW << ',' << r.seed << ',' << r.eval.n_train << ',' << r.eval.n_test
        << ',' << format_double(r.eval.rmse_train) << ',' << format_double(r.eval.rmse_test) << ','
        << format_double(r.eval.rmse_test_denorm) << ',' << format_double(r.naive_rmse) << ','
        << format_double(r.timing.total) << ',' << format_double(plan.watts * r.timing.total) << ",\"" << r.run_spec
        << "\"\n";
    }
  }
  {
    std::ofstream o(dir / "timing.csv");
    o << "plan_hash,run,arch,backend,M,seed,init,transfer_in,h_compute,solve,transfer_out,total,init_share,"
         "h_compute_share,solve_share\n";
    for (const auto& r : res.records) {
      const auto& t = r.timing;
      const double tot = t.total > 0.0 ? t.total : 1.0;
      o << hash << ',' << r.run_name << ',' << to_string(r.arch) << ',' << to_string(r.backend) << ',' << r.M << ','
        << r.seed << ',' << format_double(t.init) << ',' << format_double(t.transfer_in) << ','
        << format_double(t.h_compute) << ',' << format_double(t.solve) << ',' << format_double(t.transfer_out) << ','
        << format_double(t.total) << ',' << format_double(t.init / tot) << ',' << format_double(t.h_compute / tot)
        << ',' << format_double(t.solve / tot) << '\n';
    }
  }
  {
    std::ofstream csv(dir / "summary.csv");
    std::ofstream md(dir / "summary.md");
    csv << "plan_hash,dataset,arch,backend,M,Q,TW,runs,seeds,mean_seconds,std_seconds,mean_h_seconds,speedup,"
           "beta_match,mean_rmse_test,std_rmse_test,naive_rmse,joules_estimate\n";
    md << "Plan `" << hash << "`. Joules are an estimate: " << format_double(plan.watts)
       << " W x mean seconds.\n\n";
    md << "| dataset | arch | backend | M | Q | TW | runs | mean s | std s | speedup | rmse_test (mean +- std) | naive "
          "rmse | joules (est.) |\n";
    md << "|---|---|---|---|---|---|---|---|---|---|---|---|---|\n";
    for (const auto& s : res.summary) {
      csv << hash << ',' << s.dataset << ',' << to_string(s.arch) << ',' << to_string(s.backend) << ',' << s.M << ','
          << s.Q << ',' << s.TW << ',' << s.runs << ',' << s.seeds << ',' << format_double(s.mean_seconds) << ','
          << format_double(s.std_seconds) << ',' << format_double(s.mean_h_seconds) << ','
          << detail::opt_num(s.speedup) << ',' << (s.beta_match ? (*s.beta_match ? "yes" : "no") : "") << ','
          << format_double(s.mean_rmse_test) << ',' << format_double(s.std_rmse_test) << ','
          << format_double(s.mean_naive_rmse) << ',' << format_double(s.joules) << '\n';
      char buf[512];
      std::snprintf(buf, sizeof buf, "| %s | %s | %s | %zu | %zu | %zu | %zu | %.4g | %.2g | %s | %.4f +- %.4f | %.4f | %.3g |\n",
                    s.dataset.c_str(), std::string(to_string(s.arch)).c_str(), std::string(to_string(s.backend)).c_str(),
                    s.M, s.Q, s.TW, s.runs, s.mean_seconds, s.std_seconds,
                    s.speedup ? format_double(std::round(*s.speedup * 100) / 100).c_str() : "-", s.mean_rmse_test,
                    s.std_rmse_test, s.mean_naive_rmse, s.joules);
      md << buf;
    }
  }
  {
    std::map<std::string, PlotSeries> lines;
    for (const auto& s : res.summary) {
      if (!s.speedup || s.backend == Backend::sequential) continue;
      const std::string name = std::string(to_string(s.arch)) + "/" + std::string(to_string(s.backend)) +
                               (s.backend == Backend::tiled_parallel ? std::to_string(s.TW) : "");
      lines[name].name = name;
      lines[name].points.emplace_back(static_cast<double>(s.M), *s.speedup);
    }
    std::vector<PlotSeries> series;
    for (auto& [name, ps] : lines) {
      std::sort(ps.points.begin(), ps.points.end());
      series.push_back(ps);
    }
    if (!series.empty()) write_line_plot((dir / "speedup_vs_M.svg").string(), "Speedup vs hidden neurons", "M", "speedup", series);
  }
  bool any_bptt = false;
  for (const auto& r : res.records) any_bptt = any_bptt || r.bptt.has_value();
  if (any_bptt) {
    std::ofstream tr(dir / "bptt_trace.csv");
    std::ofstream ra(dir / "bptt_ratio.csv");
    tr << "plan_hash,run,arch,seed,epoch,seconds,train_mse,test_mse\n";
    ra << "plan_hash,run,arch,M,seed,elm_seconds,elm_test_mse,bptt_total_seconds,bptt_time_to_elm_mse,"
          "bptt_final_test_mse,ratio\n";
    std::vector<PlotSeries> series;
    for (const auto& r : res.records) {
      if (!r.bptt) continue;
      PlotSeries ps{r.run_name + " seed " + std::to_string(r.seed), {}};
      for (const auto& e : r.bptt->trace.epochs) {
        tr << hash << ',' << r.run_name << ',' << to_string(r.arch) << ',' << r.seed << ',' << e.epoch << ','
           << format_double(e.seconds) << ',' << format_double(e.train_mse) << ',' << format_double(e.test_mse) << '\n';
        ps.points.emplace_back(e.seconds, e.train_mse);
      }
      series.push_back(std::move(ps));
      const auto& b = *r.bptt;
      const double reach = b.time_to_target.value_or(b.trace.total_seconds);
      ra << hash << ',' << r.run_name << ',' << to_string(r.arch) << ',' << r.M << ',' << r.seed << ','
         << format_double(r.timing.total) << ',' << format_double(b.elm_test_mse) << ','
         << format_double(b.trace.total_seconds) << ',' << detail::opt_num(b.time_to_target) << ','
         << format_double(b.trace.epochs.back().test_mse) << ','
         << (b.time_to_target ? format_double(reach / r.timing.total) : "not_reached") << '\n';
    }
    write_line_plot((dir / "mse_vs_time.svg").string(), "BPTT training MSE vs time", "seconds", "MSE", series);
  }
  return res;
}

}  // namespace relm

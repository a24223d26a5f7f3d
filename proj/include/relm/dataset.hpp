#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "relm/errors.hpp"
#include "relm/tensor.hpp"

namespace relm {

struct RawSeries {
  std::string name;
  std::vector<double> values;
};

/// z-score parameters computed from the training portion of each series.
struct NormParams {
  std::vector<double> feature_mean;
  std::vector<double> feature_std;
  double target_mean = 0.0;
  double target_std = 1.0;
  bool applied = false;

  double denormalize_target(double v) const noexcept { return v * target_std + target_mean; }
  double normalize_target(double v) const noexcept { return (v - target_mean) / target_std; }

  friend bool operator==(const NormParams&, const NormParams&) = default;
};

struct RowRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const noexcept { return end - begin; }
};

/// Windowed design. Window time t runs 1..Q, stored at index t-1:
///   X(i, s, t-1)      = feature_s[i + t - 1]   (oldest lag at t = 1)
///   Y(i)              = target[i + Q]
///   teacher(i, t-1)   = target[i + t]          (true output after step t; teacher(i, Q-1) == Y(i))
/// `features` and `target` hold the source series the rows were cut from, so
/// the window of row i always starts at series index i.
struct TimeSeriesDataset {
  std::string name;
  DenseTensor X;
  DenseTensor Y;
  DenseTensor teacher;
  std::size_t Q = 0;
  std::size_t S = 0;
  double split_fraction = 1.0;
  std::size_t n_train = 0;
  NormParams norm;
  std::vector<std::vector<double>> features;
  std::vector<double> target;

  std::size_t rows() const noexcept { return Y.size(); }
  RowRange all_rows() const noexcept { return {0, rows()}; }
  RowRange train_rows() const noexcept { return {0, n_train}; }
  RowRange test_rows() const noexcept { return {n_train, rows()}; }

  /// Most recent observed target before Y(i): the naive last-value forecast.
  double last_value(std::size_t i) const noexcept { return target[i + Q - 1]; }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  for (std::size_t k = 0; k <= line.size(); ++k) {
    if (k == line.size() || line[k] == ',') {
      cells.push_back(trim(line.substr(start, k - start)));
      start = k + 1;
    }
  }
  return cells;
}

inline bool parse_double(std::string_view cell, double& out) {
  if (cell.empty()) return false;
  if (cell.front() == '+') cell.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), out);
  return ec == std::errc{} && ptr == cell.data() + cell.size() && std::isfinite(out);
}

}  // namespace detail

/// Reads the named columns of a headered CSV file, in file order.
inline std::vector<RawSeries> load_csv_columns(const std::string& path,
                                               const std::vector<std::string>& columns) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw IngestionError("'" + path + "' is empty (header row required)");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = detail::split_csv_line(line);

  std::vector<std::size_t> index;
  std::vector<RawSeries> out;
  for (const auto& name : columns) {
    std::size_t k = 0;
    while (k < header.size() && header[k] != name) ++k;
    if (k == header.size()) throw IngestionError("column '" + name + "' not found in '" + path + "'");
    index.push_back(k);
    out.push_back(RawSeries{name, {}});
  }

  std::vector<std::string> pending_blank;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) {
      pending_blank.push_back(std::to_string(line_no));
      continue;
    }
    if (!pending_blank.empty()) {
      throw IngestionError("'" + path + "' line " + pending_blank.front() + ": empty row");
    }
    const auto cells = detail::split_csv_line(line);
    for (std::size_t c = 0; c < index.size(); ++c) {
      double v = 0.0;
      const std::string_view cell = index[c] < cells.size() ? cells[index[c]] : std::string_view{};
      if (!detail::parse_double(cell, v)) {
        throw IngestionError("'" + path + "' line " + std::to_string(line_no) + ", column '" +
                             columns[c] + "': " +
                             (cell.empty() ? std::string("missing value")
                                           : "not a number: '" + std::string(cell) + "'"));
      }
      out[c].values.push_back(v);
    }
  }
  return out;
}

inline RawSeries load_csv(const std::string& path, const std::string& column) {
  return std::move(load_csv_columns(path, {column}).front());
}

/// First header name of a CSV file; the default column when none is given.
inline std::string first_csv_column(const std::string& path) {
  std::ifstream in(path);
  std::string line;
  if (!in || !std::getline(in, line)) throw IngestionError("cannot read header of '" + path + "'");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  return std::string(detail::split_csv_line(line).front());
}

/// Multivariate windowing: one feature series per input dimension plus the
/// target series (which may be one of the features).
inline TimeSeriesDataset window(const std::vector<RawSeries>& features, const RawSeries& target,
                                std::size_t Q) {
  if (features.empty()) throw DimensionError("window needs at least one feature series");
  if (Q < 1) throw DatasetError("lag count Q must be at least 1");
  const std::size_t len = target.values.size();
  for (const auto& f : features) {
    if (f.values.size() != len) throw DimensionError("feature and target series differ in length");
  }
  if (len <= Q) {
    throw DatasetError("series of length " + std::to_string(len) + " is too short for Q = " +
                       std::to_string(Q));
  }
  const std::size_t n = len - Q;
  const std::size_t S = features.size();

  TimeSeriesDataset ds;
  ds.name = target.name;
  ds.Q = Q;
  ds.S = S;
  ds.X = DenseTensor({n, S, Q});
  ds.Y = DenseTensor({n});
  ds.teacher = DenseTensor({n, Q});
  for (const auto& f : features) ds.features.push_back(f.values);
  ds.target = target.values;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t s = 0; s < S; ++s) {
      for (std::size_t t = 0; t < Q; ++t) ds.X(i, s, t) = features[s].values[i + t];
    }
    for (std::size_t t = 0; t < Q; ++t) ds.teacher(i, t) = target.values[i + t + 1];
    ds.Y(i) = target.values[i + Q];
  }
  ds.n_train = n;
  return ds;
}

/// Univariate windowing (S = 1, the series is its own target).
inline TimeSeriesDataset window(const RawSeries& series, std::size_t Q) {
  return window(std::vector<RawSeries>{series}, series, Q);
}

namespace detail {

inline std::pair<double, double> mean_std(const std::vector<double>& v, std::size_t count) {
  double mean = 0.0;
  for (std::size_t k = 0; k < count; ++k) mean += v[k];
  mean /= static_cast<double>(count);
  double var = 0.0;
  for (std::size_t k = 0; k < count; ++k) var += (v[k] - mean) * (v[k] - mean);
  return {mean, std::sqrt(var / static_cast<double>(count))};
}

inline void rebuild_windows(TimeSeriesDataset& ds) {
  std::vector<RawSeries> feats;
  for (const auto& f : ds.features) feats.push_back(RawSeries{"", f});
  TimeSeriesDataset w = window(feats, RawSeries{ds.name, ds.target}, ds.Q);
  ds.X = std::move(w.X);
  ds.Y = std::move(w.Y);
  ds.teacher = std::move(w.teacher);
}

}  // namespace detail

/// Chronological split plus z-score normalization using statistics of the
/// series values that the training rows touch (indices [0, n_train + Q)).
inline TimeSeriesDataset normalize_split(TimeSeriesDataset ds, double split_fraction) {
  if (!(split_fraction > 0.0 && split_fraction <= 1.0)) {
    throw DatasetError("split fraction must lie in (0, 1]");
  }
  if (ds.norm.applied) throw DatasetError("dataset is already normalized");
  const std::size_t n = ds.rows();
  const auto n_train =
      static_cast<std::size_t>(std::floor(static_cast<double>(n) * split_fraction + 1e-9));
  if (n_train == 0) throw DatasetError("split leaves no training rows");
  const std::size_t prefix = n_train + ds.Q;

  NormParams np;
  for (auto& f : ds.features) {
    const auto [m, sd] = detail::mean_std(f, prefix);
    if (!(sd > 0.0)) throw DatasetError("degenerate series: zero variance in training portion");
    np.feature_mean.push_back(m);
    np.feature_std.push_back(sd);
    for (double& v : f) v = (v - m) / sd;
  }
  const auto [tm, tsd] = detail::mean_std(ds.target, prefix);
  if (!(tsd > 0.0)) throw DatasetError("degenerate series: zero variance in training portion");
  np.target_mean = tm;
  np.target_std = tsd;
  np.applied = true;
  for (double& v : ds.target) v = (v - tm) / tsd;

  detail::rebuild_windows(ds);
  ds.norm = std::move(np);
  ds.split_fraction = split_fraction;
  ds.n_train = n_train;
  return ds;
}

/// Applies existing normalization parameters (e.g. a trained model's) to a
/// raw windowed dataset; every row is treated as evaluation data.
inline TimeSeriesDataset apply_normalization(TimeSeriesDataset ds, const NormParams& np) {
  if (!np.applied) return ds;
  if (np.feature_mean.size() != ds.features.size()) {
    throw DimensionError("normalization parameters do not match the dataset's input dimension");
  }
  for (std::size_t s = 0; s < ds.features.size(); ++s) {
    for (double& v : ds.features[s]) v = (v - np.feature_mean[s]) / np.feature_std[s];
  }
  for (double& v : ds.target) v = np.normalize_target(v);
  detail::rebuild_windows(ds);
  ds.norm = np;
  return ds;
}

/// Copy of rows [r.begin, r.end) with the matching stretch of source series.
inline TimeSeriesDataset slice_rows(const TimeSeriesDataset& ds, RowRange r) {
  if (r.begin >= r.end || r.end > ds.rows()) throw DimensionError("row range out of bounds");
  const std::size_t n = r.size();
  TimeSeriesDataset out;
  out.name = ds.name;
  out.Q = ds.Q;
  out.S = ds.S;
  out.norm = ds.norm;
  out.split_fraction = 1.0;
  out.n_train = n;
  out.X = DenseTensor({n, ds.S, ds.Q});
  out.Y = DenseTensor({n});
  out.teacher = DenseTensor({n, ds.Q});
  const std::size_t xrow = ds.S * ds.Q;
  std::copy_n(ds.X.raw() + r.begin * xrow, n * xrow, out.X.raw());
  std::copy_n(ds.Y.raw() + r.begin, n, out.Y.raw());
  std::copy_n(ds.teacher.raw() + r.begin * ds.Q, n * ds.Q, out.teacher.raw());
  for (const auto& f : ds.features) {
    out.features.emplace_back(f.begin() + static_cast<std::ptrdiff_t>(r.begin),
                              f.begin() + static_cast<std::ptrdiff_t>(r.end + ds.Q));
  }
  out.target.assign(ds.target.begin() + static_cast<std::ptrdiff_t>(r.begin),
                    ds.target.begin() + static_cast<std::ptrdiff_t>(r.end + ds.Q));
  return out;
}

}  // namespace relm

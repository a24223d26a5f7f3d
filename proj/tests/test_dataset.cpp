#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "relm/dataset.hpp"
#include "relm/synth.hpp"

namespace {

std::string write_temp(const std::string& name, const std::string& body) {
  const auto path = std::filesystem::temp_directory_path() / ("relm_test_" + name);
  std::ofstream(path) << body;
  return path.string();
}

relm::RawSeries series(std::vector<double> v) { return {"y", std::move(v)}; }

}  // namespace

TEST(LoadCsv, ReadsNamedColumn) {
  const auto p = write_temp("ok.csv", "a,b\n1,10\n2,20\n3,30\n");
  EXPECT_EQ(relm::load_csv(p, "b").values, (std::vector<double>{10, 20, 30}));
  EXPECT_EQ(relm::first_csv_column(p), "a");
}

TEST(LoadCsv, BlankCellNamesRowAndColumn) {
  const auto p = write_temp("blank.csv", "a,b\n1,10\n2,\n");
  try {
    relm::load_csv(p, "b");
    FAIL() << "expected IngestionError";
  } catch (const relm::IngestionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("'b'"), std::string::npos) << msg;
  }
}

TEST(LoadCsv, Failures) {
  EXPECT_THROW(relm::load_csv("/nonexistent/relm.csv", "a"), relm::IngestionError);
  const auto p = write_temp("nocol.csv", "a\n1\n");
  EXPECT_THROW(relm::load_csv(p, "zzz"), relm::IngestionError);
  const auto q = write_temp("nan.csv", "a\n1\nabc\n");
  EXPECT_THROW(relm::load_csv(q, "a"), relm::IngestionError);
}

TEST(Window, SmallExample) {
  const auto ds = relm::window(series({1, 2, 3, 4}), 2);
  ASSERT_EQ(ds.rows(), 2u);
  EXPECT_EQ(ds.X(0, 0, 0), 1);
  EXPECT_EQ(ds.X(0, 0, 1), 2);
  EXPECT_EQ(ds.X(1, 0, 0), 2);
  EXPECT_EQ(ds.X(1, 0, 1), 3);
  EXPECT_EQ(ds.Y(0), 3);
  EXPECT_EQ(ds.Y(1), 4);
}

TEST(Window, SingleLag) {
  const auto ds = relm::window(series({5, 6}), 1);
  ASSERT_EQ(ds.rows(), 1u);
  EXPECT_EQ(ds.X(0, 0, 0), 5);
  EXPECT_EQ(ds.Y(0), 6);
}

TEST(Window, RowCountAndTooShort) {
  EXPECT_EQ(relm::window(series(std::vector<double>(2540, 1.0)), 10).rows(), 2530u);
  EXPECT_THROW(relm::window(series({1, 2, 3}), 3), relm::DatasetError);
}

TEST(Window, TeacherLastColumnIsTarget) {
  const auto raw = relm::synth_series(relm::SynthKind::ar2, 300, 0.1, 4);
  const auto ds = relm::window(raw, 7);
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    EXPECT_EQ(ds.teacher(i, 6), ds.Y(i));
    for (std::size_t t = 0; t + 1 < 7; ++t) EXPECT_EQ(ds.teacher(i, t), ds.X(i, 0, t + 1));
  }
}

TEST(NormalizeSplit, SplitCountAndChronology) {
  std::vector<double> v(2540);
  for (std::size_t k = 0; k < v.size(); ++k) v[k] = std::sin(0.1 * static_cast<double>(k)) + 0.001 * k;
  const auto ds = relm::normalize_split(relm::window(series(v), 10), 0.8);
  EXPECT_EQ(ds.n_train, 2024u);
  EXPECT_EQ(ds.test_rows().begin, 2024u);
  EXPECT_EQ(ds.test_rows().end, 2530u);
}

TEST(NormalizeSplit, StatisticsUseTrainingPrefixOnly) {
  std::vector<double> v(200);
  for (std::size_t k = 0; k < v.size(); ++k) v[k] = std::cos(0.3 * static_cast<double>(k));
  auto w = v;
  w.back() = 1e6;  // only a test row touches the last value
  const auto a = relm::normalize_split(relm::window(series(v), 5), 0.5);
  const auto b = relm::normalize_split(relm::window(series(w), 5), 0.5);
  EXPECT_EQ(a.norm.target_mean, b.norm.target_mean);
  EXPECT_EQ(a.norm.target_std, b.norm.target_std);
}

TEST(NormalizeSplit, DenormalizeRoundTrip) {
  const auto raw = relm::synth_series(relm::SynthKind::sine, 500, 0.2, 9);
  const auto ds = relm::normalize_split(relm::window(raw, 4), 0.8);
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    EXPECT_NEAR(ds.norm.denormalize_target(ds.Y(i)), raw.values[i + 4], 1e-12);
  }
}

TEST(NormalizeSplit, ShiftEquivariance) {
  const auto raw = relm::synth_series(relm::SynthKind::random_walk, 400, 1.0, 2);
  auto shifted = raw;
  for (double& x : shifted.values) x += 123.0;
  const auto a = relm::normalize_split(relm::window(raw, 3), 0.7);
  const auto b = relm::normalize_split(relm::window(shifted, 3), 0.7);
  for (std::size_t i = 0; i < a.rows(); ++i) EXPECT_NEAR(a.Y(i), b.Y(i), 1e-9);
}

TEST(NormalizeSplit, ConstantSeriesRejected) {
  EXPECT_THROW(relm::normalize_split(relm::window(series(std::vector<double>(50, 3.0)), 2), 0.8),
               relm::DatasetError);
  EXPECT_THROW(relm::normalize_split(relm::window(series({1, 2, 3, 4, 5}), 2), 0.0), relm::DatasetError);
}

TEST(SliceRows, KeepsWindowAlignment) {
  const auto raw = relm::synth_series(relm::SynthKind::ar2, 100, 0.1, 5);
  const auto ds = relm::window(raw, 4);
  const auto part = relm::slice_rows(ds, {10, 30});
  ASSERT_EQ(part.rows(), 20u);
  for (std::size_t i = 0; i < 20; ++i) {
    EXPECT_EQ(part.Y(i), ds.Y(i + 10));
    EXPECT_EQ(part.last_value(i), ds.last_value(i + 10));
  }
  EXPECT_THROW(relm::slice_rows(ds, {5, 5}), relm::DimensionError);
}

TEST(Synth, Ar2NoiselessRecurrence) {
  const auto s = relm::synth_series(relm::SynthKind::ar2, 10, 0.0, 1);
  EXPECT_DOUBLE_EQ(s.values[0], 1.0);
  EXPECT_DOUBLE_EQ(s.values[1], 1.0);
  EXPECT_NEAR(s.values[2], 0.4, 1e-15);
  for (std::size_t t = 2; t < 10; ++t) {
    EXPECT_NEAR(s.values[t], 0.6 * s.values[t - 1] - 0.2 * s.values[t - 2], 1e-15);
  }
}

TEST(Synth, DeterministicAndValidated) {
  const auto a = relm::synth_series(relm::SynthKind::sine, 100, 0.3, 8);
  const auto b = relm::synth_series(relm::SynthKind::sine, 100, 0.3, 8);
  EXPECT_EQ(a.values, b.values);
  const auto clean = relm::synth_series(relm::SynthKind::sine, 100, 0.0, 8);
  for (double v : clean.values) EXPECT_LE(std::abs(v), 1.0);
  EXPECT_THROW(relm::synth_series(relm::SynthKind::sine, 2, 0.0, 1), relm::DatasetError);
}

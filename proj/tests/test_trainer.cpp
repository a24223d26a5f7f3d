#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "oracle.hpp"
#include "relm/synth.hpp"
#include "relm/trainer.hpp"

using relm::ArchKind;
using relm::Backend;

namespace {

relm::ArchitectureSpec make_spec(ArchKind k, std::size_t M, std::size_t Q) {
  relm::ArchitectureSpec s;
  s.kind = k;
  s.M = M;
  s.Q = Q;
  s.S = 1;
  if (k == ArchKind::narmax) {
    s.F = 2;
    s.R = 1;
  }
  return s;
}

relm::TimeSeriesDataset ar2(std::size_t length, std::size_t Q, std::uint64_t seed = 1) {
  return relm::normalize_split(relm::window(relm::synth_series(relm::SynthKind::ar2, length, 0.1, seed), Q), 0.8);
}

relm::ExecConfig cfg_for(Backend b) {
  relm::ExecConfig c;
  c.backend = b;
  return c;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("relm_trainer_" + name)).string();
}

}  // namespace

TEST(Fit, RecoversPlantedReadout) {
  auto ds = ar2(400, 5);
  const auto spec = make_spec(ArchKind::elman, 6, 5);
  const std::uint64_t seed = 77;
  relm::SeededRng rng(seed);
  const auto w = relm::init_weights(spec, rng);
  const auto train = relm::slice_rows(ds, ds.train_rows());
  const auto HQ = relm::compute_h_sequential(train, spec, w).final_slice();
  const std::vector<double> planted{0.5, -1.25, 2.0, 0.0, 0.75, -0.3};
  for (std::size_t i = 0; i < ds.n_train; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 6; ++j) s += HQ(i, j) * planted[j];
    ds.Y(i) = s;
  }
  const auto model = relm::fit(ds, spec, cfg_for(Backend::tiled_parallel), seed);
  for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(model.weights.beta(j), planted[j], 1e-6);
  const auto pred = relm::predict(model, ds, ds.train_rows());
  for (std::size_t i = 0; i < ds.n_train; ++i) EXPECT_NEAR(pred[i], ds.Y(i), 1e-6);
}

TEST(Fit, BackendsGiveSameReadout) {
  const auto ds = ar2(600, 8);
  for (auto k : relm::kAllArchs) {
    const auto spec = make_spec(k, 10, 8);
    const auto seq = relm::fit(ds, spec, cfg_for(Backend::sequential), 3);
    const auto tiled = relm::fit(ds, spec, cfg_for(Backend::tiled_parallel), 3);
    for (std::size_t j = 0; j < 10; ++j) EXPECT_NEAR(seq.weights.beta(j), tiled.weights.beta(j), 1e-8);
  }
}

TEST(Fit, TooFewRowsRejected) {
  const auto ds = ar2(40, 3);
  EXPECT_THROW(relm::fit(ds, make_spec(ArchKind::elman, ds.n_train + 1, 3), {}, 1), relm::UnderdeterminedError);
}

TEST(Fit, TimingStagesSumToTotal) {
  const auto ds = ar2(500, 5);
  const auto m = relm::fit(ds, make_spec(ArchKind::gru, 8, 5), cfg_for(Backend::basic_parallel), 2);
  const auto& t = m.timing;
  for (double v : {t.init, t.transfer_in, t.h_compute, t.solve, t.transfer_out}) EXPECT_GE(v, 0.0);
  EXPECT_NEAR(t.total, t.init + t.transfer_in + t.h_compute + t.solve + t.transfer_out, 1e-12);
}

TEST(Predict, ZeroReadoutPredictsZero) {
  const auto ds = ar2(300, 4);
  auto m = relm::fit(ds, make_spec(ArchKind::lstm, 5, 4), {}, 1);
  m.weights.beta.fill(0.0);
  for (double v : relm::predict(m, ds, ds.all_rows())) EXPECT_EQ(v, 0.0);
}

TEST(Predict, RecursiveModeOnlyMattersForOutputFeedback) {
  const auto ds = ar2(300, 4);
  const auto el = relm::fit(ds, make_spec(ArchKind::elman, 5, 4), {}, 1);
  EXPECT_EQ(relm::predict(el, ds, ds.test_rows()),
            relm::predict(el, ds, ds.test_rows(), relm::FeedbackMode::recursive));
  const auto jo = relm::fit(ds, make_spec(ArchKind::jordan, 5, 4), {}, 1);
  EXPECT_NE(relm::predict(jo, ds, ds.test_rows()),
            relm::predict(jo, ds, ds.test_rows(), relm::FeedbackMode::recursive));
}

TEST(Evaluate, RmseOfMeanPredictorIsStd) {
  const std::vector<double> truth{1.0, 3.0, 5.0, 7.0};
  const std::vector<double> mean(4, 4.0);
  EXPECT_DOUBLE_EQ(relm::rmse(mean, truth), std::sqrt(5.0));
  EXPECT_THROW(relm::rmse({1.0}, truth), relm::DimensionError);
}

TEST(Evaluate, ElmBeatsLastValueOnAr2) {
  const auto ds = ar2(2000, 10, 3);
  const auto m = relm::fit(ds, make_spec(ArchKind::elman, 10, 10), cfg_for(Backend::tiled_parallel), 3);
  const auto r = relm::evaluate(m, ds);
  EXPECT_LT(r.rmse_test, relm::last_value_rmse(ds, ds.test_rows()));
  EXPECT_NEAR(r.rmse_test_denorm, r.rmse_test * ds.norm.target_std, 1e-15);
  EXPECT_EQ(r.n_train + r.n_test, ds.rows());
}

TEST(ModelFile, RoundTripIsExact) {
  const auto ds = ar2(300, 4);
  for (auto k : relm::kAllArchs) {
    const auto m = relm::fit(ds, make_spec(k, 4, 4), cfg_for(Backend::tiled_parallel), 12);
    const auto path = temp_path(std::string(relm::to_string(k)) + ".model");
    relm::save_model(m, path);
    const auto back = relm::load_model(path);
    EXPECT_TRUE(back == m) << relm::to_string(k);
    EXPECT_EQ(relm::predict(back, ds, ds.test_rows()), relm::predict(m, ds, ds.test_rows()));
  }
}

TEST(ModelFile, TruncatedAndWrongVersionRejected) {
  const auto ds = ar2(300, 4);
  const auto m = relm::fit(ds, make_spec(ArchKind::gru, 4, 4), {}, 1);
  const auto path = temp_path("full.model");
  relm::save_model(m, path);
  std::ifstream in(path);
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  const auto cut = temp_path("cut.model");
  std::ofstream(cut) << text.substr(0, text.size() / 2);
  EXPECT_THROW(relm::load_model(cut), relm::FormatError);

  auto bumped = text;
  bumped.replace(bumped.find("relm-model 1"), 12, "relm-model 9");
  const auto ver = temp_path("ver.model");
  std::ofstream(ver) << bumped;
  EXPECT_THROW(relm::load_model(ver), relm::VersionError);
  EXPECT_THROW(relm::load_model(temp_path("missing.model")), relm::Error);
}

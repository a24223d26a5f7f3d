#include <gtest/gtest.h>

#include "oracle.hpp"
#include "relm/hgen.hpp"

using relm::ArchitectureSpec;
using relm::ArchKind;
using relm::Backend;
using relm::ExecConfig;

namespace {

ArchitectureSpec make_spec(ArchKind k, std::size_t M, std::size_t Q, std::size_t S) {
  ArchitectureSpec s;
  s.kind = k;
  s.M = M;
  s.Q = Q;
  s.S = S;
  if (k == ArchKind::narmax) {
    s.F = std::min<std::size_t>(Q, 3);
    s.R = 2;
  }
  return s;
}

ExecConfig cfg_for(Backend b, std::size_t bs = 16, unsigned workers = 0) {
  ExecConfig c;
  c.backend = b;
  c.block_size = bs;
  c.workers = workers;
  c.debug_checks = true;
  return c;
}

}  // namespace

class HgenOracle : public ::testing::TestWithParam<ArchKind> {};

TEST_P(HgenOracle, EveryBackendMatchesBruteForce) {
  const auto kind = GetParam();
  for (std::size_t S : {1u, 3u}) {
    const auto ds = oracle::random_dataset(37, S, 6, 100 + S);
    const auto spec = make_spec(kind, 5, 6, S);
    relm::SeededRng rng(7);
    const auto w = relm::init_weights(spec, rng);
    const auto ref = oracle::hidden(ds, spec, w);
    for (auto b : {Backend::sequential, Backend::basic_parallel, Backend::tiled_parallel}) {
      for (std::size_t bs : {2u, 4u, 16u}) {
        const auto out = relm::compute_h(ds, spec, w, cfg_for(b, bs));
        ASSERT_EQ(out.H.size(), ref.size());
        EXPECT_LE(oracle::max_abs_diff(out.H.raw(), ref.data(), ref.size()), 1e-12)
            << relm::to_string(kind) << " " << relm::to_string(b) << " S=" << S << " BS=" << bs;
      }
    }
  }
}

TEST_P(HgenOracle, BackendsAgreeBitwise) {
  const auto kind = GetParam();
  const auto ds = oracle::random_dataset(41, 2, 5, 3);
  const auto spec = make_spec(kind, 7, 5, 2);
  relm::SeededRng rng(31);
  const auto w = relm::init_weights(spec, rng);
  const auto seq = relm::compute_h_sequential(ds, spec, w);
  EXPECT_EQ(seq.H, relm::compute_h(ds, spec, w, cfg_for(Backend::basic_parallel, 4, 3)).H);
  EXPECT_EQ(seq.H, relm::compute_h(ds, spec, w, cfg_for(Backend::tiled_parallel, 4, 3)).H);
}

INSTANTIATE_TEST_SUITE_P(AllArchs, HgenOracle, ::testing::ValuesIn(relm::kAllArchs),
                         [](const auto& info) { return std::string(relm::to_string(info.param)); });

TEST(Hgen, EdgeBlocksMasked) {
  // n = 5 and M = 3 leave a single partial 16 x 16 block.
  const auto ds = oracle::random_dataset(5, 1, 4, 8);
  const auto spec = make_spec(ArchKind::elman, 3, 4, 1);
  relm::SeededRng rng(1);
  const auto w = relm::init_weights(spec, rng);
  const auto ref = oracle::hidden(ds, spec, w);
  for (auto b : {Backend::basic_parallel, Backend::tiled_parallel}) {
    const auto out = relm::compute_h(ds, spec, w, cfg_for(b));
    EXPECT_EQ(out.H.dims(), (std::vector<std::size_t>{5, 3, 4}));
    EXPECT_LE(oracle::max_abs_diff(out.H.raw(), ref.data(), ref.size()), 1e-12);
  }
}

TEST(Hgen, ZeroWeightsGiveHalfEverywhere) {
  const auto ds = oracle::random_dataset(20, 1, 3, 2);
  const auto spec = make_spec(ArchKind::elman, 4, 3, 1);
  relm::SeededRng rng(1);
  auto w = relm::init_weights(spec, rng);
  w.W.fill(0.0);
  w.b.fill(0.0);
  w.alpha.fill(0.0);
  for (auto b : {Backend::sequential, Backend::tiled_parallel}) {
    const auto out = relm::compute_h(ds, spec, w, cfg_for(b));
    for (double v : out.H.data()) EXPECT_EQ(v, 0.5);
  }
}

TEST(Hgen, RowsAreIndependent) {
  const auto ds = oracle::random_dataset(30, 2, 4, 12);
  const auto spec = make_spec(ArchKind::gru, 6, 4, 2);
  relm::SeededRng rng(4);
  const auto w = relm::init_weights(spec, rng);
  const auto full = relm::compute_h_sequential(ds, spec, w).H;
  const auto part = relm::slice_rows(ds, {11, 19});
  const auto sub = relm::compute_h(part, spec, w, cfg_for(Backend::tiled_parallel, 4)).H;
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 6; ++j)
      for (std::size_t t = 0; t < 4; ++t) EXPECT_EQ(sub(i, j, t), full(i + 11, j, t));
}

TEST(Hgen, WorkerCountDoesNotChangeResult) {
  const auto ds = oracle::random_dataset(70, 1, 6, 5);
  const auto spec = make_spec(ArchKind::lstm, 9, 6, 1);
  relm::SeededRng rng(8);
  const auto w = relm::init_weights(spec, rng);
  const auto one = relm::compute_h(ds, spec, w, cfg_for(Backend::tiled_parallel, 8, 1)).H;
  for (unsigned workers : {2u, 3u, 8u}) {
    EXPECT_EQ(one, relm::compute_h(ds, spec, w, cfg_for(Backend::tiled_parallel, 8, workers)).H);
    EXPECT_EQ(one, relm::compute_h(ds, spec, w, cfg_for(Backend::basic_parallel, 8, workers)).H);
  }
}

TEST(Hgen, FinalOnlyMatchesLastSlice) {
  const auto ds = oracle::random_dataset(25, 1, 5, 6);
  const auto spec = make_spec(ArchKind::fully_connected, 4, 5, 1);
  relm::SeededRng rng(3);
  const auto w = relm::init_weights(spec, rng);
  const auto full = relm::compute_h_sequential(ds, spec, w);
  for (auto b : {Backend::sequential, Backend::basic_parallel, Backend::tiled_parallel}) {
    auto c = cfg_for(b, 4);
    c.final_only = true;
    const auto fin = relm::compute_h(ds, spec, w, c);
    EXPECT_TRUE(fin.final_only);
    EXPECT_EQ(fin.H, full.final_slice());
  }
}

TEST(Hgen, ShapeMismatchRejected) {
  const auto ds = oracle::random_dataset(10, 1, 3, 1);
  auto spec = make_spec(ArchKind::elman, 2, 4, 1);  // Q differs from the dataset
  relm::SeededRng rng(1);
  const auto w = relm::init_weights(spec, rng);
  EXPECT_THROW(relm::compute_h_sequential(ds, spec, w), relm::DimensionError);
  spec.Q = 3;
  auto w3 = relm::init_weights(spec, rng);
  w3.W = relm::DenseTensor({2, 2});
  EXPECT_THROW(relm::compute_h_sequential(ds, spec, w3), relm::DimensionError);
}

TEST(Hgen, TimingAndTileStatsReported) {
  const auto ds = oracle::random_dataset(64, 1, 10, 2);
  const auto spec = make_spec(ArchKind::elman, 16, 10, 1);
  relm::SeededRng rng(2);
  const auto w = relm::init_weights(spec, rng);
  const auto out = relm::compute_h(ds, spec, w, cfg_for(Backend::tiled_parallel, 16));
  EXPECT_EQ(out.tiles.dot_phases_per_step, 1u);
  EXPECT_GT(out.tiles.barriers, 0u);
  EXPECT_GE(out.timing.total, out.timing.h_compute);
}

TEST(StageBuffer, ReadWithoutBarrierIsDetected) {
  relm::detail::StageBuffer<true> buf;
  buf.resize(4);
  EXPECT_THROW(buf.get(0, 1), std::logic_error);  // never loaded
  buf.put(0, 2.5, 3);
  EXPECT_THROW(buf.get(0, 3), std::logic_error);  // same phase as the load
  EXPECT_EQ(buf.get(0, 4), 2.5);
  EXPECT_THROW(buf.get(0, 5), std::logic_error);  // stale after a second barrier
  EXPECT_EQ(buf.get_persistent(0, 9), 2.5);
  EXPECT_THROW(buf.get_persistent(0, 3), std::logic_error);
}

TEST(StageBuffer, UncheckedBufferSkipsTags) {
  relm::detail::StageBuffer<false> buf;
  buf.resize(1);
  buf.put(0, 1.5, 0);
  EXPECT_EQ(buf.get(0, 0), 1.5);
}

TEST(WriteShadow, DoubleWriteDetected) {
  relm::detail::WriteShadow shadow(3);
  shadow.mark(0);
  shadow.mark(1);
  shadow.mark(2);
  EXPECT_NO_THROW(shadow.verify());
  shadow.mark(1);
  EXPECT_THROW(shadow.verify(), std::logic_error);
}

TEST(TilePhases, CeilOfInputOverTile) {
  EXPECT_EQ(relm::tile_phase_count(1, 16), 1u);
  EXPECT_EQ(relm::tile_phase_count(64, 32), 2u);
  EXPECT_EQ(relm::tile_phase_count(33, 32), 2u);
  const auto ds = oracle::random_dataset(40, 64, 2, 9);
  const auto spec = make_spec(ArchKind::elman, 40, 2, 64);
  relm::SeededRng rng(1);
  const auto w = relm::init_weights(spec, rng);
  EXPECT_EQ(relm::compute_h(ds, spec, w, cfg_for(Backend::tiled_parallel, 32)).tiles.dot_phases_per_step, 2u);
}

TEST(StagedReadCount, ClosedForm) {
  auto spec = make_spec(ArchKind::elman, 16, 10, 1);
  EXPECT_EQ(relm::staged_read_count(spec, cfg_for(Backend::tiled_parallel, 16)), 2u);
  EXPECT_EQ(relm::staged_read_count(spec, cfg_for(Backend::tiled_parallel, 1)), 10u * (2 + 10 + 2));
  spec.Q = 50;
  spec.S = 4;
  // ceil((400 + 1275) / 256) + 1 and ceil(1675 / 1024) + 1
  EXPECT_EQ(relm::staged_read_count(spec, cfg_for(Backend::tiled_parallel, 16)), 8u);
  EXPECT_EQ(relm::staged_read_count(spec, cfg_for(Backend::tiled_parallel, 32)), 3u);
  spec.kind = ArchKind::gru;
  EXPECT_THROW(relm::staged_read_count(spec, cfg_for(Backend::tiled_parallel, 16)), relm::UnsupportedError);
}

TEST(ParseBackend, Names) {
  EXPECT_EQ(relm::parse_backend("seq"), Backend::sequential);
  EXPECT_EQ(relm::parse_backend("basic"), Backend::basic_parallel);
  EXPECT_EQ(relm::parse_backend("tiled"), Backend::tiled_parallel);
  EXPECT_THROW(relm::parse_backend("gpu"), relm::FormatError);
}

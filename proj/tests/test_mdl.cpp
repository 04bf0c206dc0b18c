#include <gtest/gtest.h>

#include <algorithm>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "spanprobe/mdl.hpp"

using namespace spanprobe;
using spanprobe::oracle::synth;

namespace {

ProbeConfig tiny_config(std::uint32_t k = 2, LayerSelect layers = LayerSelect::single(0)) {
  ProbeConfig c;
  c.projection_dim = 6;
  c.mlp_hidden_dim = 5;
  c.num_classes = k;
  c.layers = layers;
  c.batch_size = 4;
  c.learning_rate = 1e-2;
  return c;
}

double median3(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[1];
}

}  // namespace

TEST(Schedule, DefaultFractionsAtThousand) {
  const auto s = make_schedule(1000);
  EXPECT_EQ(s.boundaries, (std::vector<std::size_t>{1, 2, 4, 8, 16, 32, 63, 125, 250, 500, 1000}));
}

TEST(Schedule, CustomFractions) {
  EXPECT_EQ(make_schedule(10, {0.5, 1.0}).boundaries, (std::vector<std::size_t>{5, 10}));
  EXPECT_EQ(make_schedule(10, {0.5}).boundaries, (std::vector<std::size_t>{5, 10}));
  EXPECT_EQ(make_schedule(20, {0.001, 0.002, 0.5}).boundaries, (std::vector<std::size_t>{1, 10, 20}));
}

TEST(Schedule, Errors) {
  EXPECT_THROW(make_schedule(9), ConfigError);
  EXPECT_THROW(make_schedule(100, {0.0, 0.5}), ConfigError);
  EXPECT_THROW(make_schedule(100, {1.5}), ConfigError);
  EXPECT_THROW(make_schedule(100, {1.0}), ConfigError);
  EXPECT_THROW((PortionSchedule{{3, 3, 10}, {}}.validate(10)), ConfigError);
  EXPECT_THROW((PortionSchedule{{3, 9}, {}}.validate(10)), ConfigError);
  EXPECT_THROW((PortionSchedule{{0, 10}, {}}.validate(10)), ConfigError);
}

TEST(Compression, Examples) {
  EXPECT_EQ(compression(1000.0, 1000, 2), 1.0);
  EXPECT_EQ(compression(500.0, 1000, 2), 2.0);
  EXPECT_EQ(compression(1000.0, 500, 4), 1.0);
  EXPECT_THROW(compression(0.0, 10, 2), ConfigError);
}

TEST(OnlineCoding, SingleBoundaryCompressionIsExactlyOne) {
  for (std::uint32_t k : {2u, 3u, 4u}) {
    const auto set = synth(37, 2, 3, k, 1, 5.0, k);
    const auto rep = online_coding(view_all(set), tiny_config(k), PortionSchedule{{37}, {}}, 1);
    EXPECT_EQ(rep.compression, 1.0) << k;
    EXPECT_TRUE(rep.block_codelengths_bits.empty());
  }
}

TEST(OnlineCoding, ZeroStepProbeCostsUniformBits) {
  for (std::uint32_t k : {2u, 4u}) {
    const auto set = synth(100, 2, 3, 7, 0, 5.0, k);
    auto cfg = tiny_config(k);
    cfg.epochs = 0;
    const auto sched = make_schedule(100);
    const auto rep = online_coding(view_all(set), cfg, sched, 3);
    ASSERT_EQ(rep.block_codelengths_bits.size(), sched.boundaries.size() - 1);
    for (std::size_t i = 0; i + 1 < sched.boundaries.size(); ++i)
      EXPECT_EQ(rep.block_codelengths_bits[i],
                static_cast<double>(sched.boundaries[i + 1] - sched.boundaries[i]) * std::log2(double(k)));
    EXPECT_EQ(rep.compression, 1.0);
  }
}

// Property: random small instances (N <= 64) agree bit-for-bit with the naive
// recomputation, and the total is exactly uniform + sum of blocks.
TEST(OnlineCodingProperty, OracleEquivalenceAndAdditivity) {
  Rng rng(2024);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t n = 10 + rng.uniform_index(55);
    const auto k = static_cast<std::uint32_t>(2 + rng.uniform_index(3));
    const auto layers = static_cast<std::uint32_t>(1 + rng.uniform_index(3));
    const auto set = synth(n, layers, 1 + static_cast<std::uint32_t>(rng.uniform_index(4)), rng.next(),
                           static_cast<std::uint32_t>(rng.uniform_index(layers)), 3.0 * rng.uniform01(), k);
    const LayerSelect sel = rng.uniform_index(2) ? LayerSelect::mix()
                                                  : LayerSelect::single(static_cast<std::uint32_t>(rng.uniform_index(layers)));
    auto cfg = tiny_config(k, sel);
    cfg.epochs = 1 + rng.uniform_index(3);
    const auto seed = rng.next();
    const RecordView ordered = coding_order(view_all(set), seed);
    const auto sched = make_schedule(n, {0.1, 0.2, 0.4, 0.7, 1.0});
    const auto rep = online_coding(ordered, cfg, sched, seed);

    EXPECT_EQ(rep.total_mdl_bits, oracle::naive_online_codelength(ordered, cfg, sched.boundaries, seed)) << trial;
    double sum = rep.uniform_cost_bits;
    for (double b : rep.block_codelengths_bits) sum += b;
    EXPECT_EQ(rep.total_mdl_bits, sum);
    EXPECT_GT(rep.compression, 0.0);
    EXPECT_EQ(rep.uniform_cost_bits, static_cast<double>(sched.boundaries.front()) * std::log2(double(k)));
  }
}

TEST(OnlineCoding, SameSeedIdenticalReport) {
  const auto set = synth(60, 2, 3, 4, 1, 2.0);
  const auto sched = make_schedule(60, {0.1, 0.5, 1.0});
  const auto a = online_coding(view_all(set), tiny_config(), sched, 9);
  const auto b = online_coding(view_all(set), tiny_config(), sched, 9);
  EXPECT_EQ(a.block_codelengths_bits, b.block_codelengths_bits);
  EXPECT_EQ(a.total_mdl_bits, b.total_mdl_bits);
}

TEST(OnlineCoding, ScheduleMustEndAtN) {
  const auto set = synth(20, 1, 2, 1);
  EXPECT_THROW(online_coding(view_all(set), tiny_config(), PortionSchedule{{5, 10}, {}}, 1), ConfigError);
}

TEST(LayerCurve, LayerOrderInvariance) {
  const auto set = synth(120, 3, 4, 5, 1, 3.0);
  const auto cfg = tiny_config();
  const std::vector<double> fr{0.1, 0.3, 1.0};
  const auto a = layerwise_compression(view_all(set), cfg, fr, 2, std::vector<std::uint32_t>{0, 1, 2});
  const auto b = layerwise_compression(view_all(set), cfg, fr, 2, std::vector<std::uint32_t>{2, 0, 1});
  const auto c = layerwise_compression(view_all(set), cfg, fr, 2, std::vector<std::uint32_t>{1}, 3);
  EXPECT_EQ(a.compression[0], b.compression[1]);
  EXPECT_EQ(a.compression[1], b.compression[2]);
  EXPECT_EQ(a.compression[2], b.compression[0]);
  EXPECT_EQ(a.compression[1], c.compression[0]);
  EXPECT_EQ(a.best_layer, b.best_layer);
}

TEST(LayerCurve, ParallelMatchesSerial) {
  const auto set = synth(80, 3, 3, 6, 2, 3.0);
  const auto a = layerwise_compression(view_all(set), tiny_config(), {0.2, 1.0}, 1, std::nullopt, 1);
  const auto b = layerwise_compression(view_all(set), tiny_config(), {0.2, 1.0}, 1, std::nullopt, 3);
  EXPECT_EQ(a.compression, b.compression);
}

TEST(LayerCurve, ErrorsAreTaggedWithLayer) {
  const auto set = synth(40, 2, 2, 1);
  try {
    layerwise_compression(view_all(set), tiny_config(), kDefaultPortionFractions, 1, std::vector<std::uint32_t>{0, 5});
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("layer 5"), std::string::npos);
  }
}

TEST(LayerCurve, PlantedLayerIsBest) {
  const auto set = synth(1000, 4, 16, 12, 2, 5.0);
  const auto curve = layerwise_compression(view_all(set), ProbeConfig{}, kDefaultPortionFractions, 1);
  EXPECT_EQ(curve.best_layer, 2u);
  EXPECT_GT(curve.compression[2], 1.3);
  for (std::size_t l : {0, 1, 3}) EXPECT_NEAR(curve.compression[l], 1.0, 0.1) << l;
}

TEST(LayerCurve, ZeroSignalLayersNearOne) {
  const auto set = synth(2000, 2, 16, 13);
  const auto curve = layerwise_compression(view_all(set), ProbeConfig{}, kDefaultPortionFractions, 1);
  for (double c : curve.compression) EXPECT_NEAR(c, 1.0, 0.1);
}

// Statistical property: 3-seed medians non-decreasing in planted strength.
TEST(LayerCurve, MonotoneSignalResponse) {
  std::vector<double> medians;
  for (double strength : {0.0, 1.0, 2.0, 5.0}) {
    std::vector<double> c;
    for (std::uint64_t seed : {1, 2, 3}) {
      const auto set = synth(1000, 1, 16, 40 + seed, 0, strength);
      c.push_back(layerwise_compression(view_all(set), ProbeConfig{}, kDefaultPortionFractions, seed).compression[0]);
    }
    medians.push_back(median3(c));
  }
  for (std::size_t i = 1; i < medians.size(); ++i) EXPECT_GE(medians[i], medians[i - 1]) << i;
}

#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "phi42/rng.hpp"
#include "phi42/stats.hpp"

using namespace phi42;

// Known-answer vectors from the Random123 distribution (kat_vectors, philox4x32_10).
TEST(Philox, KnownAnswers) {
  using A4 = std::array<std::uint32_t, 4>;
  EXPECT_EQ(philox4x32({0, 0, 0, 0}, {0, 0}), (A4{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
  EXPECT_EQ(philox4x32({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu}),
            (A4{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
  EXPECT_EQ(philox4x32({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u}),
            (A4{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(RngStream, IdenticalPairsReproduce) {
  RngStream a(42, 7), b(42, 7);
  for (int i = 0; i < 1000; ++i) {
    EXPECT_EQ(a.next_u64(), b.next_u64());
  }
  RngStream c(42, 7), d(42, 7);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(c.normal(), d.normal());
}

TEST(RngStream, DistinctStreamsDiffer) {
  RngStream a(42, 7), b(42, 8), c(43, 7);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 100; ++i) {
    seen.insert(a.next_u64());
    seen.insert(b.next_u64());
    seen.insert(c.next_u64());
  }
  EXPECT_EQ(seen.size(), 300u);
  EXPECT_NE(a.split(0).stream_id(), a.split(1).stream_id());
}

TEST(RngStream, UniformAndNormalMoments) {
  RngStream rng(1, 0);
  std::vector<double> u, z;
  for (int i = 0; i < 200000; ++i) {
    u.push_back(rng.uniform());
    z.push_back(rng.normal());
  }
  for (double x : u) ASSERT_TRUE(x > 0.0 && x < 1.0);
  EXPECT_NEAR(stats::mean(u), 0.5, 4 * std::sqrt(1.0 / 12 / u.size()));
  EXPECT_NEAR(stats::mean(z), 0.0, 4 * std::sqrt(1.0 / z.size()));
  EXPECT_NEAR(stats::variance(z), 1.0, 4 * std::sqrt(2.0 / z.size()));
  auto ks = stats::ks_one_sample(z, [](double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); });
  EXPECT_GT(ks.p_value, 1e-3);
}

// Independence across streams: sample correlation of paired draws consistent with 0.
TEST(RngStream, CrossStreamCorrelation) {
  RngStream a(9, 1), b(9, 2);
  double sxy = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) sxy += a.normal() * b.normal();
  EXPECT_NEAR(sxy / n, 0.0, 4.0 / std::sqrt(n));
}

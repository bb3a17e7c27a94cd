#include <gtest/gtest.h>

#include <random>

#include "kprefine/aggregate.hpp"
#include "kprefine/errors.hpp"

namespace kprefine {
namespace {

TEST(Nms, SuppressesCloseLowerScore) {
  const std::vector<Keypoint> kps{{0, 0, 0.9, 0}, {1, 0, 0.5, 0}};
  const auto out = nms(kps, 2.0);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].x, 0.0);
}

TEST(Nms, KeepsDistantPoints) {
  const std::vector<Keypoint> kps{{0, 0, 0.9, 0}, {10, 0, 0.5, 0}};
  EXPECT_EQ(nms(kps, 2.0).size(), 2u);
}

TEST(Nms, GreedyChain) {
  const std::vector<Keypoint> kps{{1.5, 0, 2, 0}, {0, 0, 3, 0}, {3, 0, 1, 0}};
  const auto out = nms(kps, 2.0);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].x, 0.0);
  EXPECT_EQ(out[1].x, 3.0);
}

TEST(Nms, ExactlyRadiusApartIsKept) {
  const std::vector<Keypoint> kps{{0, 0, 2, 0}, {2, 0, 1, 0}};
  EXPECT_EQ(nms(kps, 2.0).size(), 2u);
}

TEST(Nms, Errors) {
  const std::vector<Keypoint> mixed{{0, 0, 1, 0}, {5, 0, 1, 1}};
  EXPECT_THROW(nms(mixed, 1.0), MixedWarpIds);
  EXPECT_THROW(nms(std::vector<Keypoint>{{0, 0, 1, 0}}, 0.0), InvalidConfig);
  EXPECT_TRUE(nms(std::vector<Keypoint>{}, 1.0).empty());
}

TEST(Nms, KeptPairsAreSpacedAndSubsetOfInput) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  std::vector<Keypoint> kps;
  for (int i = 0; i < 2000; ++i) kps.push_back({u(rng), u(rng), u(rng), 2});
  const double radius = 1.5;
  const auto out = nms(kps, radius);
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t j = i + 1; j < out.size(); ++j) ASSERT_GE(distance(out[i].position(), out[j].position()), radius);
    const bool in_input = std::any_of(kps.begin(), kps.end(), [&](const Keypoint& k) {
      return k.x == out[i].x && k.y == out[i].y && k.score == out[i].score;
    });
    EXPECT_TRUE(in_input);
    if (i > 0) {
      EXPECT_GE(out[i - 1].score, out[i].score);
    }
  }
  // Brute-force greedy reference.
  std::vector<Keypoint> order = kps;
  std::stable_sort(order.begin(), order.end(), [](auto& a, auto& b) { return a.score > b.score; });
  std::vector<Keypoint> ref;
  for (const auto& kp : order) {
    bool ok = true;
    for (const auto& k : ref) ok = ok && distance(k.position(), kp.position()) >= radius;
    if (ok) ref.push_back(kp);
  }
  ASSERT_EQ(ref.size(), out.size());
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_EQ(ref[i].x, out[i].x);
}

TEST(Pool, Counts) {
  std::vector<std::vector<Keypoint>> lists(2);
  for (int i = 0; i < 3; ++i) lists[0].push_back({double(i), 0, double(i), 0});
  for (int i = 0; i < 4; ++i) lists[1].push_back({double(i), 1, double(i), 1});
  EXPECT_EQ(pool(lists).size(), 7u);
  EXPECT_TRUE(pool(std::vector<std::vector<Keypoint>>(3)).empty());
}

TEST(Pool, OrderByWarpThenScore) {
  std::vector<std::vector<Keypoint>> lists(2);
  lists[1] = {{0, 0, 1.0, 1}, {1, 0, 5.0, 1}};
  lists[0] = {{2, 0, 0.5, 0}, {3, 0, 2.0, 0}};
  const auto out = pool(lists);
  ASSERT_EQ(out.size(), 4u);
  EXPECT_EQ(out[0].score, 2.0);
  EXPECT_EQ(out[1].score, 0.5);
  EXPECT_EQ(out[2].score, 5.0);
  EXPECT_EQ(out[3].score, 1.0);
}

TEST(Pool, FullSizedInputBound) {
  std::vector<std::vector<Keypoint>> lists(21);
  for (int w = 0; w < 21; ++w) {
    for (int i = 0; i < 2048; ++i) lists[w].push_back({double(i), double(w), 1.0, w});
  }
  EXPECT_EQ(pool(lists).size(), 43008u);
}

}  // namespace
}  // namespace kprefine

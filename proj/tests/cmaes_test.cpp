#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "gpmgc/cmaes.hpp"

namespace {

using gpmgc::CmaConfig;
using gpmgc::SearchBox;
using gpmgc::Vector;

double neg_ackley(const Vector& x) {
  const double n = static_cast<double>(x.size());
  const double sq = x.squaredNorm() / n;
  const double cs = (2.0 * std::numbers::pi * x.array()).cos().sum() / n;
  return 20.0 * std::exp(-0.2 * std::sqrt(sq)) + std::exp(cs) - 20.0 - std::numbers::e;
}

SearchBox cube(int dim, double half) {
  return SearchBox(std::vector<double>(dim, -half), std::vector<double>(dim, half));
}

}  // namespace

TEST(DefaultPopulation, StandardFormula) {
  EXPECT_EQ(gpmgc::default_population(1), 4);
  EXPECT_EQ(gpmgc::default_population(2), 6);
  EXPECT_EQ(gpmgc::default_population(5), 8);
  EXPECT_EQ(gpmgc::default_population(6), 9);
}

TEST(Maximize, SphereFiveDimensions) {
  Vector c(5);
  c << 1.0, -2.0, 0.5, 3.0, -4.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    CmaConfig cfg;
    cfg.max_evaluations = 5000;
    cfg.seed = seed;
    const auto r = gpmgc::maximize([&](const Vector& x) { return -(x - c).squaredNorm(); }, cube(5, 5.0), cfg);
    EXPECT_LE((r.x_best - c).norm(), 1e-3) << "seed " << seed;
    EXPECT_LE(r.evaluations, 5000);
  }
}

TEST(Maximize, AckleyTwoDimensions) {
  int hits = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    CmaConfig cfg;
    cfg.max_evaluations = 4000;
    cfg.restarts = 2;
    cfg.seed = seed;
    const auto r = gpmgc::maximize(neg_ackley, cube(2, 32.768), cfg);
    if (r.f_best >= -0.01) ++hits;
  }
  EXPECT_GE(hits, 8);
}

TEST(Maximize, SingleGenerationReturnsBestSample) {
  CmaConfig cfg;
  cfg.max_evaluations = gpmgc::default_population(3);
  cfg.seed = 7;
  const SearchBox box = cube(3, 1.0);
  std::vector<std::pair<Vector, double>> seen;
  const auto r = gpmgc::maximize(
      [&](const Vector& x) {
        const double f = x.sum();
        seen.emplace_back(x, f);
        return f;
      },
      box, cfg);
  ASSERT_EQ(static_cast<int>(seen.size()), cfg.max_evaluations);
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& [x, f] : seen) {
    EXPECT_TRUE(box.contains(x));
    best = std::max(best, f);
  }
  EXPECT_EQ(r.f_best, best);
  EXPECT_EQ(r.x_best.sum(), r.f_best);
}

TEST(Maximize, CandidatesStayInsideBox) {
  const SearchBox box({0.0, 10.0}, {1.0, 10.5});
  CmaConfig cfg;
  cfg.max_evaluations = 3000;
  cfg.initial_step = 2.0;
  long outside = 0;
  gpmgc::maximize(
      [&](const Vector& x) {
        if (!box.contains(x)) ++outside;
        return x[0] + x[1];  // optimum on a corner
      },
      box, cfg);
  EXPECT_EQ(outside, 0);
}

TEST(Maximize, BestValueNeverDecreases) {
  CmaConfig cfg;
  cfg.max_evaluations = 2000;
  std::vector<double> history;
  cfg.progress = [&](int, double best) { history.push_back(best); };
  gpmgc::maximize(neg_ackley, cube(2, 5.0), cfg);
  ASSERT_FALSE(history.empty());
  for (std::size_t i = 1; i < history.size(); ++i) EXPECT_GE(history[i], history[i - 1]);
}

TEST(Maximize, DeterministicPerSeed) {
  auto trace = [](std::uint64_t seed) {
    CmaConfig cfg;
    cfg.max_evaluations = 800;
    cfg.seed = seed;
    std::vector<double> xs;
    gpmgc::maximize(
        [&](const Vector& x) {
          xs.insert(xs.end(), x.data(), x.data() + x.size());
          return neg_ackley(x);
        },
        cube(3, 5.0), cfg);
    return xs;
  };
  EXPECT_EQ(trace(3), trace(3));
  EXPECT_NE(trace(3), trace(4));
}

TEST(Maximize, RestartsUseRemainingBudget) {
  CmaConfig cfg;
  cfg.max_evaluations = 6000;
  cfg.restarts = 4;
  const auto r = gpmgc::maximize([](const Vector& x) { return -std::abs(x[0]); }, cube(1, 1.0), cfg);
  EXPECT_LE(r.evaluations, 6000);
  EXPECT_GE(r.restarts_used, 1);
  EXPECT_LE(r.restarts_used, 4);
}

TEST(Maximize, InitialMeanIsUsed) {
  CmaConfig cfg;
  cfg.max_evaluations = gpmgc::default_population(2);
  cfg.initial_step = 1e-6;
  cfg.initial_mean = Vector::Constant(2, 0.25);
  const auto r = gpmgc::maximize([](const Vector& x) { return -x.squaredNorm(); }, cube(2, 1.0), cfg);
  EXPECT_NEAR(r.x_best[0], 0.25, 1e-4);
  EXPECT_NEAR(r.x_best[1], 0.25, 1e-4);
}

TEST(Maximize, RejectsInvalidConfiguration) {
  const SearchBox box = cube(2, 1.0);
  auto f = [](const Vector& x) { return x.sum(); };
  CmaConfig small;
  small.max_evaluations = 3;
  EXPECT_THROW(gpmgc::maximize(f, box, small), gpmgc::InvalidArgument);
  CmaConfig outside;
  outside.initial_mean = Vector::Constant(2, 3.0);
  EXPECT_THROW(gpmgc::maximize(f, box, outside), gpmgc::InvalidArgument);
  EXPECT_THROW(gpmgc::maximize(f, SearchBox({1.0}, {1.0}), CmaConfig{}), gpmgc::InvalidArgument);
}

TEST(Maximize, NonFiniteObjectiveAborts) {
  EXPECT_THROW(gpmgc::maximize([](const Vector&) { return std::nan(""); }, cube(2, 1.0), CmaConfig{}),
               gpmgc::NumericalError);
}

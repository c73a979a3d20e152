#include <cmath>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include "cxr/common/random.hpp"
#include "cxr/training/controllers.hpp"

using namespace cxr;

namespace {

constexpr double kThreshold = 1e-6;

// Turns an improve/stagnate pattern into monitor values. Stagnant epochs
// alternate between worse values and sub-threshold improvements.
std::vector<double> monitors_for(const std::vector<bool>& improves) {
  std::vector<double> out;
  double best = 10.0;
  for (std::size_t i = 0; i < improves.size(); ++i) {
    if (i == 0 || improves[i]) {
      best -= 0.01;
      out.push_back(best);
    } else {
      out.push_back(i % 2 ? best + 0.5 : best - kThreshold / 2);
    }
  }
  return out;
}

struct Expected {
  std::vector<double> lrs;  // after each epoch
  int stop_epoch = -1;      // epoch at which training halts, -1 if it never does
  int best_epoch = -1;
};

// Reference: reductions come from run lengths of stagnant epochs; a run of
// length r produces floor(r / (patience + 1)) reductions. Early stopping
// fires once a run reaches the early-stop patience.
Expected reference(const std::vector<bool>& improves, double lr0, int patience, double factor,
                   double min_lr, int es_patience) {
  Expected e;
  double lr = lr0;
  int run = 0;
  for (std::size_t t = 0; t < improves.size(); ++t) {
    const bool imp = t == 0 || improves[t];
    if (imp) {
      run = 0;
      if (e.stop_epoch < 0) e.best_epoch = static_cast<int>(t);
    } else {
      ++run;
      if (run % (patience + 1) == 0) lr = std::max(lr * factor, min_lr);
      if (e.stop_epoch < 0 && run == es_patience) e.stop_epoch = static_cast<int>(t);
    }
    e.lrs.push_back(lr);
  }
  // Once stopped the best epoch freezes; recompute it from the prefix.
  if (e.stop_epoch >= 0) {
    e.best_epoch = 0;
    for (int t = 0; t <= e.stop_epoch; ++t)
      if (t == 0 || improves[t]) e.best_epoch = t;
  }
  return e;
}

void check_stream(const std::vector<bool>& improves, double lr0 = 1e-3) {
  PlateauConfig cfg;
  const auto monitors = monitors_for(improves);
  const auto exp = reference(improves, lr0, cfg.patience, cfg.factor, cfg.min_lr, 10);

  PlateauSchedulerState ps;
  ps.current_lrs = {lr0, lr0 * 10};
  EarlyStopState es;
  int stop = -1;
  for (std::size_t t = 0; t < monitors.size(); ++t) {
    ps = plateau_step(ps, monitors[t], cfg);
    ASSERT_EQ(ps.current_lrs[0], exp.lrs[t]) << "epoch " << t;
    ASSERT_GE(ps.current_lrs[1], cfg.min_lr);
    const bool was = es.stopped;
    es = early_stop_step(es, monitors[t], static_cast<int>(t));
    if (es.stopped && !was) stop = static_cast<int>(t);
  }
  ASSERT_EQ(stop, exp.stop_epoch);
  ASSERT_EQ(es.best_epoch, exp.best_epoch);
  if (stop >= 0) ASSERT_EQ(stop - es.best_epoch, 10);
}

}  // namespace

TEST(Plateau, HalvesOnSixthStagnantEpoch) {
  PlateauSchedulerState s;
  s.current_lrs = {0.001};
  s = plateau_step(s, 1.0);
  for (int k = 1; k <= 5; ++k) {
    s = plateau_step(s, 1.0);
    EXPECT_EQ(s.current_lrs[0], 0.001) << "stagnant epoch " << k;
  }
  s = plateau_step(s, 1.0);
  EXPECT_EQ(s.current_lrs[0], 0.0005);
  EXPECT_EQ(s.reductions, 1);
  EXPECT_EQ(s.epochs_since_improve, 0);
}

TEST(Plateau, ImprovementResetsCounter) {
  PlateauSchedulerState s;
  s.current_lrs = {0.001};
  s = plateau_step(s, 1.0);
  for (int k = 0; k < 5; ++k) s = plateau_step(s, 1.0);
  s = plateau_step(s, 0.9);
  EXPECT_EQ(s.epochs_since_improve, 0);
  for (int k = 0; k < 5; ++k) s = plateau_step(s, 0.95);
  EXPECT_EQ(s.current_lrs[0], 0.001);
}

TEST(Plateau, ClampsAtMinLr) {
  PlateauSchedulerState s;
  s.current_lrs = {1.5e-7, 1e-3};
  s = plateau_step(s, 1.0);
  for (int k = 0; k < 6 * 20; ++k) s = plateau_step(s, 1.0);
  EXPECT_EQ(s.current_lrs[0], 1e-7);
  EXPECT_EQ(s.current_lrs[1], 1e-7);
  EXPECT_EQ(s.reductions, 20);
}

TEST(Plateau, SubThresholdChangeIsStagnation) {
  PlateauSchedulerState s;
  s.current_lrs = {0.001};
  s = plateau_step(s, 1.0);
  s = plateau_step(s, 1.0 - 5e-7);
  EXPECT_EQ(s.epochs_since_improve, 1);
  s = plateau_step(s, 1.0 - 2e-6);
  EXPECT_EQ(s.epochs_since_improve, 0);
}

TEST(Plateau, NanAndBadConfigRejected) {
  PlateauSchedulerState s;
  EXPECT_THROW(plateau_step(s, std::nan("")), InvalidArgument);
  PlateauConfig cfg;
  cfg.factor = 1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.patience = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(EarlyStop, StopsTenEpochsAfterBest) {
  EarlyStopState s;
  s = early_stop_step(s, 1.0, 0);
  s = early_stop_step(s, 0.5, 1);
  for (int e = 2; e <= 10; ++e) {
    s = early_stop_step(s, 0.7, e);
    EXPECT_FALSE(s.stopped) << e;
  }
  s = early_stop_step(s, 0.7, 11);
  EXPECT_TRUE(s.stopped);
  EXPECT_EQ(s.best_epoch, 1);
  // Terminal.
  const auto after = early_stop_step(s, 0.1, 12);
  EXPECT_TRUE(after.stopped);
  EXPECT_EQ(after.best_epoch, 1);
  EXPECT_EQ(after.best_monitor, 0.5);
}

TEST(EarlyStop, MonotoneImprovementNeverStops) {
  EarlyStopState s;
  for (int e = 0; e < 60; ++e) s = early_stop_step(s, 1.0 - e * 0.01, e);
  EXPECT_FALSE(s.stopped);
  EXPECT_EQ(s.best_epoch, 59);
}

TEST(EarlyStop, NanRejected) {
  EXPECT_THROW(early_stop_step({}, std::nan(""), 0), InvalidArgument);
  EXPECT_THROW(early_stop_step({}, 1.0, 0, 0), ConfigError);
}

// Every improve/stagnate pattern up to length 16, checked against the
// run-length reference.
TEST(ControllersProperty, ExhaustiveShortStreams) {
  for (int len = 1; len <= 16; ++len) {
    for (std::uint32_t bits = 0; bits < (1u << len); ++bits) {
      std::vector<bool> improves(len);
      for (int i = 0; i < len; ++i) improves[i] = (bits >> i) & 1u;
      check_stream(improves);
      if (::testing::Test::HasFatalFailure()) FAIL() << "len " << len << " bits " << bits;
    }
  }
}

// Streams up to length 60 whose improvements sit at any pair of positions:
// covers every last-improvement epoch and every gap length.
TEST(ControllersProperty, ExhaustiveTwoImprovementStreams) {
  for (int len = 1; len <= 60; ++len) {
    for (int a = 0; a < len; ++a) {
      for (int b = a; b < len; ++b) {
        std::vector<bool> improves(len, false);
        improves[a] = improves[b] = true;
        check_stream(improves);
        if (::testing::Test::HasFatalFailure()) FAIL() << len << " " << a << " " << b;
      }
    }
  }
}

TEST(ControllersProperty, RandomLongStreams) {
  Rng rng(21);
  for (int trial = 0; trial < 20000; ++trial) {
    const int len = 1 + static_cast<int>(rng.below(60));
    const double p = rng.uniform01() * 0.4;
    std::vector<bool> improves(len);
    for (auto&& b : improves) b = rng.bernoulli(p);
    check_stream(improves, trial % 2 ? 1e-3 : 1e-4);
    if (::testing::Test::HasFatalFailure()) FAIL() << "trial " << trial;
  }
}

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "cxr/common/error.hpp"

namespace cxr {

struct PlateauConfig {
  int patience = 5;
  double factor = 0.5;
  double min_lr = 1e-7;
  double threshold = 1e-6;  ///< absolute improvement required

  void validate() const {
    if (patience <= 0) throw ConfigError("plateau patience must be > 0");
    if (!(factor > 0.0 && factor < 1.0)) throw ConfigError("plateau factor must be in (0, 1)");
    if (!(min_lr >= 0.0)) throw ConfigError("plateau min_lr must be >= 0");
    if (!(threshold >= 0.0)) throw ConfigError("plateau threshold must be >= 0");
  }
};

struct PlateauSchedulerState {
  double best_monitor = std::numeric_limits<double>::infinity();
  int epochs_since_improve = 0;
  int reductions = 0;
  std::vector<double> current_lrs;
};

/// One epoch of reduce-on-plateau. A value counts as an improvement when it
/// is below best - threshold. Once the stagnation counter exceeds `patience`
/// every rate becomes max(lr * factor, min_lr) and the counter resets, so
/// with patience 5 the cut lands on the 6th consecutive stagnant epoch.
inline PlateauSchedulerState plateau_step(PlateauSchedulerState state, double monitor,
                                          const PlateauConfig& cfg = {}) {
  if (std::isnan(monitor)) throw InvalidArgument("plateau monitor is NaN");
  if (monitor < state.best_monitor - cfg.threshold) {
    state.best_monitor = monitor;
    state.epochs_since_improve = 0;
    return state;
  }
  ++state.epochs_since_improve;
  if (state.epochs_since_improve > cfg.patience) {
    for (double& lr : state.current_lrs) lr = std::max(lr * cfg.factor, cfg.min_lr);
    state.epochs_since_improve = 0;
    ++state.reductions;
  }
  return state;
}

struct EarlyStopState {
  double best_monitor = std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  int epochs_since_improve = 0;
  bool stopped = false;
};

/// Terminal after `patience` consecutive epochs without an improvement of
/// more than `threshold`. Steps after stopping leave the state unchanged.
inline EarlyStopState early_stop_step(EarlyStopState state, double monitor, int epoch,
                                      int patience = 10, double threshold = 1e-6) {
  if (std::isnan(monitor)) throw InvalidArgument("early-stop monitor is NaN");
  if (patience <= 0) throw ConfigError("early-stop patience must be > 0");
  if (state.stopped) return state;
  if (monitor < state.best_monitor - threshold) {
    state.best_monitor = monitor;
    state.best_epoch = epoch;
    state.epochs_since_improve = 0;
    return state;
  }
  ++state.epochs_since_improve;
  if (state.epochs_since_improve >= patience) state.stopped = true;
  return state;
}

}  // namespace cxr

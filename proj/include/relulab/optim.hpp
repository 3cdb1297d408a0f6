#pragma once

#include <stdexcept>
#include <vector>

#include "relulab/dataset.hpp"
#include "relulab/loss.hpp"
#include "relulab/model.hpp"
#include "relulab/numerics.hpp"

namespace relulab {

/// Mini-batch SGD state with classical momentum. Velocity shapes match the
/// parameters being optimized; step > 0 and momentum in [0, 1).
/// step0/momentum0 hold the initial values; the epoch schedule is a pure
/// function of them and the epoch counter.
struct OptState {
  double step = 0.1;
  double momentum = 0.5;
  double step0 = 0.1;
  double momentum0 = 0.5;
  Matrix velocity_u;
  Matrix velocity_v;
  Index epoch = 0;
  Index batch_size = 100;
};

/// Zero-velocity state matching p's shapes.
OptState make_opt_state(const NetParams& p, double step, double momentum,
                        Index batch_size);

/// One classical-momentum update, in place:
///   velocity <- momentum * velocity - step * gradient
///   params   <- params + velocity
/// Throws std::invalid_argument on shape mismatch.
void sgd_step(NetParams& p, const Gradients& g, OptState& st);

/// Per-epoch schedule: step = step0 * 0.99^t, momentum = min(0.9,
/// momentum0 + 0.02 t), epoch t += 1. Computed from the closed forms, not by
/// repeated multiplication, so after t epochs the values equal them exactly;
/// 0.02 t is evaluated as t/50 so the momentum cap is hit exactly at t = 20.
void end_epoch(OptState& st);

/// Stop when training zero-one error is 0 and the mean surrogate loss is
/// below target_loss, or after max_epochs, whichever comes first.
struct StoppingRule {
  Index max_epochs = 1000;
  double target_loss = 1e-5;
};

struct SgdConfig {
  double step = 0.1;
  double momentum = 0.5;
  Index batch_size = 100;
};

/// State of one training run after an epoch. step/momentum are the values
/// that were in effect during the epoch, before the schedule update.
/// validation_error is NaN when no validation set was supplied.
struct EpochStats {
  Index epoch = 0;
  double mean_loss = 0.0;
  double objective = 0.0;
  double train_error = 0.0;
  double validation_error = 0.0;
  double step = 0.0;
  double momentum = 0.0;
};

struct TrainResult {
  NetParams params;       // after the last epoch
  NetParams best_params;  // snapshot with the lowest validation error
  Index best_epoch = 0;   // 1-based; earliest epoch attaining the best error
  std::vector<EpochStats> history;
  bool reached_target = false;
};

/// Thrown when a loss or parameter value stops being finite mid-run.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, Index epoch)
      : std::runtime_error(what), epoch_(epoch) {}
  Index epoch() const { return epoch_; }

 private:
  Index epoch_ = 0;
};

/// Mean truncated soft-max loss and zero-one error over a dataset.
struct EvalResult {
  double mean_loss = 0.0;
  double error = 0.0;
};
EvalResult evaluate(const NetParams& p, const LabeledDataset& data);

/// Runs mini-batch SGD with momentum from the given initial parameters.
/// Each epoch visits a fresh seeded shuffle of the training set; the last
/// partial batch is used. The per-step gradient is the mean loss gradient
/// over the batch plus the full penalty gradient. validation may be null;
/// then best_params is the final snapshot. Consumes rng deterministically,
/// so a fixed seed reproduces the history bit for bit.
TrainResult train(const NetParams& init, const LabeledDataset& train_data,
                  const LabeledDataset* validation, const SgdConfig& opt,
                  const RegConfig& reg, const StoppingRule& stop, Rng& rng);

}  // namespace relulab

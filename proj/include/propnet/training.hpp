#pragma once

#include "propnet/dataset.hpp"
#include "propnet/models.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace propnet {

struct TrainConfig {
  int batch_size = 32;
  int epochs = 200;
  double lr = 1e-3;
  int patience = 20;
  double decay = 0.8;
  double clip_norm = 5.0;
  double train_fraction = 0.85;
  std::uint64_t seed = 0;
  int max_batches_per_epoch = 0;   // 0: full pass over the training split
  int max_validation_samples = 0;  // 0: every validation sample
  std::string log_csv;             // per-epoch CSV when nonempty
  std::string checkpoint;          // best-validation checkpoint when nonempty
  bool verbose = false;

  void validate() const;
};

/// Multiplies the learning rate by `decay` whenever the validation loss has
/// failed to improve for more than `patience` consecutive epochs.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr, int patience, double decay);
  /// Records one epoch's validation loss; returns the learning rate to use
  /// next.
  double observe(double validation_loss);
  double lr() const { return lr_; }
  int stagnant_epochs() const { return bad_; }

 private:
  double lr_;
  int patience_;
  double decay_;
  double best_;
  int bad_ = 0;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> log;  // entry 0 is the untrained model
  double best_val = 0.0;
  int best_epoch = 0;
  Split split;
};

/// Normalisation statistics over the given rollouts: object and relation
/// feature columns, next-step velocities of non-pinned objects and (for
/// box data) the control slots.
NormStats compute_norm_stats(const std::vector<Rollout>& data, std::span<const int> rollouts);

/// Splits `data` by rollout, fits normalisation statistics on the training
/// part and minimises single-step normalised velocity MSE (latent loss for
/// the latent model) with Adam, global-norm clipping and the plateau
/// schedule. The model ends up holding the best-validation parameters.
/// Throws NumericError with the epoch index if the loss diverges.
TrainResult train(Model& model, const std::vector<Rollout>& data, const TrainConfig& config);

/// Loss of `model` on the given rollouts, as minimised by train().
double dataset_loss(const Model& model, const std::vector<Rollout>& data, std::span<const int> rollouts,
                    int max_samples = 0);

struct EvalReport {
  std::vector<int> horizons;
  std::vector<double> mse;  // mean over rollouts of mean squared position error
  double seconds_per_step = 0.0;
  int rollouts = 0;
};

/// Rolls `model` from each rollout's first graph with the recorded forces
/// replayed and reports the position MSE over non-pinned objects at each
/// horizon.
EvalReport evaluate(const DynamicsModel& model, const std::vector<Rollout>& data, std::span<const int> rollouts,
                    const std::vector<int>& horizons, double dt = kDefaultDt);

}  // namespace propnet

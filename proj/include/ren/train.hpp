#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "ren/data.hpp"
#include "ren/model.hpp"
#include "ren/predictor.hpp"
#include "ren/preprocess.hpp"

namespace ren {

struct TrainConfig {
  int batch_size = 128;
  double lr0 = 0.005;
  long lr_drop_every = 50000;
  double lr_factor = 10.0;
  long max_iters = 200000;
  double weight_decay = 0.0005;
  double momentum = 0.9;
  std::uint64_t seed = 1;
  bool augment = true;
  AugmentRanges augment_ranges;
  long snapshot_every = 10000;
  int keep_snapshots = 3;
  /// Where snapshots (and a diagnostic checkpoint on divergence) go. Empty
  /// disables them.
  std::filesystem::path snapshot_dir;

  void validate() const;
};

/// lr0 / lr_factor^floor(iter / lr_drop_every).
double lr_schedule(long iter, const TrainConfig& cfg);

template <typename T>
struct TrainState {
  long iteration = 0;
  /// One momentum buffer per parameter, in ParameterSet order.
  std::vector<Tensor<T>> velocity;
  double running_loss = 0.0;

  explicit TrainState(const ParameterSet<T>& params);
};

/// v = momentum * v + lr * (grad + weight_decay * p); p -= v.
/// Throws NumericError if an update is not finite.
template <typename T>
void sgd_step(ParameterSet<T>& params, TrainState<T>& state, double lr, const TrainConfig& cfg);

struct LossRecord {
  long iter;
  double lr;
  double loss;
};

struct TrainResult {
  std::vector<LossRecord> log;
  long iterations = 0;
  bool interrupted = false;
  std::vector<std::filesystem::path> snapshots;
};

struct TrainHooks {
  /// Polled once per iteration; when set, a final snapshot is written and
  /// training returns early.
  const std::atomic<bool>* stop = nullptr;
  std::function<void(const LossRecord&)> on_iteration;
};

/// Mini-batch SGD over an epoch-wise shuffled stream of the dataset.
/// Augmentation of sample `s` in epoch `e` is seeded by (seed, e, s), so
/// the run is a function of (seed, config, data) only.
TrainResult train(Model<float>& model, const SampleCache& data, const TrainConfig& cfg, const TrainHooks& hooks = {});

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRecord>& log);

/// Seed of bagging member k.
std::uint64_t member_seed(std::uint64_t seed, int k);

struct BaggingResult {
  EnsemblePredictor ensemble;
  std::vector<TrainResult> runs;
};

/// K independently trained models sharing `spec`. Members get distinct
/// derived seeds for init, order and augmentation unless `identical_seeds`.
BaggingResult train_bagging(const ModelSpec& spec, const SampleCache& data, const TrainConfig& cfg, int k = 4,
                            bool identical_seeds = false, const TrainHooks& hooks = {});

extern template struct TrainState<float>;
extern template struct TrainState<double>;

}  // namespace ren

#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <utility>
#include <vector>

#include "poolnet/dataset.hpp"
#include "poolnet/model.hpp"
#include "poolnet/optim.hpp"
#include "poolnet/rng.hpp"

namespace poolnet {

struct TrainConfig {
  double lr = 5e-5;
  double weight_decay = 5e-4;
  int epochs = 24;
  int lr_drop_epoch = 15;
  double lr_drop_factor = 10.0;
  int batch_size = 1;
  std::uint64_t seed = 0;
  bool joint_edge = false;
  bool augment = true;

  /// Throws ConfigError.
  void validate() const;
};

/// Raised when a loss becomes non-finite.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class StepKind { saliency, edge };

struct ScheduledStep {
  StepKind kind;
  std::size_t index;  // first sample of the batch in its dataset
};

/// One epoch's step order. Joint mode alternates a saliency batch with an
/// edge batch, cycling the edge set when it is shorter.
std::vector<ScheduledStep> alternation_schedule(std::size_t saliency_batches,
                                                std::size_t edge_batches, bool joint);

struct StepRecord {
  int epoch = 0;
  std::int64_t step = 0;
  StepKind kind = StepKind::saliency;
  double loss = 0.0;
  double lr = 0.0;
};

struct EpochSummary {
  int epoch = 0;
  double saliency_loss = 0.0;  // mean over the epoch's saliency steps
  double edge_loss = 0.0;
  int saliency_steps = 0;
  int edge_steps = 0;
};

/// With probability 0.5 mirrors image and target together along width.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> augment_hflip(const Tensor<T>& image, const Tensor<T>& target,
                                              Rng& rng);

/// Writes the CSV header "epoch,step,loss_type,loss_value,lr".
void write_log_header(std::ostream& out);
void write_log_row(std::ostream& out, const StepRecord& record);

template <typename T>
class Trainer {
 public:
  using StepCallback = std::function<void(const StepRecord&)>;

  /// Validates the config against the model (joint mode needs the edge branch).
  Trainer(PoolNet<T>& model, TrainConfig config);

  /// Batches consecutive samples; all samples in a batch must share a size.
  EpochSummary train_epoch(const std::vector<Sample<T>>& saliency,
                           const std::vector<Sample<T>>* edge, int epoch,
                           const StepCallback& on_step = {});

  double saliency_step(const std::vector<const Sample<T>*>& batch, double lr);
  double edge_step(const std::vector<const Sample<T>*>& batch, double lr);

  std::int64_t global_step() const { return step_; }
  int next_epoch() const { return next_epoch_; }
  const Adam<T>& optimizer() const { return adam_; }
  const TrainConfig& config() const { return config_; }

  /// Model parameters, optimizer moments, step/epoch counters and the
  /// augmentation stream position.
  std::vector<CheckpointRecord> checkpoint_records() const;
  void restore(const std::vector<CheckpointRecord>& records);

 private:
  std::pair<Tensor<T>, Tensor<T>> make_batch(const std::vector<const Sample<T>*>& batch);
  double apply_step(const Tensor<T>& loss, double lr);

  PoolNet<T>& model_;
  TrainConfig config_;
  Adam<T> adam_;
  std::int64_t step_ = 0;
  int next_epoch_ = 0;
  std::uint64_t augment_draws_ = 0;
};

extern template class Trainer<float>;
extern template class Trainer<double>;

}  // namespace poolnet

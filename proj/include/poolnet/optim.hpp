#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "poolnet/checkpoint.hpp"

namespace poolnet {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Coupled L2: added to the gradient before the moment update.
  double weight_decay = 0.0;
};

/// Adam with per-parameter bias correction. Parameters without a gradient
/// must not be passed to step(); select_active() picks the ones that have
/// one, matching the usual "skip parameters with no grad" behaviour.
template <typename T>
class Adam {
 public:
  struct Slot {
    std::vector<T> m;
    std::vector<T> v;
    std::int64_t t = 0;
  };

  explicit Adam(AdamOptions options = {}) : options_(options) {}

  /// Throws std::invalid_argument naming the first parameter lacking a grad.
  void step(std::span<Parameter<T>* const> params, double lr);

  std::int64_t steps() const { return steps_; }
  const AdamOptions& options() const { return options_; }
  const Slot* slot(const std::string& name) const;

  /// Moments as "__adam.m.<name>" / "__adam.v.<name>" / "__adam.t.<name>"
  /// records plus "__adam.steps".
  std::vector<CheckpointRecord> state_records() const;
  void load_state(const std::vector<CheckpointRecord>& records);

 private:
  AdamOptions options_;
  std::int64_t steps_ = 0;
  std::unordered_map<std::string, Slot> slots_;
  std::vector<std::string> order_;
};

template <typename T>
std::vector<Parameter<T>*> select_active(std::vector<Parameter<T>>& params);

/// Step learning rate: base until drop_epoch, base / drop_factor afterwards.
double lr_at(int epoch, double base_lr, int drop_epoch, double drop_factor);

}  // namespace poolnet

#include "poolnet/trainer.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>

#include "poolnet/losses.hpp"
#include "poolnet/ops.hpp"

namespace poolnet {

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (lr_drop_epoch >= epochs) throw ConfigError("lr_drop_epoch must be < epochs");
  if (lr_drop_epoch < 0) throw ConfigError("lr_drop_epoch must be >= 0");
  if (!(lr_drop_factor > 0.0)) throw ConfigError("lr_drop_factor must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
}

std::vector<ScheduledStep> alternation_schedule(std::size_t saliency_batches,
                                                std::size_t edge_batches, bool joint) {
  std::vector<ScheduledStep> out;
  if (joint && edge_batches == 0) throw ConfigError("joint training needs edge samples");
  for (std::size_t i = 0; i < saliency_batches; ++i) {
    out.push_back({StepKind::saliency, i});
    if (joint) out.push_back({StepKind::edge, i % edge_batches});
  }
  return out;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> augment_hflip(const Tensor<T>& image, const Tensor<T>& target,
                                              Rng& rng) {
  if (rng.bernoulli(0.5)) return {hflip(image), hflip(target)};
  return {image, target};
}

void write_log_header(std::ostream& out) { out << "epoch,step,loss_type,loss_value,lr\n"; }

void write_log_row(std::ostream& out, const StepRecord& r) {
  out << r.epoch << "," << r.step << "," << (r.kind == StepKind::saliency ? "sal" : "edge") << ","
      << std::setprecision(9) << r.loss << "," << r.lr << "\n";
}

template <typename T>
Trainer<T>::Trainer(PoolNet<T>& model, TrainConfig config)
    : model_(model), config_(config), adam_(AdamOptions{0.9, 0.999, 1e-8, config.weight_decay}) {
  config_.validate();
  if (config_.joint_edge && !model_.config().enable_edge) {
    throw ConfigError("joint edge training requires the edge branch (enable_edge)");
  }
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> Trainer<T>::make_batch(const std::vector<const Sample<T>*>& batch) {
  std::vector<Tensor<T>> images;
  std::vector<Tensor<T>> targets;
  for (const Sample<T>* s : batch) {
    const Sample<T> padded = pad_to_multiple(*s, 16);
    Tensor<T> image = padded.image;
    Tensor<T> target = padded.target;
    if (config_.augment) {
      Rng rng(derive_seed(config_.seed ^ 0x61756781ULL, augment_draws_++));
      std::tie(image, target) = augment_hflip(image, target, rng);
    }
    images.push_back(image);
    targets.push_back(target);
  }
  if (images.size() == 1) return {images[0], targets[0]};

  auto stack = [](const std::vector<Tensor<T>>& parts) {
    const Shape& s = parts[0].shape();
    std::vector<T> data;
    for (const auto& p : parts) {
      if (p.shape() != s) {
        throw ShapeError("batch samples differ in size: " + s.str() + " vs " + p.shape().str());
      }
      data.insert(data.end(), p.data().begin(), p.data().end());
    }
    return Tensor<T>::from(Shape{static_cast<int>(parts.size()), s.c, s.h, s.w}, std::move(data));
  };
  return {stack(images), stack(targets)};
}

template <typename T>
double Trainer<T>::apply_step(const Tensor<T>& loss, double lr) {
  const double value = static_cast<double>(loss.item());
  if (!std::isfinite(value)) {
    throw NumericError("non-finite loss at step " + std::to_string(step_));
  }
  model_.zero_grad();
  Tensor<T> l = loss;
  l.backward();
  auto active = select_active(model_.parameters());
  adam_.step(active, lr);
  ++step_;
  return value;
}

template <typename T>
double Trainer<T>::saliency_step(const std::vector<const Sample<T>*>& batch, double lr) {
  auto [image, target] = make_batch(batch);
  ModelOutput<T> out = model_.forward(image);
  return apply_step(bce_loss(out.saliency_logits, target), lr);
}

template <typename T>
double Trainer<T>::edge_step(const std::vector<const Sample<T>*>& batch, double lr) {
  auto [image, target] = make_batch(batch);
  ModelOutput<T> out = model_.forward(image);
  if (out.edge_logits.empty()) throw ConfigError("edge step on a model without edge outputs");
  Tensor<T> loss = balanced_bce_loss(out.edge_logits[0], target);
  for (std::size_t i = 1; i < out.edge_logits.size(); ++i) {
    loss = add(loss, balanced_bce_loss(out.edge_logits[i], target));
  }
  return apply_step(loss, lr);
}

template <typename T>
EpochSummary Trainer<T>::train_epoch(const std::vector<Sample<T>>& saliency,
                                     const std::vector<Sample<T>>* edge, int epoch,
                                     const StepCallback& on_step) {
  if (saliency.empty()) throw ConfigError("no saliency samples");
  if (config_.joint_edge && (edge == nullptr || edge->empty())) {
    throw ConfigError("joint edge training needs a non-empty edge dataset");
  }
  const auto bs = static_cast<std::size_t>(config_.batch_size);
  auto batches = [bs](const std::vector<Sample<T>>& data) {
    std::vector<std::vector<const Sample<T>*>> out;
    for (std::size_t i = 0; i < data.size(); i += bs) {
      std::vector<const Sample<T>*> b;
      for (std::size_t j = i; j < std::min(i + bs, data.size()); ++j) b.push_back(&data[j]);
      out.push_back(std::move(b));
    }
    return out;
  };
  const auto sal_batches = batches(saliency);
  const auto edge_batches =
      config_.joint_edge ? batches(*edge) : std::vector<std::vector<const Sample<T>*>>{};
  const double lr = lr_at(epoch, config_.lr, config_.lr_drop_epoch, config_.lr_drop_factor);

  EpochSummary summary;
  summary.epoch = epoch;
  for (const ScheduledStep& s :
       alternation_schedule(sal_batches.size(), edge_batches.size(), config_.joint_edge)) {
    StepRecord rec;
    rec.epoch = epoch;
    rec.kind = s.kind;
    rec.lr = lr;
    if (s.kind == StepKind::saliency) {
      rec.loss = saliency_step(sal_batches[s.index], lr);
      summary.saliency_loss += rec.loss;
      ++summary.saliency_steps;
    } else {
      rec.loss = edge_step(edge_batches[s.index], lr);
      summary.edge_loss += rec.loss;
      ++summary.edge_steps;
    }
    rec.step = step_;
    if (on_step) on_step(rec);
  }
  if (summary.saliency_steps > 0) summary.saliency_loss /= summary.saliency_steps;
  if (summary.edge_steps > 0) summary.edge_loss /= summary.edge_steps;
  next_epoch_ = epoch + 1;
  return summary;
}

template <typename T>
std::vector<CheckpointRecord> Trainer<T>::checkpoint_records() const {
  auto records = to_records(model_.parameters());
  records.push_back({"__train.step", {1}, {static_cast<float>(step_)}});
  records.push_back({"__train.next_epoch", {1}, {static_cast<float>(next_epoch_)}});
  records.push_back({"__train.augment_draws", {1}, {static_cast<float>(augment_draws_)}});
  for (auto& r : adam_.state_records()) records.push_back(std::move(r));
  return records;
}

template <typename T>
void Trainer<T>::restore(const std::vector<CheckpointRecord>& records) {
  load_parameters(model_.parameters(), records);
  for (const auto& r : records) {
    if (r.name == "__train.step") step_ = static_cast<std::int64_t>(r.values.at(0));
    if (r.name == "__train.next_epoch") next_epoch_ = static_cast<int>(r.values.at(0));
    if (r.name == "__train.augment_draws") {
      augment_draws_ = static_cast<std::uint64_t>(r.values.at(0));
    }
  }
  adam_.load_state(records);
}

template std::pair<Tensor<float>, Tensor<float>> augment_hflip(const Tensor<float>&,
                                                               const Tensor<float>&, Rng&);
template std::pair<Tensor<double>, Tensor<double>> augment_hflip(const Tensor<double>&,
                                                                 const Tensor<double>&, Rng&);
template class Trainer<float>;
template class Trainer<double>;

}  // namespace poolnet

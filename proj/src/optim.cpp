#include "poolnet/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace poolnet {

template <typename T>
void Adam<T>::step(std::span<Parameter<T>* const> params, double lr) {
  for (Parameter<T>* p : params) {
    if (!p->tensor.has_grad()) {
      throw std::invalid_argument("adam: parameter '" + p->name + "' has no gradient");
    }
  }
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  for (Parameter<T>* p : params) {
    if (!p->trainable) continue;
    auto [it, inserted] = slots_.try_emplace(p->name);
    Slot& s = it->second;
    auto data = p->tensor.data();
    auto grad = p->tensor.grad();
    if (inserted) {
      s.m.assign(data.size(), T(0));
      s.v.assign(data.size(), T(0));
      order_.push_back(p->name);
    }
    ++s.t;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(s.t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(s.t));
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double g = static_cast<double>(grad[i]) + options_.weight_decay * data[i];
      const double m = b1 * s.m[i] + (1.0 - b1) * g;
      const double v = b2 * s.v[i] + (1.0 - b2) * g * g;
      s.m[i] = static_cast<T>(m);
      s.v[i] = static_cast<T>(v);
      const double update = lr * (m / c1) / (std::sqrt(v / c2) + options_.eps);
      data[i] = static_cast<T>(data[i] - update);
    }
  }
  ++steps_;
}

template <typename T>
const typename Adam<T>::Slot* Adam<T>::slot(const std::string& name) const {
  auto it = slots_.find(name);
  return it == slots_.end() ? nullptr : &it->second;
}

template <typename T>
std::vector<CheckpointRecord> Adam<T>::state_records() const {
  std::vector<CheckpointRecord> out;
  out.push_back({"__adam.steps", {1}, {static_cast<float>(steps_)}});
  for (const auto& name : order_) {
    const Slot& s = slots_.at(name);
    const auto n = static_cast<std::uint32_t>(s.m.size());
    CheckpointRecord m{"__adam.m." + name, {n}, {}};
    CheckpointRecord v{"__adam.v." + name, {n}, {}};
    for (std::size_t i = 0; i < s.m.size(); ++i) {
      m.values.push_back(static_cast<float>(s.m[i]));
      v.values.push_back(static_cast<float>(s.v[i]));
    }
    out.push_back(std::move(m));
    out.push_back(std::move(v));
    out.push_back({"__adam.t." + name, {1}, {static_cast<float>(s.t)}});
  }
  return out;
}

template <typename T>
void Adam<T>::load_state(const std::vector<CheckpointRecord>& records) {
  slots_.clear();
  order_.clear();
  steps_ = 0;
  const std::string m_prefix = "__adam.m.";
  for (const auto& r : records) {
    if (r.name == "__adam.steps") steps_ = static_cast<std::int64_t>(r.values.at(0));
    if (r.name.rfind(m_prefix, 0) != 0) continue;
    const std::string name = r.name.substr(m_prefix.size());
    Slot s;
    s.m.assign(r.values.begin(), r.values.end());
    order_.push_back(name);
    slots_[name] = std::move(s);
  }
  for (const auto& r : records) {
    for (const char* kind : {"__adam.v.", "__adam.t."}) {
      const std::string prefix = kind;
      if (r.name.rfind(prefix, 0) != 0) continue;
      auto it = slots_.find(r.name.substr(prefix.size()));
      if (it == slots_.end()) throw CheckpointError("adam record without moments: " + r.name);
      if (prefix == "__adam.v.") {
        it->second.v.assign(r.values.begin(), r.values.end());
      } else {
        it->second.t = static_cast<std::int64_t>(r.values.at(0));
      }
    }
  }
  for (const auto& [name, s] : slots_) {
    if (s.v.size() != s.m.size()) throw CheckpointError("adam moments mismatch for " + name);
  }
}

template <typename T>
std::vector<Parameter<T>*> select_active(std::vector<Parameter<T>>& params) {
  std::vector<Parameter<T>*> out;
  for (auto& p : params) {
    if (p.trainable && p.tensor.has_grad()) out.push_back(&p);
  }
  return out;
}

double lr_at(int epoch, double base_lr, int drop_epoch, double drop_factor) {
  if (epoch < 0) throw std::invalid_argument("lr_at: negative epoch");
  return epoch < drop_epoch ? base_lr : base_lr / drop_factor;
}

template class Adam<float>;
template class Adam<double>;
template std::vector<Parameter<float>*> select_active(std::vector<Parameter<float>>&);
template std::vector<Parameter<double>*> select_active(std::vector<Parameter<double>>&);

}  // namespace poolnet

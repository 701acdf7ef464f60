#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "poolnet/ops.hpp"
#include "poolnet/rng.hpp"
#include "poolnet/tensor.hpp"

namespace poolnet::testing {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  // Probes whose one-sided slopes disagree, i.e. the +-step window straddles
  // a relu or max-pool kink. Only counted when kink detection is on.
  std::size_t kinks = 0;
};

inline constexpr double kFdStep = 1e-5;
// Gradients smaller than this are compared on an absolute scale.
inline constexpr double kRelFloor = 1e-3;

inline Tensor<double> random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0,
                                    double hi = 1.0) {
  Rng rng(seed);
  std::vector<double> v(shape.numel());
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor<double>::from(shape, std::move(v), true);
}

/// Checks d/dx of sum(f(inputs) * R) for a fixed random R against central
/// differences. At most max_per_input coordinates of each input are probed.
/// With detect_kinks, probes straddling a non-differentiable point are
/// counted in kinks instead of compared.
inline GradCheckResult gradcheck(const std::function<Tensor<double>(std::vector<Tensor<double>>&)>& f,
                                 std::vector<Tensor<double>> inputs, std::uint64_t seed = 7,
                                 std::size_t max_per_input = 128, bool detect_kinks = false) {
  Tensor<double> probe;
  {
    NoGradGuard ng;
    probe = f(inputs);
  }
  const Tensor<double> r = random_tensor(probe.shape(), seed ^ 0x5eed).detach();
  auto loss_of = [&](std::vector<Tensor<double>>& in) { return sum(mul(f(in), r)); };

  for (auto& t : inputs) t.zero_grad();
  loss_of(inputs).backward();

  GradCheckResult res;
  Rng pick(seed);
  for (auto& t : inputs) {
    if (!t.requires_grad()) continue;
    std::vector<double> analytic(t.numel(), 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
    std::vector<std::size_t> coords;
    if (t.numel() <= max_per_input) {
      for (std::size_t i = 0; i < t.numel(); ++i) coords.push_back(i);
    } else {
      for (std::size_t i = 0; i < max_per_input; ++i) {
        coords.push_back(pick.next() % t.numel());
      }
    }
    NoGradGuard ng;
    const double base = loss_of(inputs).item();
    for (std::size_t i : coords) {
      double& x = t.data()[i];
      const double saved = x;
      x = saved + kFdStep;
      const double up = loss_of(inputs).item();
      x = saved - kFdStep;
      const double down = loss_of(inputs).item();
      x = saved;
      const double numeric = (up - down) / (2 * kFdStep);
      if (detect_kinks) {
        // Exact for losses that are piecewise linear in each coordinate.
        const double fwd = (up - base) / kFdStep;
        const double bwd = (base - down) / kFdStep;
        if (std::abs(fwd - bwd) > 1e-3 * std::max({std::abs(fwd), std::abs(bwd), kRelFloor})) {
          ++res.kinks;
          continue;
        }
      }
      const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), kRelFloor});
      res.max_rel_error = std::max(res.max_rel_error, std::abs(numeric - analytic[i]) / denom);
      ++res.coordinates;
    }
  }
  return res;
}

}  // namespace poolnet::testing

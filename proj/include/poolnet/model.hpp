#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "poolnet/checkpoint.hpp"
#include "poolnet/tensor.hpp"

namespace poolnet {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Architecture description. Pyramid levels are indexed 0..3 for C2..C5.
struct ModelConfig {
  std::vector<int> backbone_widths{16, 32, 64, 128, 128};
  // Empty means backbone_widths[1..4].
  std::vector<int> pyramid_channels;
  bool enable_ppm = true;
  bool enable_ggf = true;
  bool enable_fam = true;
  bool enable_edge = false;
  std::vector<int> fam_rates{2, 4, 8};
  std::vector<int> ppm_sizes{3, 5};
  // Residual widths of the edge branch, fine to coarse. Empty means
  // backbone_widths[1..3].
  std::vector<int> edge_widths;

  static ModelConfig desk();
  static ModelConfig paper_scale();
  /// Ablation row 1..6: (ppm, ggf, fam) = FFF, TFF, FTF, TTF, FFT, TTT.
  static ModelConfig ablation_row(int row, ModelConfig base = desk());

  std::array<int, 4> pyramid() const;
  std::array<int, 3> edge_residual_widths() const;
  /// Throws ConfigError on any invariant violation.
  void validate() const;
};

inline constexpr int kEdgeSideChannels = 16;
inline constexpr int kEdgeFuseChannels = 3 * kEdgeSideChannels;
inline constexpr std::array<int, 4> kPyramidRates{2, 4, 8, 16};

template <typename T>
struct PyramidFeatures {
  std::array<Tensor<T>, 4> levels;  // C2..C5
  static constexpr std::array<int, 4> rates = kPyramidRates;
};

template <typename T>
struct ModelOutput {
  Tensor<T> saliency_logits;
  std::vector<Tensor<T>> edge_logits;  // empty unless the edge branch is on
};

/// Structural facts recorded during one forward pass.
struct ForwardTrace {
  std::vector<std::array<int, 2>> ppm_branch_sizes;  // identity first
  std::vector<int> fam_branch_counts;               // per FAM invocation, coarse to fine
  std::vector<std::array<int, 2>> ggf_factors;      // (level, upsample factor)
  int edge_concat_channels = 0;
  int saliency_head_in_channels = 0;
};

struct ForwardOptions {
  // Drops every global-guidance addend; used to check that GGF wiring is live.
  bool skip_global_guidance = false;
};

/// The saliency network. Parameters are created in a fixed order and each
/// is initialised from a stream derived from (seed, parameter name), so a
/// parameter's initial value never depends on which other modules exist.
template <typename T>
class PoolNet {
 public:
  PoolNet(ModelConfig config, std::uint64_t seed);

  PoolNet(const PoolNet&) = delete;
  PoolNet& operator=(const PoolNet&) = delete;
  PoolNet(PoolNet&&) = default;
  PoolNet& operator=(PoolNet&&) = default;

  const ModelConfig& config() const { return config_; }
  std::vector<Parameter<T>>& parameters() { return params_; }
  const std::vector<Parameter<T>>& parameters() const { return params_; }
  std::size_t parameter_count() const;
  const Parameter<T>* find(const std::string& name) const;
  Parameter<T>* find(const std::string& name);

  PyramidFeatures<T> backbone(const Tensor<T>& image) const;
  Tensor<T> ppm(const Tensor<T>& c5, ForwardTrace* trace = nullptr) const;
  /// level is 2..5.
  Tensor<T> ggf_inject(const Tensor<T>& guidance, int level, ForwardTrace* trace = nullptr) const;
  /// level is 2..5; selects that level's FAM weights.
  Tensor<T> fam(const Tensor<T>& fused, int level, ForwardTrace* trace = nullptr) const;
  ModelOutput<T> top_down(const PyramidFeatures<T>& pyramid, int input_h, int input_w,
                          const ForwardOptions& options = {},
                          ForwardTrace* trace = nullptr) const;
  /// out_levels are the top-down outputs of levels 2, 3, 4.
  std::pair<std::vector<Tensor<T>>, Tensor<T>> edge_branch(
      const std::array<Tensor<T>, 3>& out_levels, int input_h, int input_w,
      ForwardTrace* trace = nullptr) const;
  /// One edge residual block (index 0..2), exposed for testing.
  Tensor<T> residual_block(int index, const Tensor<T>& x) const;

  ModelOutput<T> forward(const Tensor<T>& image, const ForwardOptions& options = {},
                         ForwardTrace* trace = nullptr) const;

  void zero_grad();

 private:
  struct Conv {
    std::size_t weight = 0;
    std::optional<std::size_t> bias;
    int pad = 0;
  };
  struct Fam {
    std::vector<Conv> branches;
    Conv merge;
  };
  struct EdgeLevel {
    std::optional<Conv> project;
    Conv res1;
    Conv res2;
    Conv side;
    Conv score;
  };

  Conv add_conv(const std::string& name, int in_c, int out_c, int kernel);
  Tensor<T> apply(const Conv& conv, const Tensor<T>& x) const;
  Tensor<T> apply_relu(const Conv& conv, const Tensor<T>& x) const;

  ModelConfig config_;
  std::uint64_t seed_;
  std::vector<Parameter<T>> params_;

  std::vector<std::array<Conv, 2>> stages_;
  std::vector<Conv> ppm_branches_;
  std::optional<Conv> ppm_merge_;
  std::optional<Conv> plain_guidance_;
  std::array<std::optional<Conv>, 4> ggf_;
  std::array<Conv, 4> lateral_;
  std::array<std::optional<Conv>, 4> reduce_;  // top-down carry into level i from i+1
  std::array<std::optional<Fam>, 4> fam_;
  std::array<std::optional<Conv>, 4> refine_;
  std::vector<EdgeLevel> edge_levels_;
  std::vector<Conv> edge_fuse_;
  Conv head_;
};

extern template class PoolNet<float>;
extern template class PoolNet<double>;

}  // namespace poolnet

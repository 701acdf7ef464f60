#pragma once

#include <filesystem>
#include <string>

#include "poolnet/dataset.hpp"

namespace poolnet::testing {

template <typename T>
Sample<T> sample_from(const SynthPair& pair, const std::string& stem) {
  Sample<T> s;
  s.image = image_to_tensor<T>(pair.image);
  s.target = image_to_tensor<T>(pair.target);
  s.width = pair.image.width;
  s.height = pair.image.height;
  s.stem = stem;
  return s;
}

template <typename T>
std::vector<Sample<T>> saliency_set(std::size_t n, int size, std::uint64_t seed) {
  std::vector<Sample<T>> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(sample_from<T>(synth_saliency_pair(size, size, seed, i), std::to_string(i)));
  }
  return out;
}

template <typename T>
std::vector<Sample<T>> edge_set(std::size_t n, int size, std::uint64_t seed) {
  std::vector<Sample<T>> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(sample_from<T>(synth_edge_pair(size, size, seed, i), "e" + std::to_string(i)));
  }
  return out;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("poolnet_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace poolnet::testing

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "poolnet/image_io.hpp"
#include "poolnet/metrics.hpp"
#include "poolnet/tensor.hpp"

namespace poolnet {

enum class SampleKind { saliency, edge };

struct ManifestEntry {
  std::filesystem::path image;   // relative to the manifest root
  std::filesystem::path target;
  SampleKind kind = SampleKind::saliency;
};

struct DatasetManifest {
  std::filesystem::path root;
  SampleKind kind = SampleKind::saliency;
  std::vector<ManifestEntry> entries;
};

/// Reads "image<TAB>target" lines; paths resolve against the manifest's
/// directory. Blank lines and '#' comments are skipped. Missing files are a
/// DataError.
DatasetManifest read_manifest(const std::filesystem::path& path, SampleKind kind);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

template <typename T>
struct Sample {
  Tensor<T> image;   // 1x3xHxW in [0, 1]
  Tensor<T> target;  // 1x1xHxW
  int width = 0;     // original size before padding
  int height = 0;
  int pad_right = 0;
  int pad_bottom = 0;
  std::string stem;
};

template <typename T>
Sample<T> load_sample(const DatasetManifest& manifest, std::size_t index);

template <typename T>
std::vector<Sample<T>> load_samples(const DatasetManifest& manifest);

/// Replicate-pads the image and zero-pads the target on the right/bottom so
/// both spatial dims are multiples of m.
template <typename T>
Sample<T> pad_to_multiple(const Sample<T>& sample, int m = 16);

/// Drops the padding recorded in sample from a prediction of padded size.
template <typename T>
Tensor<T> crop_to_original(const Tensor<T>& prediction, const Sample<T>& sample);

/// Converts an unpadded-size 1x1xHxW tensor to a metrics map.
template <typename T>
SaliencyMap to_saliency_map(const Tensor<T>& map);
template <typename T>
GroundTruth to_ground_truth(const Tensor<T>& map);

struct SynthPair {
  Image image;   // RGB
  Image target;  // binary 0/255
};

/// One saliency sample: 1-2 high-contrast ellipses/rectangles on a textured
/// background; the target is the exact union mask. Pure in (seed, index).
SynthPair synth_saliency_pair(int width, int height, std::uint64_t seed, std::size_t index);

/// One edge sample: 3-4 overlapping shapes; the target marks the one-pixel
/// inner boundary of every shape, including parts hidden by later shapes.
SynthPair synth_edge_pair(int width, int height, std::uint64_t seed, std::size_t index);

/// Writes n pairs plus manifest.tsv under dir and returns the manifest.
DatasetManifest synth_saliency_dataset(const std::filesystem::path& dir, std::size_t n, int size,
                                       std::uint64_t seed);
DatasetManifest synth_edge_dataset(const std::filesystem::path& dir, std::size_t n, int size,
                                   std::uint64_t seed);

}  // namespace poolnet

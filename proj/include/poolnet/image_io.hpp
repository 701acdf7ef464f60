#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <vector>

#include "poolnet/tensor.hpp"

namespace poolnet {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 8-bit interleaved raster: 1 channel (PGM/P5) or 3 channels (PPM/P6).
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<std::uint8_t> pixels;
};

Image read_pnm(std::istream& in);
Image read_pnm(const std::filesystem::path& path);
void write_pnm(std::ostream& out, const Image& image);
void write_pnm(const std::filesystem::path& path, const Image& image);

/// 1 x channels x H x W tensor scaled to [0, 1].
template <typename T>
Tensor<T> image_to_tensor(const Image& image);

template <typename T>
Tensor<T> load_image(const std::filesystem::path& path);

/// Quantises a 1x1xHxW map with round(v * 255), clamping to [0, 255].
template <typename T>
Image map_to_image(const Tensor<T>& map);

template <typename T>
void save_map(const Tensor<T>& map, const std::filesystem::path& path);

}  // namespace poolnet

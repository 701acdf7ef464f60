#include "poolnet/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

namespace poolnet {

namespace {

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

int header_int(std::istream& in, const char* field) {
  const std::string tok = header_token(in);
  if (tok.empty() || !std::all_of(tok.begin(), tok.end(), ::isdigit)) {
    throw DataError(std::string("malformed PNM header: bad ") + field + " '" + tok + "'");
  }
  return std::stoi(tok);
}

}  // namespace

Image read_pnm(std::istream& in) {
  const std::string magic = header_token(in);
  Image img;
  if (magic == "P5") {
    img.channels = 1;
  } else if (magic == "P6") {
    img.channels = 3;
  } else {
    throw DataError("malformed PNM header: unsupported magic '" + magic + "' (need P5 or P6)");
  }
  img.width = header_int(in, "width");
  img.height = header_int(in, "height");
  const int maxval = header_int(in, "maxval");
  if (img.width < 1 || img.height < 1) throw DataError("malformed PNM header: zero size");
  if (maxval != 255) {
    throw DataError("unsupported PNM depth: maxval " + std::to_string(maxval) + " (need 255)");
  }
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height * img.channels;
  img.pixels.resize(n);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw DataError("truncated PNM payload: expected " + std::to_string(n) + " bytes, got " +
                    std::to_string(in.gcount()));
  }
  return img;
}

Image read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image '" + path.string() + "'");
  try {
    return read_pnm(in);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_pnm(std::ostream& out, const Image& image) {
  out << (image.channels == 3 ? "P6" : "P5") << "\n"
      << image.width << " " << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
}

void write_pnm(const std::filesystem::path& path, const Image& image) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write image '" + path.string() + "'");
  write_pnm(out, image);
  if (!out) throw DataError("failed writing image '" + path.string() + "'");
}

template <typename T>
Tensor<T> image_to_tensor(const Image& image) {
  Shape s{1, image.channels, image.height, image.width};
  std::vector<T> data(s.numel());
  const std::size_t plane = s.plane();
  for (std::size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < image.channels; ++c) {
      data[c * plane + i] = static_cast<T>(image.pixels[i * image.channels + c]) / T(255);
    }
  }
  return Tensor<T>::from(s, std::move(data));
}

template <typename T>
Tensor<T> load_image(const std::filesystem::path& path) {
  return image_to_tensor<T>(read_pnm(path));
}

template <typename T>
Image map_to_image(const Tensor<T>& map) {
  const Shape& s = map.shape();
  if (s.n != 1 || s.c != 1) throw DataError("save_map expects a 1x1xHxW map, got " + s.str());
  Image img;
  img.width = s.w;
  img.height = s.h;
  img.channels = 1;
  img.pixels.resize(s.plane());
  auto v = map.data();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double q = std::round(static_cast<double>(v[i]) * 255.0);
    img.pixels[i] = static_cast<std::uint8_t>(std::clamp(q, 0.0, 255.0));
  }
  return img;
}

template <typename T>
void save_map(const Tensor<T>& map, const std::filesystem::path& path) {
  write_pnm(path, map_to_image(map));
}

template Tensor<float> image_to_tensor(const Image&);
template Tensor<double> image_to_tensor(const Image&);
template Tensor<float> load_image(const std::filesystem::path&);
template Tensor<double> load_image(const std::filesystem::path&);
template Image map_to_image(const Tensor<float>&);
template Image map_to_image(const Tensor<double>&);
template void save_map(const Tensor<float>&, const std::filesystem::path&);
template void save_map(const Tensor<double>&, const std::filesystem::path&);

}  // namespace poolnet

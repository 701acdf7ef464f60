#include "poolnet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "poolnet/ops.hpp"
#include "poolnet/rng.hpp"

namespace poolnet {

namespace fs = std::filesystem;

DatasetManifest read_manifest(const fs::path& path, SampleKind kind) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest '" + path.string() + "'");
  DatasetManifest m;
  m.root = path.parent_path();
  m.kind = kind;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": expected 'image<TAB>target'");
    }
    ManifestEntry e{line.substr(0, tab), line.substr(tab + 1), kind};
    for (const auto& p : {e.image, e.target}) {
      if (!fs::exists(m.root / p)) {
        throw DataError(path.string() + ":" + std::to_string(line_no) + ": missing file '" +
                        (m.root / p).string() + "'");
      }
    }
    m.entries.push_back(std::move(e));
  }
  return m;
}

void write_manifest(const DatasetManifest& manifest, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write manifest '" + path.string() + "'");
  for (const auto& e : manifest.entries) {
    out << e.image.generic_string() << '\t' << e.target.generic_string() << '\n';
  }
}

template <typename T>
Sample<T> load_sample(const DatasetManifest& manifest, std::size_t index) {
  const auto& e = manifest.entries.at(index);
  Image img = read_pnm(manifest.root / e.image);
  Image gt = read_pnm(manifest.root / e.target);
  if (img.width != gt.width || img.height != gt.height) {
    throw DataError("image/target size mismatch for '" + e.image.string() + "'");
  }
  if (gt.channels != 1) throw DataError("target '" + e.target.string() + "' must be grayscale");
  Sample<T> s;
  s.image = image_to_tensor<T>(img);
  if (img.channels == 1) {
    auto g = s.image;
    s.image = concat_channels(std::vector<Tensor<T>>{g, g, g});
  }
  s.target = image_to_tensor<T>(gt);
  if (manifest.kind == SampleKind::edge) {
    for (auto& v : s.target.data()) v = v >= T(0.5) ? T(1) : T(0);
  }
  s.width = img.width;
  s.height = img.height;
  s.stem = e.image.stem().string();
  return s;
}

template <typename T>
std::vector<Sample<T>> load_samples(const DatasetManifest& manifest) {
  std::vector<Sample<T>> out;
  out.reserve(manifest.entries.size());
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) out.push_back(load_sample<T>(manifest, i));
  return out;
}

template <typename T>
Sample<T> pad_to_multiple(const Sample<T>& sample, int m) {
  if (m < 1) throw std::invalid_argument("pad multiple must be >= 1");
  const Shape& s = sample.image.shape();
  const int ph = (s.h + m - 1) / m * m;
  const int pw = (s.w + m - 1) / m * m;
  Sample<T> out = sample;
  out.pad_right = pw - s.w;
  out.pad_bottom = ph - s.h;
  if (ph == s.h && pw == s.w) return out;

  Shape is{s.n, s.c, ph, pw};
  std::vector<T> img(is.numel());
  auto src = sample.image.data();
  for (int p = 0; p < s.n * s.c; ++p) {
    for (int y = 0; y < ph; ++y) {
      const int sy = std::min(y, s.h - 1);
      for (int x = 0; x < pw; ++x) {
        const int sx = std::min(x, s.w - 1);
        img[(static_cast<std::size_t>(p) * ph + y) * pw + x] =
            src[(static_cast<std::size_t>(p) * s.h + sy) * s.w + sx];
      }
    }
  }
  out.image = Tensor<T>::from(is, std::move(img));

  const Shape& ts = sample.target.shape();
  Shape os{ts.n, ts.c, ph, pw};
  std::vector<T> tgt(os.numel(), T(0));
  auto tsrc = sample.target.data();
  for (int p = 0; p < ts.n * ts.c; ++p) {
    for (int y = 0; y < ts.h; ++y) {
      for (int x = 0; x < ts.w; ++x) {
        tgt[(static_cast<std::size_t>(p) * ph + y) * pw + x] =
            tsrc[(static_cast<std::size_t>(p) * ts.h + y) * ts.w + x];
      }
    }
  }
  out.target = Tensor<T>::from(os, std::move(tgt));
  return out;
}

template <typename T>
Tensor<T> crop_to_original(const Tensor<T>& prediction, const Sample<T>& sample) {
  return crop(prediction, sample.height, sample.width);
}

template <typename T>
SaliencyMap to_saliency_map(const Tensor<T>& map) {
  const Shape& s = map.shape();
  std::vector<double> v(map.data().begin(), map.data().end());
  for (auto& x : v) x = std::clamp(x, 0.0, 1.0);
  return SaliencyMap::from(s.w, s.h, std::move(v));
}

template <typename T>
GroundTruth to_ground_truth(const Tensor<T>& map) {
  const Shape& s = map.shape();
  std::vector<double> v(map.data().begin(), map.data().end());
  return GroundTruth::from(s.w, s.h, std::move(v));
}

namespace {

struct ShapeSpec {
  bool ellipse = true;
  double cx = 0, cy = 0, rx = 0, ry = 0;

  bool contains(int x, int y) const {
    const double dx = (x + 0.5 - cx) / rx;
    const double dy = (y + 0.5 - cy) / ry;
    return ellipse ? dx * dx + dy * dy <= 1.0 : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
  }
};

ShapeSpec random_shape(Rng& rng, int width, int height, double min_r, double max_r) {
  ShapeSpec s;
  s.ellipse = rng.bernoulli(0.5);
  s.cx = rng.uniform(0.25, 0.75) * width;
  s.cy = rng.uniform(0.25, 0.75) * height;
  s.rx = rng.uniform(min_r, max_r) * width;
  s.ry = rng.uniform(min_r, max_r) * height;
  return s;
}

// Low-contrast stripes plus noise around a mid-grey tint.
std::vector<double> textured_background(Rng& rng, int width, int height) {
  std::vector<double> rgb(static_cast<std::size_t>(width) * height * 3);
  double base[3];
  for (double& b : base) b = rng.uniform(0.4, 0.6);
  const double angle = rng.uniform(0.0, std::numbers::pi);
  const double freq = rng.uniform(0.2, 0.6);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double fx = std::cos(angle) * freq;
  const double fy = std::sin(angle) * freq;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double stripe = 0.08 * std::sin(fx * x + fy * y + phase);
      for (int c = 0; c < 3; ++c) {
        rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c] =
            base[c] + stripe + rng.uniform(-0.05, 0.05);
      }
    }
  }
  return rgb;
}

Image to_rgb_image(const std::vector<double>& rgb, int width, int height) {
  Image img{width, height, 3, std::vector<std::uint8_t>(rgb.size())};
  for (std::size_t i = 0; i < rgb.size(); ++i) {
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(rgb[i], 0.0, 1.0) * 255.0));
  }
  return img;
}

std::string indexed(const char* prefix, std::size_t i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%04zu.%s", prefix, i, ext);
  return buf;
}

}  // namespace

SynthPair synth_saliency_pair(int width, int height, std::uint64_t seed, std::size_t index) {
  Rng rng(derive_seed(seed, index));
  auto rgb = textured_background(rng, width, height);
  Image mask{width, height, 1, std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height, 0)};
  const int count = rng.uniform_int(1, 2);
  for (int k = 0; k < count; ++k) {
    const ShapeSpec shape = random_shape(rng, width, height, 0.12, 0.28);
    double color[3];
    for (double& c : color) c = rng.bernoulli(0.5) ? rng.uniform(0.85, 1.0) : rng.uniform(0.0, 0.15);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        if (!shape.contains(x, y)) continue;
        const std::size_t i = static_cast<std::size_t>(y) * width + x;
        mask.pixels[i] = 255;
        for (int c = 0; c < 3; ++c) rgb[i * 3 + c] = color[c] + rng.uniform(-0.03, 0.03);
      }
    }
  }
  return {to_rgb_image(rgb, width, height), std::move(mask)};
}

SynthPair synth_edge_pair(int width, int height, std::uint64_t seed, std::size_t index) {
  Rng rng(derive_seed(seed ^ 0x65646765ULL, index));
  auto rgb = textured_background(rng, width, height);
  Image edges{width, height, 1, std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height, 0)};
  const int count = rng.uniform_int(3, 4);
  for (int k = 0; k < count; ++k) {
    const ShapeSpec shape = random_shape(rng, width, height, 0.1, 0.25);
    double color[3];
    for (double& c : color) c = rng.uniform(0.05, 0.95);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        if (!shape.contains(x, y)) continue;
        const std::size_t i = static_cast<std::size_t>(y) * width + x;
        for (int c = 0; c < 3; ++c) rgb[i * 3 + c] = color[c];
        // Inner boundary: a 4-neighbour inside the image but outside the shape.
        const int nx[4] = {x - 1, x + 1, x, x};
        const int ny[4] = {y, y, y - 1, y + 1};
        for (int d = 0; d < 4; ++d) {
          if (nx[d] < 0 || ny[d] < 0 || nx[d] >= width || ny[d] >= height) continue;
          if (!shape.contains(nx[d], ny[d])) {
            edges.pixels[i] = 255;
            break;
          }
        }
      }
    }
  }
  return {to_rgb_image(rgb, width, height), std::move(edges)};
}

namespace {

DatasetManifest write_synth(const fs::path& dir, std::size_t n, int size, std::uint64_t seed,
                            SampleKind kind) {
  if (n == 0 || size < 1) throw std::invalid_argument("synthetic dataset needs n >= 1 and size >= 1");
  fs::create_directories(dir);
  DatasetManifest m;
  m.root = dir;
  m.kind = kind;
  for (std::size_t i = 0; i < n; ++i) {
    SynthPair pair = kind == SampleKind::saliency ? synth_saliency_pair(size, size, seed, i)
                                                  : synth_edge_pair(size, size, seed, i);
    ManifestEntry e{indexed("img", i, "ppm"), indexed("gt", i, "pgm"), kind};
    write_pnm(dir / e.image, pair.image);
    write_pnm(dir / e.target, pair.target);
    m.entries.push_back(std::move(e));
  }
  write_manifest(m, dir / "manifest.tsv");
  return m;
}

}  // namespace

DatasetManifest synth_saliency_dataset(const fs::path& dir, std::size_t n, int size,
                                       std::uint64_t seed) {
  return write_synth(dir, n, size, seed, SampleKind::saliency);
}

DatasetManifest synth_edge_dataset(const fs::path& dir, std::size_t n, int size,
                                   std::uint64_t seed) {
  return write_synth(dir, n, size, seed, SampleKind::edge);
}

#define POOLNET_INSTANTIATE(T)                                                         \
  template Sample<T> load_sample(const DatasetManifest&, std::size_t);                 \
  template std::vector<Sample<T>> load_samples(const DatasetManifest&);                \
  template Sample<T> pad_to_multiple(const Sample<T>&, int);                           \
  template Tensor<T> crop_to_original(const Tensor<T>&, const Sample<T>&);             \
  template SaliencyMap to_saliency_map(const Tensor<T>&);                              \
  template GroundTruth to_ground_truth(const Tensor<T>&);

POOLNET_INSTANTIATE(float)
POOLNET_INSTANTIATE(double)

#undef POOLNET_INSTANTIATE

}  // namespace poolnet

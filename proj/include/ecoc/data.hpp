#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ecoc/tensor.hpp"

namespace ecoc {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Images (B, C, H, W) in [0, 1] with class labels in [0, classes).
template <typename T>
struct Dataset {
  Tensor<T> images;
  std::vector<std::size_t> labels;
  std::size_t classes = 0;
  std::string split;
  /// File paths with checksums, or the generator parameters.
  std::string provenance;
  std::uint64_t checksum = 0;

  std::size_t size() const noexcept { return labels.size(); }
  Shape image_shape() const { return {images.dim(1), images.dim(2), images.dim(3)}; }

  Dataset subset(const std::vector<std::size_t>& index) const {
    Dataset out{images.select_rows(index), {}, classes, split, provenance, checksum};
    out.labels.reserve(index.size());
    for (std::size_t i : index) out.labels.push_back(labels.at(i));
    return out;
  }
};

template <typename T>
struct DatasetPair {
  Dataset<T> train;
  Dataset<T> test;
};

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const unsigned char* data, std::size_t n,
                           std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t fnv1a(std::string_view s) {
  return fnv1a(reinterpret_cast<const unsigned char*>(s.data()), s.size());
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

namespace data_detail {

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

inline std::uint32_t big_endian(const std::vector<unsigned char>& b, std::size_t at) {
  return (std::uint32_t(b[at]) << 24) | (std::uint32_t(b[at + 1]) << 16) |
         (std::uint32_t(b[at + 2]) << 8) | std::uint32_t(b[at + 3]);
}

template <typename T>
T scale_byte(unsigned char v) {
  return static_cast<T>(v) / static_cast<T>(255);
}

}  // namespace data_detail

/// Official download locations; nothing is fetched.
inline std::string dataset_sources() {
  return "CIFAR-10 (binary version): https://www.cs.toronto.edu/~kriz/cifar-10-binary.tar.gz\n"
         "Fashion-MNIST: https://github.com/zalandoresearch/fashion-mnist (data/fashion)\n";
}

/// Reads CIFAR-10 binary batches (data_batch_1..5.bin, test_batch.bin): each
/// record is one label byte followed by 3072 pixel bytes in R, G, B planes.
template <typename T>
DatasetPair<T> load_cifar10(const std::filesystem::path& dir, std::size_t records_per_file = 10000) {
  constexpr std::size_t kRecord = 1 + 3 * 32 * 32;
  const std::size_t kPerFile = records_per_file;
  auto load = [&](const std::vector<std::string>& files, const std::string& split) {
    Dataset<T> d;
    d.classes = 10;
    d.split = split;
    d.checksum = 0xcbf29ce484222325ULL;
    std::vector<T> pixels;
    pixels.reserve(files.size() * kPerFile * (kRecord - 1));
    for (const auto& name : files) {
      const auto path = dir / name;
      const auto bytes = data_detail::read_file(path);
      if (bytes.size() != kRecord * kPerFile) {
        throw DataError(path.string() + ": expected " + std::to_string(kRecord * kPerFile) +
                        " bytes, found " + std::to_string(bytes.size()));
      }
      const std::uint64_t sum = fnv1a(bytes.data(), bytes.size());
      d.checksum = fnv1a(reinterpret_cast<const unsigned char*>(&sum), sizeof sum, d.checksum);
      d.provenance += (d.provenance.empty() ? "" : ";") + path.string() + "#" + hex64(sum);
      for (std::size_t r = 0; r < kPerFile; ++r) {
        const unsigned char* rec = bytes.data() + r * kRecord;
        if (rec[0] >= 10) throw DataError(path.string() + ": label out of range in record " + std::to_string(r));
        d.labels.push_back(rec[0]);
        for (std::size_t i = 1; i < kRecord; ++i) pixels.push_back(data_detail::scale_byte<T>(rec[i]));
      }
    }
    d.images = Tensor<T>({d.labels.size(), 3, 32, 32}, std::move(pixels));
    return d;
  };
  return {load({"data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin", "data_batch_4.bin",
                "data_batch_5.bin"},
               "train"),
          load({"test_batch.bin"}, "test")};
}

/// Reads one IDX image file (magic 0x00000803) and its label file
/// (magic 0x00000801).
template <typename T>
Dataset<T> load_idx_pair(const std::filesystem::path& images_path,
                         const std::filesystem::path& labels_path, const std::string& split,
                         std::size_t classes = 10) {
  const auto img = data_detail::read_file(images_path);
  const auto lab = data_detail::read_file(labels_path);
  if (img.size() < 16 || data_detail::big_endian(img, 0) != 0x00000803u)
    throw DataError(images_path.string() + ": bad IDX image magic");
  if (lab.size() < 8 || data_detail::big_endian(lab, 0) != 0x00000801u)
    throw DataError(labels_path.string() + ": bad IDX label magic");
  const std::size_t n = data_detail::big_endian(img, 4);
  const std::size_t rows = data_detail::big_endian(img, 8);
  const std::size_t cols = data_detail::big_endian(img, 12);
  const std::size_t n_labels = data_detail::big_endian(lab, 4);
  if (n != n_labels) {
    throw DataError(images_path.string() + " holds " + std::to_string(n) + " images but " +
                    labels_path.string() + " holds " + std::to_string(n_labels) + " labels");
  }
  if (rows == 0 || cols == 0) throw DataError(images_path.string() + ": zero image dimension");
  if (img.size() != 16 + n * rows * cols) {
    throw DataError(images_path.string() + ": expected " + std::to_string(16 + n * rows * cols) +
                    " bytes, found " + std::to_string(img.size()));
  }
  if (lab.size() != 8 + n) {
    throw DataError(labels_path.string() + ": expected " + std::to_string(8 + n) +
                    " bytes, found " + std::to_string(lab.size()));
  }
  Dataset<T> d;
  d.classes = classes;
  d.split = split;
  std::vector<T> pixels(n * rows * cols);
  for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = data_detail::scale_byte<T>(img[16 + i]);
  d.images = Tensor<T>({n, 1, rows, cols}, std::move(pixels));
  for (std::size_t i = 0; i < n; ++i) {
    if (lab[8 + i] >= classes) throw DataError(labels_path.string() + ": label out of range");
    d.labels.push_back(lab[8 + i]);
  }
  const std::uint64_t hi = fnv1a(img.data(), img.size());
  const std::uint64_t hl = fnv1a(lab.data(), lab.size());
  d.checksum = fnv1a(reinterpret_cast<const unsigned char*>(&hl), sizeof hl, hi);
  d.provenance = images_path.string() + "#" + hex64(hi) + ";" + labels_path.string() + "#" + hex64(hl);
  return d;
}

template <typename T>
DatasetPair<T> load_fashion_mnist(const std::filesystem::path& dir) {
  return {load_idx_pair<T>(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte", "train"),
          load_idx_pair<T>(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte", "test")};
}

struct SyntheticSpec {
  std::size_t classes = 5;
  std::size_t channels = 1, height = 8, width = 8;
  std::size_t train_per_class = 40;
  std::size_t test_per_class = 20;
  /// Minimum l2 distance between any two class templates.
  double margin = 2.0;
  /// Noise l2 radius as a fraction of margin / 2, in (0, 1).
  double noise = 0.6;
  /// Template pixels lie in [0.5 - contrast / 2, 0.5 + contrast / 2].
  double contrast = 1.0;
  std::uint64_t seed = 0;
};

/// Class templates drawn at pairwise l2 distance >= margin; every image is
/// its template plus noise of l2 norm < noise * margin / 2, clipped to
/// [0, 1]. Clipping is non-expansive, so the nearest template is always the
/// true class.
template <typename T>
struct SyntheticDataset {
  DatasetPair<T> data;
  std::vector<std::vector<double>> templates;
};

template <typename T>
SyntheticDataset<T> synthetic_dataset(const SyntheticSpec& s) {
  if (s.classes < 2) throw DataError("synthetic_dataset: need at least 2 classes");
  if (s.channels == 0 || s.height == 0 || s.width == 0 || s.train_per_class == 0 ||
      s.test_per_class == 0)
    throw DataError("synthetic_dataset: degenerate size");
  if (!(s.margin > 0)) throw DataError("synthetic_dataset: margin must be positive");
  if (!(s.noise > 0 && s.noise < 1)) throw DataError("synthetic_dataset: noise must lie in (0, 1)");
  if (!(s.contrast > 0 && s.contrast <= 1)) throw DataError("synthetic_dataset: contrast must lie in (0, 1]");
  const std::size_t dim = s.channels * s.height * s.width;
  std::mt19937_64 rng(s.seed);
  std::uniform_real_distribution<double> pixel(0.5 - s.contrast / 2, 0.5 + s.contrast / 2);

  std::vector<std::vector<double>> templates;
  for (std::size_t attempts = 0; templates.size() < s.classes; ++attempts) {
    if (attempts > 100000) throw DataError("synthetic_dataset: cannot place templates at this margin");
    std::vector<double> t(dim);
    for (double& v : t) v = pixel(rng);
    bool ok = true;
    for (const auto& u : templates) {
      double d2 = 0;
      for (std::size_t i = 0; i < dim; ++i) d2 += (t[i] - u[i]) * (t[i] - u[i]);
      ok = ok && std::sqrt(d2) >= s.margin;
    }
    if (ok) templates.push_back(std::move(t));
  }

  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unit(0, 1);
  const double radius = s.noise * s.margin / 2;
  auto make = [&](std::size_t per_class, const std::string& split) {
    Dataset<T> d;
    d.classes = s.classes;
    d.split = split;
    std::vector<T> pixels;
    pixels.reserve(per_class * s.classes * dim);
    for (std::size_t k = 0; k < per_class; ++k) {
      for (std::size_t c = 0; c < s.classes; ++c) {
        std::vector<double> dir(dim);
        double norm = 0;
        for (double& v : dir) {
          v = gauss(rng);
          norm += v * v;
        }
        norm = std::sqrt(norm);
        const double r = radius * unit(rng);
        for (std::size_t i = 0; i < dim; ++i)
          pixels.push_back(static_cast<T>(std::clamp(templates[c][i] + r * dir[i] / norm, 0.0, 1.0)));
        d.labels.push_back(c);
      }
    }
    d.images = Tensor<T>({d.labels.size(), s.channels, s.height, s.width}, std::move(pixels));
    std::ostringstream os;
    os << "synthetic classes=" << s.classes << " shape=" << s.channels << "x" << s.height << "x"
       << s.width << " margin=" << s.margin << " noise=" << s.noise << " contrast=" << s.contrast
       << " seed=" << s.seed;
    d.provenance = os.str();
    d.checksum = fnv1a(reinterpret_cast<const unsigned char*>(d.images.data()),
                       d.images.size() * sizeof(T));
    return d;
  };
  // Train draws come first, test draws after, from one stream.
  Dataset<T> train = make(s.train_per_class, "train");
  Dataset<T> test = make(s.test_per_class, "test");
  return {{std::move(train), std::move(test)}, std::move(templates)};
}

/// Nearest template in l2; ties go to the lowest index.
inline std::size_t nearest_template(const std::vector<std::vector<double>>& templates,
                                    const double* image) {
  std::size_t best = 0;
  double best_d = INFINITY;
  for (std::size_t c = 0; c < templates.size(); ++c) {
    double d = 0;
    for (std::size_t i = 0; i < templates[c].size(); ++i)
      d += (templates[c][i] - image[i]) * (templates[c][i] - image[i]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

/// Uniformly chosen `count` distinct indices of [0, n), sorted; reproducible
/// from `seed`. count >= n returns every index.
inline std::vector<std::size_t> select_subset(std::size_t n, std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  if (count >= n) return idx;
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace ecoc

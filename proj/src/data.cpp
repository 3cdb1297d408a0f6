#include "relulab/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <vector>

#include "relulab/loss.hpp"

namespace relulab {

namespace {

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open " + path);
  }
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, Index offset,
                        const std::string& path) {
  if (offset + 4 > bytes.size()) {
    throw std::runtime_error(path + ": truncated at offset " +
                             std::to_string(bytes.size()) + ", need " +
                             std::to_string(offset + 4) + " bytes");
  }
  return (std::uint32_t(bytes[offset]) << 24) |
         (std::uint32_t(bytes[offset + 1]) << 16) |
         (std::uint32_t(bytes[offset + 2]) << 8) |
         std::uint32_t(bytes[offset + 3]);
}

void require_size(const std::vector<std::uint8_t>& bytes, Index need,
                  const std::string& path) {
  if (bytes.size() < need) {
    throw std::runtime_error(path + ": truncated at offset " +
                             std::to_string(bytes.size()) + ", need " +
                             std::to_string(need) + " bytes");
  }
}

void write_be32(std::ofstream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                     static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(b, 4);
}

}  // namespace

LabeledDataset load_idx_pair(const std::string& images_path,
                             const std::string& labels_path,
                             const std::string& name, Index num_classes) {
  const auto img = read_file_bytes(images_path);
  const std::uint32_t img_magic = read_be32(img, 0, images_path);
  if (img_magic != 2051) {
    throw std::runtime_error(images_path + ": bad magic " +
                             std::to_string(img_magic) +
                             " at offset 0, expected 2051");
  }
  const std::uint32_t count = read_be32(img, 4, images_path);
  const std::uint32_t rows = read_be32(img, 8, images_path);
  const std::uint32_t cols = read_be32(img, 12, images_path);
  const Index pixel_count = Index{count} * rows * cols;
  require_size(img, 16 + pixel_count, images_path);

  const auto lab = read_file_bytes(labels_path);
  const std::uint32_t lab_magic = read_be32(lab, 0, labels_path);
  if (lab_magic != 2049) {
    throw std::runtime_error(labels_path + ": bad magic " +
                             std::to_string(lab_magic) +
                             " at offset 0, expected 2049");
  }
  const std::uint32_t lab_count = read_be32(lab, 4, labels_path);
  if (lab_count != count) {
    throw std::runtime_error(labels_path + ": " + std::to_string(lab_count) +
                             " labels but " + std::to_string(count) +
                             " images in " + images_path);
  }
  require_size(lab, 8 + Index{count}, labels_path);

  LabeledDataset ds;
  ds.name = name;
  ds.x = Matrix(count, Index{rows} * cols);
  ds.labels.resize(count);
  auto& px = ds.x.data();
  for (Index i = 0; i < pixel_count; ++i) {
    px[i] = static_cast<double>(img[16 + i]) / 255.0;
  }
  Index max_label = 0;
  for (Index i = 0; i < count; ++i) {
    ds.labels[i] = lab[8 + i];
    max_label = std::max(max_label, ds.labels[i]);
  }
  if (num_classes == 0) {
    ds.num_classes = max_label + 1;
  } else {
    if (max_label >= num_classes) {
      throw std::runtime_error(labels_path + ": label " +
                               std::to_string(max_label) + " out of range [0," +
                               std::to_string(num_classes) + ")");
    }
    ds.num_classes = num_classes;
  }
  validate_dataset(ds);
  return ds;
}

LabeledDataset load_mnist(const std::string& dir) {
  return load_idx_pair(dir + "/train-images-idx3-ubyte",
                       dir + "/train-labels-idx1-ubyte", "mnist-train", 10);
}

LabeledDataset load_mnist_test(const std::string& dir) {
  return load_idx_pair(dir + "/t10k-images-idx3-ubyte",
                       dir + "/t10k-labels-idx1-ubyte", "mnist-test", 10);
}

void write_idx_images(const std::string& path, Index rows, Index cols,
                      std::span<const std::uint8_t> pixels) {
  if (rows == 0 || cols == 0 || pixels.size() % (rows * cols) != 0) {
    throw std::invalid_argument(
        "write_idx_images: pixel count not a multiple of the image size");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_be32(out, 2051);
  write_be32(out, static_cast<std::uint32_t>(pixels.size() / (rows * cols)));
  write_be32(out, static_cast<std::uint32_t>(rows));
  write_be32(out, static_cast<std::uint32_t>(cols));
  out.write(reinterpret_cast<const char*>(pixels.data()),
            static_cast<std::streamsize>(pixels.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<std::uint8_t> load_idx_labels(const std::string& path) {
  const auto lab = read_file_bytes(path);
  const std::uint32_t magic = read_be32(lab, 0, path);
  if (magic != 2049) {
    throw std::runtime_error(path + ": bad magic " + std::to_string(magic) +
                             " at offset 0, expected 2049");
  }
  const std::uint32_t count = read_be32(lab, 4, path);
  require_size(lab, 8 + Index{count}, path);
  return {lab.begin() + 8, lab.begin() + 8 + count};
}

void write_idx_labels(const std::string& path,
                      std::span<const std::uint8_t> labels) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_be32(out, 2049);
  write_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.write(reinterpret_cast<const char*>(labels.data()),
            static_cast<std::streamsize>(labels.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

namespace {

constexpr Index kCifarRecord = 3073;
constexpr Index kCifarPlane = 1024;

}  // namespace

LabeledDataset load_cifar10_batch(const std::string& path,
                                  const std::string& name) {
  const auto bytes = read_file_bytes(path);
  if (bytes.size() % kCifarRecord != 0) {
    throw std::runtime_error(path + ": size " + std::to_string(bytes.size()) +
                             " is not a multiple of " +
                             std::to_string(kCifarRecord));
  }
  const Index n = bytes.size() / kCifarRecord;
  LabeledDataset ds;
  ds.name = name;
  ds.num_classes = 10;
  ds.x = Matrix(n, kCifarPlane);
  ds.labels.resize(n);
  for (Index t = 0; t < n; ++t) {
    const Index base = t * kCifarRecord;
    const std::uint8_t label = bytes[base];
    if (label > 9) {
      throw std::runtime_error(path + ": label byte " + std::to_string(label) +
                               " > 9 at offset " + std::to_string(base));
    }
    ds.labels[t] = label;
    auto row = ds.x.row(t);
    for (Index i = 0; i < kCifarPlane; ++i) {
      const unsigned r = bytes[base + 1 + i];
      const unsigned g = bytes[base + 1 + kCifarPlane + i];
      const unsigned b = bytes[base + 1 + 2 * kCifarPlane + i];
      row[i] = static_cast<double>(299 * r + 587 * g + 114 * b) / 255000.0;
    }
  }
  validate_dataset(ds);
  return ds;
}

LabeledDataset load_cifar10(const std::string& dir) {
  std::vector<LabeledDataset> batches;
  std::vector<const LabeledDataset*> parts;
  batches.reserve(5);
  for (int i = 1; i <= 5; ++i) {
    const std::string path = dir + "/data_batch_" + std::to_string(i) + ".bin";
    batches.push_back(load_cifar10_batch(path, "cifar10-train"));
  }
  for (const auto& b : batches) parts.push_back(&b);
  LabeledDataset all = concat(parts);
  all.name = "cifar10-train";
  return all;
}

LabeledDataset load_cifar10_test(const std::string& dir) {
  return load_cifar10_batch(dir + "/test_batch.bin", "cifar10-test");
}

void write_cifar10_batch(const std::string& path,
                         std::span<const std::uint8_t> labels,
                         std::span<const std::uint8_t> rgb) {
  if (rgb.size() != labels.size() * (kCifarRecord - 1)) {
    throw std::invalid_argument(
        "write_cifar10_batch: need 3072 pixel bytes per label");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  for (Index t = 0; t < labels.size(); ++t) {
    out.put(static_cast<char>(labels[t]));
    out.write(reinterpret_cast<const char*>(rgb.data() + t * 3072), 3072);
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

LabeledDataset downsample_100(const LabeledDataset& ds) {
  const Index d = ds.dim();
  const Index side = static_cast<Index>(std::llround(std::sqrt(
      static_cast<double>(d))));
  if (side == 0 || side * side != d) {
    throw std::invalid_argument("downsample_100: input images are not square");
  }
  constexpr Index out_side = 10;
  const double ratio = static_cast<double>(side) / out_side;
  const double cell_area = ratio * ratio;

  // Per output pixel: list of (input pixel, overlap area). Computed once,
  // shared across rows and examples of the same geometry.
  struct Tap {
    Index src;
    double weight;
  };
  std::vector<std::vector<Tap>> taps(out_side * out_side);
  for (Index oi = 0; oi < out_side; ++oi) {
    const double y0 = oi * ratio;
    const double y1 = (oi + 1) * ratio;
    const Index a0 = static_cast<Index>(y0);
    const Index a1 = std::min(side - 1, static_cast<Index>(
                                            std::ceil(y1) - 1));
    for (Index oj = 0; oj < out_side; ++oj) {
      const double x0 = oj * ratio;
      const double x1 = (oj + 1) * ratio;
      const Index b0 = static_cast<Index>(x0);
      const Index b1 = std::min(side - 1, static_cast<Index>(
                                              std::ceil(x1) - 1));
      auto& list = taps[oi * out_side + oj];
      for (Index a = a0; a <= a1; ++a) {
        const double oy = std::min(y1, static_cast<double>(a + 1)) -
                          std::max(y0, static_cast<double>(a));
        for (Index b = b0; b <= b1; ++b) {
          const double ox = std::min(x1, static_cast<double>(b + 1)) -
                            std::max(x0, static_cast<double>(b));
          list.push_back({a * side + b, oy * ox});
        }
      }
    }
  }

  LabeledDataset out;
  out.name = ds.name;
  out.num_classes = ds.num_classes;
  out.split_tag = ds.split_tag;
  out.labels = ds.labels;
  out.x = Matrix(ds.size(), out_side * out_side);
  for (Index t = 0; t < ds.size(); ++t) {
    const auto src = ds.x.row(t);
    auto dst = out.x.row(t);
    for (Index o = 0; o < taps.size(); ++o) {
      double acc = 0.0;
      for (const Tap& tap : taps[o]) acc += tap.weight * src[tap.src];
      dst[o] = acc / cell_area;
    }
  }
  return out;
}

CensorResult censor(const LabeledDataset& full, Index h0,
                    const TeacherConfig& cfg) {
  if (h0 == 0) throw std::invalid_argument("censor: h0 must be at least 1");
  validate_dataset(full);

  Rng rng(mix_seed(cfg.seed, 0x63656e73));  // stream tag for censoring
  NetParams teacher = init_net(full.dim(), h0, full.num_classes,
                               cfg.init_sigma, rng);
  Rng train_rng = rng.fork(1);
  TrainResult tr = train(teacher, full, nullptr, cfg.opt, RegConfig{},
                         cfg.stop, train_rng);

  CensorResult out;
  out.teacher = tr.params;
  out.data = full;
  out.data.name = full.name + "-censored";
  for (Index t = 0; t < full.size(); ++t) {
    const auto y = forward(out.teacher, full.x.row(t));
    const Index pred = argmax_class(y);
    if (pred != full.labels[t]) ++out.changed;
    out.data.labels[t] = pred;
  }
  return out;
}

PlantedData planted_synthetic(Index d, Index h0, Index k, Index n,
                              double margin_scale, Rng& rng) {
  if (d == 0 || h0 == 0 || n == 0) {
    throw std::invalid_argument("planted_synthetic: counts must be positive");
  }
  if (k < 2) {
    throw std::invalid_argument("planted_synthetic: need at least 2 classes");
  }
  if (margin_scale < 0.0) {
    throw std::invalid_argument("planted_synthetic: margin must be >= 0");
  }

  const double sigma_u = 1.0 / std::sqrt(static_cast<double>(d));
  const double sigma_v = 1.0 / std::sqrt(static_cast<double>(h0));
  const Index max_draws = 1000 + 200 * n;

  for (Index attempt = 0; attempt < 100; ++attempt) {
    Rng teacher_rng = rng.fork(2 * attempt);
    Rng data_rng = rng.fork(2 * attempt + 1);

    NetParams teacher;
    teacher.d = d;
    teacher.hidden = h0;
    teacher.k = k;
    teacher.u = Matrix(h0, d);
    teacher.v = Matrix(h0, k);
    for (double& w : teacher.u.data()) w = teacher_rng.gaussian(sigma_u);
    for (double& w : teacher.v.data()) w = teacher_rng.gaussian(sigma_v);

    // Hidden features [u_h . x]_+ have mean proportional to |u_h|, so a raw
    // v gives each class a score offset sum_h v_hj |u_h| and one class tends
    // to swallow the argmax. Projecting each class column of v orthogonal to
    // the norm profile removes the offsets; classes then compete on
    // fluctuations and all of them win somewhere. With fewer than three
    // units the projection would collapse the columns onto one direction and
    // cap the number of argmax winners at two, so it is skipped there.
    if (h0 >= 3) {
      std::vector<double> prof(h0);
      double prof_sq = 0.0;
      for (Index h = 0; h < h0; ++h) {
        prof[h] = norm2(teacher.u.row(h));
        prof_sq += prof[h] * prof[h];
      }
      if (prof_sq > 0.0) {
        for (Index j = 0; j < k; ++j) {
          double along = 0.0;
          for (Index h = 0; h < h0; ++h) along += teacher.v(h, j) * prof[h];
          const double coef = along / prof_sq;
          for (Index h = 0; h < h0; ++h) teacher.v(h, j) -= coef * prof[h];
        }
      }
    }

    LabeledDataset ds;
    ds.name = "planted";
    ds.num_classes = k;
    ds.x = Matrix(n, d);
    ds.labels.assign(n, 0);
    std::vector<double> x(d);
    std::vector<bool> seen(k, false);
    Index got = 0;
    for (Index draw = 0; draw < max_draws && got < n; ++draw) {
      for (Index j = 0; j < d; ++j) x[j] = data_rng.gaussian(1.0);
      const auto y = forward(teacher, x);
      const Index top = argmax_class(y);
      double second = -std::numeric_limits<double>::infinity();
      for (Index j = 0; j < k; ++j) {
        if (j != top) second = std::max(second, y[j]);
      }
      if (y[top] - second < margin_scale) continue;
      std::copy(x.begin(), x.end(), ds.x.row(got).begin());
      ds.labels[got] = top;
      seen[top] = true;
      ++got;
    }
    if (got < n) continue;
    if (std::find(seen.begin(), seen.end(), false) != seen.end()) continue;
    // Reject heavily skewed teachers: every class must carry at least a
    // quarter of its uniform share. Random teachers often concentrate almost
    // all mass on one class, which makes the labels unlearnable in practice.
    std::vector<Index> counts(k, 0);
    for (Index l : ds.labels) ++counts[l];
    const Index min_share = n / (4 * k);
    if (*std::min_element(counts.begin(), counts.end()) < min_share) continue;
    return PlantedData{std::move(ds), std::move(teacher)};
  }
  throw std::runtime_error(
      "planted_synthetic: no viable teacher after 100 attempts");
}

}  // namespace relulab

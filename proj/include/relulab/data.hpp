#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "relulab/dataset.hpp"
#include "relulab/model.hpp"
#include "relulab/optim.hpp"

namespace relulab {

// ---------------------------------------------------------------------------
// IDX container (big-endian magics 2051 for images, 2049 for labels).
// Loaders throw std::runtime_error naming the byte offset of the problem.

/// Reads an images/labels file pair. Pixels are bytes scaled to [0,1].
/// num_classes = 0 infers the class count as max(label) + 1.
LabeledDataset load_idx_pair(const std::string& images_path,
                             const std::string& labels_path,
                             const std::string& name, Index num_classes = 0);

/// The 60000-example training pool (train-images-idx3-ubyte + labels), k=10.
LabeledDataset load_mnist(const std::string& dir);
/// The 10000-example held-out set (t10k files), k=10.
LabeledDataset load_mnist_test(const std::string& dir);

/// count = pixels.size() / (rows*cols); pixels are row-major per image.
void write_idx_images(const std::string& path, Index rows, Index cols,
                      std::span<const std::uint8_t> pixels);
void write_idx_labels(const std::string& path,
                      std::span<const std::uint8_t> labels);
/// Just the label bytes of an IDX labels file.
std::vector<std::uint8_t> load_idx_labels(const std::string& path);

// ---------------------------------------------------------------------------
// CIFAR-10 binary batches: 3073-byte records, 1 label byte then 1024 bytes
// per channel (R, G, B), 32x32 row-major. Converted to grayscale luminance
// (299*R + 587*G + 114*B) / 255000; the integer weights sum to exactly 1000,
// so a white pixel maps to exactly 1.0.

LabeledDataset load_cifar10_batch(const std::string& path,
                                  const std::string& name);
/// Concatenates data_batch_1.bin .. data_batch_5.bin (50000 examples).
LabeledDataset load_cifar10(const std::string& dir);
/// test_batch.bin (10000 examples).
LabeledDataset load_cifar10_test(const std::string& dir);

/// rgb holds 3072 bytes per record in channel-planar order.
void write_cifar10_batch(const std::string& path,
                         std::span<const std::uint8_t> labels,
                         std::span<const std::uint8_t> rgb);

// ---------------------------------------------------------------------------
// Transforms

/// Resamples square images to a 10x10 grid (d = 100) with an exact
/// fractional-area box filter. Each output pixel is the area-weighted
/// average of the input region it covers, so constants and the image mean
/// are preserved. Throws std::invalid_argument for non-square inputs.
LabeledDataset downsample_100(const LabeledDataset& ds);

/// Optimizer settings for the relabeling teacher.
struct TeacherConfig {
  SgdConfig opt;
  StoppingRule stop;
  double init_sigma = 0.1;
  std::uint64_t seed = 0;
};

struct CensorResult {
  LabeledDataset data;  // same inputs, labels replaced by teacher argmax
  NetParams teacher;
  Index changed = 0;  // labels that differ from the originals
};

/// Trains an h0-unit network on the given dataset (pass the union of all
/// splits) and replaces every label with the trained network's prediction.
/// The teacher has zero error on the returned data by construction.
CensorResult censor(const LabeledDataset& full, Index h0,
                    const TeacherConfig& cfg);

struct PlantedData {
  LabeledDataset data;
  NetParams teacher;
};

/// Standard-normal inputs labeled by a random h0-unit teacher. Only inputs
/// whose top-two teacher scores are separated by at least margin_scale are
/// kept. Teachers that miss a class, give any class less than a quarter of
/// its uniform share, or cannot fill n samples at the requested margin are
/// redrawn; gives up after 100 attempts.
PlantedData planted_synthetic(Index d, Index h0, Index k, Index n,
                              double margin_scale, Rng& rng);

}  // namespace relulab

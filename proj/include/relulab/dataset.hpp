#pragma once

#include <cstdint>
#include <string>
#include <tuple>
#include <vector>

#include "relulab/numerics.hpp"

namespace relulab {

enum class SplitTag { none, train, validation, test };

/// Design matrix plus integer class labels. Feature values are finite and,
/// for image data, scaled to [0, 1].
struct LabeledDataset {
  Matrix x;                   // n x d
  std::vector<Index> labels;  // n values, each < num_classes
  Index num_classes = 0;
  std::string name;
  SplitTag split_tag = SplitTag::none;

  Index size() const { return x.rows(); }
  Index dim() const { return x.cols(); }
};

/// Throws std::invalid_argument if labels/x disagree or a label is out of
/// range.
void validate_dataset(const LabeledDataset& ds);

struct SplitSpec {
  Index n_train = 0;
  Index n_validation = 0;
  Index n_test = 0;
  std::uint64_t seed = 0;
};

/// Disjoint seeded-shuffle partition. Throws if the spec exceeds the
/// available examples.
std::tuple<LabeledDataset, LabeledDataset, LabeledDataset> split(
    const LabeledDataset& ds, const SplitSpec& spec);

/// Exactly round(fraction * n) distinct examples get a uniformly random
/// different label. fraction must lie in [0, 1].
LabeledDataset add_label_noise(const LabeledDataset& ds, double fraction,
                               Rng& rng);

/// Row-wise concatenation; inputs must share dim and class count.
LabeledDataset concat(const std::vector<const LabeledDataset*>& parts);

/// Examples [begin, begin+count) in order.
LabeledDataset slice(const LabeledDataset& ds, Index begin, Index count);

}  // namespace relulab

#include "relulab/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace relulab {

void validate_dataset(const LabeledDataset& ds) {
  if (ds.labels.size() != ds.x.rows()) {
    throw std::invalid_argument("dataset: labels length != example count");
  }
  if (ds.num_classes == 0) {
    throw std::invalid_argument("dataset: num_classes must be positive");
  }
  for (Index l : ds.labels) {
    if (l >= ds.num_classes) {
      throw std::invalid_argument("dataset: label " + std::to_string(l) +
                                  " >= num_classes " +
                                  std::to_string(ds.num_classes));
    }
  }
  if (!ds.x.all_finite()) {
    throw std::invalid_argument("dataset: non-finite feature value");
  }
}

namespace {

LabeledDataset take_rows(const LabeledDataset& ds,
                         const std::vector<Index>& rows, SplitTag tag,
                         const std::string& suffix) {
  LabeledDataset out;
  out.x = Matrix(rows.size(), ds.dim());
  out.labels.resize(rows.size());
  out.num_classes = ds.num_classes;
  out.name = ds.name.empty() ? suffix : ds.name + "/" + suffix;
  out.split_tag = tag;
  for (Index i = 0; i < rows.size(); ++i) {
    const auto src = ds.x.row(rows[i]);
    std::copy(src.begin(), src.end(), out.x.row(i).begin());
    out.labels[i] = ds.labels[rows[i]];
  }
  return out;
}

}  // namespace

std::tuple<LabeledDataset, LabeledDataset, LabeledDataset> split(
    const LabeledDataset& ds, const SplitSpec& spec) {
  const Index need = spec.n_train + spec.n_validation + spec.n_test;
  if (need > ds.size()) {
    throw std::invalid_argument("split: requested " + std::to_string(need) +
                                " examples, have " + std::to_string(ds.size()));
  }
  std::vector<Index> perm(ds.size());
  std::iota(perm.begin(), perm.end(), Index{0});
  Rng rng(spec.seed);
  rng.shuffle(perm);

  auto segment = [&](Index begin, Index count) {
    return std::vector<Index>(perm.begin() + begin, perm.begin() + begin + count);
  };
  return {take_rows(ds, segment(0, spec.n_train), SplitTag::train, "train"),
          take_rows(ds, segment(spec.n_train, spec.n_validation),
                    SplitTag::validation, "validation"),
          take_rows(ds, segment(spec.n_train + spec.n_validation, spec.n_test),
                    SplitTag::test, "test")};
}

LabeledDataset add_label_noise(const LabeledDataset& ds, double fraction,
                               Rng& rng) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("add_label_noise: fraction outside [0, 1]");
  }
  if (ds.num_classes < 2 && fraction > 0.0) {
    throw std::invalid_argument("add_label_noise: needs at least 2 classes");
  }
  LabeledDataset out = ds;
  const Index n = ds.size();
  const Index count =
      static_cast<Index>(std::llround(fraction * static_cast<double>(n)));

  // Partial Fisher-Yates: the first `count` slots become the chosen examples.
  std::vector<Index> pool(n);
  std::iota(pool.begin(), pool.end(), Index{0});
  for (Index i = 0; i < count; ++i) {
    const Index j = i + static_cast<Index>(rng.uniform_below(n - i));
    std::swap(pool[i], pool[j]);
  }
  for (Index i = 0; i < count; ++i) {
    const Index idx = pool[i];
    const Index old = out.labels[idx];
    Index pick = static_cast<Index>(rng.uniform_below(ds.num_classes - 1));
    if (pick >= old) ++pick;  // uniform over the other classes
    out.labels[idx] = pick;
  }
  return out;
}

LabeledDataset concat(const std::vector<const LabeledDataset*>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no parts");
  Index n = 0;
  for (const auto* p : parts) {
    if (p->dim() != parts[0]->dim() ||
        p->num_classes != parts[0]->num_classes) {
      throw std::invalid_argument("concat: incompatible parts");
    }
    n += p->size();
  }
  LabeledDataset out;
  out.x = Matrix(n, parts[0]->dim());
  out.labels.reserve(n);
  out.num_classes = parts[0]->num_classes;
  out.name = parts[0]->name;
  Index row = 0;
  for (const auto* p : parts) {
    for (Index i = 0; i < p->size(); ++i, ++row) {
      const auto src = p->x.row(i);
      std::copy(src.begin(), src.end(), out.x.row(row).begin());
      out.labels.push_back(p->labels[i]);
    }
  }
  return out;
}

LabeledDataset slice(const LabeledDataset& ds, Index begin, Index count) {
  if (begin + count > ds.size()) {
    throw std::invalid_argument("slice: range exceeds dataset");
  }
  LabeledDataset out;
  out.x = Matrix(count, ds.dim());
  out.labels.assign(ds.labels.begin() + begin, ds.labels.begin() + begin + count);
  out.num_classes = ds.num_classes;
  out.name = ds.name;
  out.split_tag = ds.split_tag;
  for (Index i = 0; i < count; ++i) {
    const auto src = ds.x.row(begin + i);
    std::copy(src.begin(), src.end(), out.x.row(i).begin());
  }
  return out;
}

}  // namespace relulab

#pragma once

#include <vector>

#include "relulab/dataset.hpp"
#include "relulab/model.hpp"

namespace relulab {

/// Per-class scores with the correct-class index. k >= 2.
struct Scores {
  std::vector<double> s;
  Index correct = 0;
};

enum class RegKind { none, l2_weight_decay, l1_top, group_lasso_top };

struct RegConfig {
  double lambda = 0.0;
  RegKind kind = RegKind::none;
};

/// Truncation kernel: exp(x) for x >= -11, exp(-11)*[x+13]_+^2/4 below.
/// C1 at the seam; identically zero for x <= -13.
double f_trunc(double x);
double df_trunc(double x);

struct LossValueGrad {
  double value = 0.0;
  std::vector<double> dscore;
};

/// Truncated soft-max cross entropy ln sum_i f(s_i - s_c). Nonnegative, and
/// exactly zero when every wrong class trails the correct one by 13 or more.
/// Never exceeds softmax_ce on the same scores, including in floating point.
double truncated_ce_value(const Scores& sc);
LossValueGrad truncated_ce(const Scores& sc);

/// Plain soft-max cross entropy ln sum_i exp(s_i - s_c), max-shifted.
double softmax_ce(const Scores& sc);

/// Regularization penalty value. l1_top requires k = 1; group_lasso_top
/// reduces to it when k = 1.
double penalty(const NetParams& p, const RegConfig& reg);

/// Adds the penalty gradient to g. Supported for none (no-op) and
/// l2_weight_decay (lambda * weights); throws for the l1 kinds.
void add_penalty_gradient(const NetParams& p, const RegConfig& reg,
                          Gradients& g);

/// Index of the largest score, ties broken toward the lowest class index.
Index argmax_class(std::span<const double> y);

/// Fraction of examples whose argmax output differs from the label.
double zero_one_error(const NetParams& p, const LabeledDataset& data);

}  // namespace relulab

#include "relulab/loss.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace relulab {

double f_trunc(double x) {
  if (x >= -11.0) return std::exp(x);
  const double t = x + 13.0;
  if (t <= 0.0) return 0.0;
  return std::exp(-11.0) * t * t * 0.25;
}

double df_trunc(double x) {
  if (x >= -11.0) return std::exp(x);
  const double t = x + 13.0;
  if (t <= 0.0) return 0.0;
  return std::exp(-11.0) * t * 0.5;
}

namespace {

void validate_scores(const Scores& sc) {
  if (sc.s.size() < 2) {
    throw std::invalid_argument("scores: need at least 2 classes");
  }
  if (sc.correct >= sc.s.size()) {
    throw std::invalid_argument("scores: correct index out of range");
  }
}

// Both losses are evaluated as M + log(sum of shifted terms) with the same
// shift M = max_i (s_i - s_c) >= 0. The truncated term is clamped to the
// exponential term (valid since f(x) <= exp(x) pointwise), which makes
// truncated <= softmax hold termwise in floating point, not just in exact
// arithmetic.
struct ShiftedSums {
  double shift = 0.0;
  double exp_sum = 0.0;    // sum exp(delta - shift)
  double trunc_sum = 0.0;  // sum min(f(delta), exp(delta)) * exp(-shift)
};

ShiftedSums shifted_sums(const Scores& sc) {
  const double sc_c = sc.s[sc.correct];
  double shift = 0.0;
  for (double si : sc.s) shift = std::max(shift, si - sc_c);

  ShiftedSums out;
  out.shift = shift;
  const double poly_base = std::exp(-11.0 - shift);
  for (double si : sc.s) {
    const double delta = si - sc_c;
    const double e = std::exp(delta - shift);
    double t;
    if (delta >= -11.0) {
      t = e;
    } else {
      const double z = delta + 13.0;
      t = z <= 0.0 ? 0.0 : std::min(poly_base * z * z * 0.25, e);
    }
    out.exp_sum += e;
    out.trunc_sum += t;
  }
  return out;
}

}  // namespace

double truncated_ce_value(const Scores& sc) {
  validate_scores(sc);
  const ShiftedSums sums = shifted_sums(sc);
  return sums.shift + std::log(sums.trunc_sum);
}

LossValueGrad truncated_ce(const Scores& sc) {
  validate_scores(sc);
  const ShiftedSums sums = shifted_sums(sc);
  LossValueGrad out;
  out.value = sums.shift + std::log(sums.trunc_sum);
  out.dscore.assign(sc.s.size(), 0.0);

  const double sc_c = sc.s[sc.correct];
  const double poly_base = std::exp(-11.0 - sums.shift);
  double total = 0.0;
  for (Index j = 0; j < sc.s.size(); ++j) {
    const double delta = sc.s[j] - sc_c;
    double fp;  // f'(delta) * exp(-shift)
    if (delta >= -11.0) {
      fp = std::exp(delta - sums.shift);
    } else {
      const double z = delta + 13.0;
      fp = z <= 0.0 ? 0.0 : poly_base * z * 0.5;
    }
    out.dscore[j] = fp / sums.trunc_sum;
    total += fp;
  }
  out.dscore[sc.correct] -= total / sums.trunc_sum;
  return out;
}

double softmax_ce(const Scores& sc) {
  validate_scores(sc);
  const ShiftedSums sums = shifted_sums(sc);
  return sums.shift + std::log(sums.exp_sum);
}

double penalty(const NetParams& p, const RegConfig& reg) {
  if (reg.lambda < 0.0) {
    throw std::invalid_argument("penalty: lambda must be nonnegative");
  }
  if (reg.lambda == 0.0 || reg.kind == RegKind::none) return 0.0;
  switch (reg.kind) {
    case RegKind::l2_weight_decay: {
      double sq = 0.0;
      for (double w : p.u.data()) sq += w * w;
      for (double w : p.v.data()) sq += w * w;
      return 0.5 * reg.lambda * sq;
    }
    case RegKind::l1_top: {
      if (p.k != 1) {
        throw std::invalid_argument("penalty: l1_top requires k = 1");
      }
      double acc = 0.0;
      for (double w : p.v.data()) acc += std::abs(w);
      return reg.lambda * acc;
    }
    case RegKind::group_lasso_top: {
      double acc = 0.0;
      for (Index h = 0; h < p.hidden; ++h) acc += norm2(p.v.row(h));
      return reg.lambda * acc;
    }
    case RegKind::none:
      return 0.0;
  }
  return 0.0;
}

void add_penalty_gradient(const NetParams& p, const RegConfig& reg,
                          Gradients& g) {
  if (reg.kind == RegKind::none || reg.lambda == 0.0) return;
  if (reg.kind != RegKind::l2_weight_decay) {
    throw std::invalid_argument(
        "add_penalty_gradient: only l2_weight_decay has a gradient here");
  }
  for (Index i = 0; i < g.du.size(); ++i) {
    g.du.data()[i] += reg.lambda * p.u.data()[i];
  }
  for (Index i = 0; i < g.dv.size(); ++i) {
    g.dv.data()[i] += reg.lambda * p.v.data()[i];
  }
}

Index argmax_class(std::span<const double> y) {
  Index best = 0;
  for (Index j = 1; j < y.size(); ++j) {
    if (y[j] > y[best]) best = j;
  }
  return best;
}

double zero_one_error(const NetParams& p, const LabeledDataset& data) {
  if (data.dim() != p.d || data.num_classes != p.k) {
    throw std::invalid_argument("zero_one_error: dataset does not match net");
  }
  if (data.size() == 0) return 0.0;
  Index wrong = 0;
  for (Index t = 0; t < data.size(); ++t) {
    const auto y = forward(p, data.x.row(t));
    if (argmax_class(y) != data.labels[t]) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(data.size());
}

}  // namespace relulab

#include "relulab/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace relulab {

OptState make_opt_state(const NetParams& p, double step, double momentum,
                        Index batch_size) {
  if (step <= 0.0) {
    throw std::invalid_argument("make_opt_state: step must be positive");
  }
  if (momentum < 0.0 || momentum >= 1.0) {
    throw std::invalid_argument("make_opt_state: momentum must be in [0,1)");
  }
  if (batch_size == 0) {
    throw std::invalid_argument("make_opt_state: batch_size must be positive");
  }
  OptState st;
  st.step = step;
  st.momentum = momentum;
  st.step0 = step;
  st.momentum0 = momentum;
  st.batch_size = batch_size;
  st.velocity_u = Matrix(p.hidden, p.d);
  st.velocity_v = Matrix(p.hidden, p.k);
  return st;
}

void sgd_step(NetParams& p, const Gradients& g, OptState& st) {
  if (g.du.rows() != p.u.rows() || g.du.cols() != p.u.cols() ||
      g.dv.rows() != p.v.rows() || g.dv.cols() != p.v.cols() ||
      st.velocity_u.rows() != p.u.rows() ||
      st.velocity_u.cols() != p.u.cols() ||
      st.velocity_v.rows() != p.v.rows() ||
      st.velocity_v.cols() != p.v.cols()) {
    throw std::invalid_argument("sgd_step: shape mismatch");
  }
  auto& vu = st.velocity_u.data();
  auto& vv = st.velocity_v.data();
  const auto& du = g.du.data();
  const auto& dv = g.dv.data();
  auto& u = p.u.data();
  auto& v = p.v.data();
  for (Index i = 0; i < u.size(); ++i) {
    vu[i] = st.momentum * vu[i] - st.step * du[i];
    u[i] += vu[i];
  }
  for (Index i = 0; i < v.size(); ++i) {
    vv[i] = st.momentum * vv[i] - st.step * dv[i];
    v[i] += vv[i];
  }
}

void end_epoch(OptState& st) {
  st.epoch += 1;
  const double t = static_cast<double>(st.epoch);
  st.step = st.step0 * std::pow(0.99, t);
  st.momentum = std::min(0.9, st.momentum0 + t / 50.0);
}

EvalResult evaluate(const NetParams& p, const LabeledDataset& data) {
  if (data.dim() != p.d || data.num_classes != p.k) {
    throw std::invalid_argument("evaluate: dataset does not match net");
  }
  EvalResult out;
  if (data.size() == 0) return out;
  Scores sc;
  Index wrong = 0;
  double loss_sum = 0.0;
  for (Index t = 0; t < data.size(); ++t) {
    sc.s = forward(p, data.x.row(t));
    sc.correct = data.labels[t];
    loss_sum += truncated_ce_value(sc);
    if (argmax_class(sc.s) != data.labels[t]) ++wrong;
  }
  out.mean_loss = loss_sum / static_cast<double>(data.size());
  out.error = static_cast<double>(wrong) / static_cast<double>(data.size());
  return out;
}

TrainResult train(const NetParams& init, const LabeledDataset& train_data,
                  const LabeledDataset* validation, const SgdConfig& opt,
                  const RegConfig& reg, const StoppingRule& stop, Rng& rng) {
  const Index n = train_data.size();
  if (n == 0) throw std::invalid_argument("train: empty training set");
  if (opt.batch_size > n) {
    throw std::invalid_argument("train: batch size exceeds training set");
  }
  if (train_data.dim() != init.d || train_data.num_classes != init.k) {
    throw std::invalid_argument("train: dataset does not match net");
  }
  if (validation != nullptr &&
      (validation->dim() != init.d || validation->num_classes != init.k)) {
    throw std::invalid_argument("train: validation set does not match net");
  }

  TrainResult result;
  result.params = init;
  OptState st = make_opt_state(init, opt.step, opt.momentum, opt.batch_size);

  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), Index{0});

  Gradients grads;
  grads.du = Matrix(init.hidden, init.d);
  grads.dv = Matrix(init.hidden, init.k);
  Scores sc;

  double best_validation = std::numeric_limits<double>::infinity();

  for (Index epoch = 1; epoch <= stop.max_epochs; ++epoch) {
    const double epoch_step = st.step;
    const double epoch_momentum = st.momentum;
    rng.shuffle(order);

    for (Index begin = 0; begin < n; begin += st.batch_size) {
      const Index count = std::min(st.batch_size, n - begin);
      zero_gradients(grads);
      double batch_loss = 0.0;
      for (Index b = 0; b < count; ++b) {
        const Index t = order[begin + b];
        sc.s = forward(result.params, train_data.x.row(t));
        sc.correct = train_data.labels[t];
        LossValueGrad lv = truncated_ce(sc);
        batch_loss += lv.value;
        backward_accumulate(result.params, train_data.x.row(t), lv.dscore,
                            grads);
      }
      if (!std::isfinite(batch_loss)) {
        throw TrainingDiverged(
            "train: non-finite loss at epoch " + std::to_string(epoch), epoch);
      }
      const double scale = 1.0 / static_cast<double>(count);
      for (double& g : grads.du.data()) g *= scale;
      for (double& g : grads.dv.data()) g *= scale;
      add_penalty_gradient(result.params, reg, grads);
      sgd_step(result.params, grads, st);
    }

    if (!result.params.u.all_finite() || !result.params.v.all_finite()) {
      throw TrainingDiverged(
          "train: non-finite parameters at epoch " + std::to_string(epoch),
          epoch);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.step = epoch_step;
    stats.momentum = epoch_momentum;
    const EvalResult train_eval = evaluate(result.params, train_data);
    stats.mean_loss = train_eval.mean_loss;
    stats.objective = train_eval.mean_loss + penalty(result.params, reg);
    stats.train_error = train_eval.error;
    if (validation != nullptr) {
      stats.validation_error = evaluate(result.params, *validation).error;
      if (stats.validation_error < best_validation) {
        best_validation = stats.validation_error;
        result.best_params = result.params;
        result.best_epoch = epoch;
      }
    } else {
      stats.validation_error = std::numeric_limits<double>::quiet_NaN();
    }
    result.history.push_back(stats);

    if (stats.train_error == 0.0 && stats.mean_loss < stop.target_loss) {
      result.reached_target = true;
      break;
    }
    end_epoch(st);
  }

  if (validation == nullptr) {
    result.best_params = result.params;
    result.best_epoch = result.history.size();
  }
  return result;
}

}  // namespace relulab

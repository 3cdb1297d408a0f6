#include "relulab/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "relulab/loss.hpp"

namespace relulab {

Gradients zero_gradients(const NetParams& p) {
  return {Matrix(p.hidden, p.d), Matrix(p.hidden, p.k)};
}

void zero_gradients(Gradients& g) {
  std::fill(g.du.data().begin(), g.du.data().end(), 0.0);
  std::fill(g.dv.data().begin(), g.dv.data().end(), 0.0);
}

std::vector<double> forward(const NetParams& p, std::span<const double> x) {
  if (x.size() != p.d) {
    throw std::invalid_argument("forward: input length != d");
  }
  std::vector<double> y(p.k, 0.0);
  for (Index h = 0; h < p.hidden; ++h) {
    const double pre = dot(p.u.row(h), x);
    if (pre <= 0.0) continue;
    const auto vrow = p.v.row(h);
    for (Index j = 0; j < p.k; ++j) y[j] += vrow[j] * pre;
  }
  return y;
}

std::vector<double> preactivations(const NetParams& p,
                                   std::span<const double> x) {
  if (x.size() != p.d) {
    throw std::invalid_argument("preactivations: input length != d");
  }
  std::vector<double> pre(p.hidden);
  for (Index h = 0; h < p.hidden; ++h) pre[h] = dot(p.u.row(h), x);
  return pre;
}

void backward_accumulate(const NetParams& p, std::span<const double> x,
                         std::span<const double> dloss_dy, Gradients& acc) {
  if (x.size() != p.d || dloss_dy.size() != p.k) {
    throw std::invalid_argument("backward: dimension mismatch");
  }
  for (Index h = 0; h < p.hidden; ++h) {
    const double pre = dot(p.u.row(h), x);
    if (pre <= 0.0) continue;  // inactive unit, subgradient 0 at the kink
    const auto vrow = p.v.row(h);
    auto dvrow = acc.dv.row(h);
    double dz = 0.0;
    for (Index j = 0; j < p.k; ++j) {
      dz += vrow[j] * dloss_dy[j];
      dvrow[j] += pre * dloss_dy[j];
    }
    auto durow = acc.du.row(h);
    for (Index i = 0; i < p.d; ++i) durow[i] += dz * x[i];
  }
}

Gradients backward(const NetParams& p, std::span<const double> x,
                   std::span<const double> dloss_dy) {
  Gradients g = zero_gradients(p);
  backward_accumulate(p, x, dloss_dy, g);
  return g;
}

NetParams init_net(Index d, Index hidden, Index k, double sigma, Rng& rng) {
  if (hidden == 0 || d == 0 || k == 0) {
    throw std::invalid_argument("init_net: dimensions must be positive");
  }
  NetParams p;
  p.d = d;
  p.hidden = hidden;
  p.k = k;
  p.u = Matrix(hidden, d, gaussian_vector(rng, hidden * d, sigma));
  p.v = Matrix(hidden, k, gaussian_vector(rng, hidden * k, sigma));
  return p;
}

namespace {

void require_single_output(const NetParams& p, const char* what) {
  if (p.k != 1) {
    throw std::invalid_argument(std::string(what) + ": requires k = 1");
  }
}

}  // namespace

NetParams balance(const NetParams& p) {
  require_single_output(p, "balance");
  NetParams out = p;
  for (Index h = 0; h < p.hidden; ++h) {
    const double unorm = norm2(p.u.row(h));
    const double v = p.v(h, 0);
    if (unorm == 0.0 || v == 0.0) {
      // Unit contributes nothing; the infimum of its penalty is 0.
      std::fill(out.u.row(h).begin(), out.u.row(h).end(), 0.0);
      out.v(h, 0) = 0.0;
      continue;
    }
    const double up = std::sqrt(std::abs(v) / unorm);
    const double down = std::sqrt(unorm / std::abs(v));
    auto urow = out.u.row(h);
    for (Index i = 0; i < p.d; ++i) urow[i] = up * p.u(h, i);
    out.v(h, 0) = down * v;
  }
  return out;
}

NetParams normalize_to_unit(const NetParams& p) {
  require_single_output(p, "normalize_to_unit");
  NetParams out = p;
  for (Index h = 0; h < p.hidden; ++h) {
    const double unorm = norm2(p.u.row(h));
    if (unorm == 0.0) {
      out.v(h, 0) = 0.0;  // dead unit, keep the l1 identity exact
      continue;
    }
    auto urow = out.u.row(h);
    for (Index i = 0; i < p.d; ++i) urow[i] = p.u(h, i) / unorm;
    out.v(h, 0) = p.v(h, 0) * unorm;
  }
  return out;
}

void save_checkpoint(const NetParams& p, const std::filesystem::path& path) {
  nlohmann::json j;
  j["format"] = "relulab-net-v1";
  j["d"] = p.d;
  j["hidden"] = p.hidden;
  j["k"] = p.k;
  j["u"] = p.u.data();
  j["v"] = p.v.data();
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("save_checkpoint: cannot open " + path.string());
  }
  out << j.dump(2) << '\n';
}

NetParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("load_checkpoint: cannot open " + path.string());
  }
  nlohmann::json j = nlohmann::json::parse(in);
  if (j.value("format", "") != std::string("relulab-net-v1")) {
    throw std::runtime_error("load_checkpoint: unknown format");
  }
  NetParams p;
  p.d = j.at("d").get<Index>();
  p.hidden = j.at("hidden").get<Index>();
  p.k = j.at("k").get<Index>();
  p.u = Matrix(p.hidden, p.d, j.at("u").get<std::vector<double>>());
  p.v = Matrix(p.hidden, p.k, j.at("v").get<std::vector<double>>());
  if (!p.u.all_finite() || !p.v.all_finite()) {
    throw std::runtime_error("load_checkpoint: non-finite weight");
  }
  return p;
}

namespace {

double composite_loss(const NetParams& p, std::span<const double> x,
                      Index label) {
  return truncated_ce_value({forward(p, x), label});
}

}  // namespace

double gradcheck_max_rel_error(std::uint64_t seed, Index pairs, double h) {
  Rng rng(seed);
  double worst = 0.0;
  for (Index trial = 0; trial < pairs; ++trial) {
    NetParams p;
    std::vector<double> x;
    Index label = 0;
    // Resample until the instance is away from every ReLU kink and from the
    // loss branch points at score gaps of -11 and -13.
    for (;;) {
      const Index d = 3 + rng.uniform_below(6);
      const Index hidden = 2 + rng.uniform_below(9);
      const Index k = 2 + rng.uniform_below(4);
      p = init_net(d, hidden, k, 0.4, rng);
      x = gaussian_vector(rng, d, 1.0);
      label = static_cast<Index>(rng.uniform_below(k));
      const auto pre = preactivations(p, x);
      bool ok = std::all_of(pre.begin(), pre.end(),
                            [](double a) { return std::abs(a) > 1e-3; });
      const auto y = forward(p, x);
      for (Index j = 0; ok && j < p.k; ++j) {
        const double delta = y[j] - y[label];
        ok = std::abs(delta + 11.0) > 1e-2 && std::abs(delta + 13.0) > 1e-2;
      }
      if (ok) break;
    }

    const auto lvg = truncated_ce({forward(p, x), label});
    const Gradients analytic = backward(p, x, lvg.dscore);

    // Error per pair is ||analytic - fd|| / max(||analytic||, ||fd||) over the
    // full flattened gradient. Coordinate-wise quotients are invalid at this
    // step size: roundoff in the loss contributes ~eps*|loss|/(2h) absolute
    // noise to every difference, which dominates entries whose true gradient
    // is small relative to the loss scale.
    double diff_sq = 0.0;
    double a_sq = 0.0;
    double fd_sq = 0.0;
    auto check = [&](Matrix& param, const Matrix& grad, Index r, Index c) {
      const double kept = param(r, c);
      param(r, c) = kept + h;
      const double up = composite_loss(p, x, label);
      param(r, c) = kept - h;
      const double down = composite_loss(p, x, label);
      param(r, c) = kept;
      const double fd = (up - down) / (2.0 * h);
      const double a = grad(r, c);
      diff_sq += (a - fd) * (a - fd);
      a_sq += a * a;
      fd_sq += fd * fd;
    };
    for (Index r = 0; r < p.hidden; ++r) {
      for (Index c = 0; c < p.d; ++c) check(p.u, analytic.du, r, c);
      for (Index c = 0; c < p.k; ++c) check(p.v, analytic.dv, r, c);
    }
    const double scale = std::sqrt(std::max(a_sq, fd_sq));
    if (scale < 1e-12) continue;  // zero gradient on both sides
    worst = std::max(worst, std::sqrt(diff_sq) / scale);
  }
  return worst;
}

}  // namespace relulab

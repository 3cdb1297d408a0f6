#include "relulab/convexnn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "relulab/loss.hpp"

namespace relulab {

std::string library_scheme_name(LibraryScheme s) {
  switch (s) {
    case LibraryScheme::gaussian_normalized: return "gaussian_normalized";
    case LibraryScheme::grid_sphere_2d: return "grid_sphere_2d";
  }
  throw std::logic_error("library_scheme_name: unknown scheme");
}

LibraryScheme parse_library_scheme(const std::string& name) {
  if (name == "gaussian_normalized") return LibraryScheme::gaussian_normalized;
  if (name == "grid_sphere_2d") return LibraryScheme::grid_sphere_2d;
  throw std::invalid_argument("unknown library scheme: " + name);
}

namespace {

// Library rows must satisfy |u| in [1 - 1e-12, 1]. One renormalization can
// land a few ulps above 1; nudge down deterministically until it does not.
void clamp_row_norm(std::span<double> row) {
  for (int pass = 0; pass < 4; ++pass) {
    const double nrm = norm2(row);
    if (nrm <= 1.0) return;
    for (double& e : row) e /= nrm;
  }
  for (double& e : row) e *= 1.0 - 1e-13;
}

}  // namespace

UnitLibrary sample_library(Index d, Index m, LibraryScheme scheme, Rng& rng) {
  if (m == 0) throw std::invalid_argument("sample_library: m must be >= 1");
  if (d == 0) throw std::invalid_argument("sample_library: d must be >= 1");
  UnitLibrary lib;
  lib.d = d;
  lib.units = Matrix(m, d);
  switch (scheme) {
    case LibraryScheme::gaussian_normalized: {
      for (Index i = 0; i < m; ++i) {
        auto row = lib.units.row(i);
        double nrm = 0.0;
        do {
          for (Index j = 0; j < d; ++j) row[j] = rng.gaussian(1.0);
          nrm = norm2(row);
        } while (nrm == 0.0);
        for (Index j = 0; j < d; ++j) row[j] /= nrm;
        clamp_row_norm(row);
      }
      break;
    }
    case LibraryScheme::grid_sphere_2d: {
      if (d != 2) {
        throw std::invalid_argument("sample_library: grid scheme needs d = 2");
      }
      // Angle i/m divides exactly the same as (2i)/(2m), so an m-point grid
      // is a bitwise subset of the 2m-point grid.
      const double two_pi = 8.0 * std::atan(1.0);
      for (Index i = 0; i < m; ++i) {
        const double angle =
            two_pi * (static_cast<double>(i) / static_cast<double>(m));
        auto row = lib.units.row(i);
        row[0] = std::cos(angle);
        row[1] = std::sin(angle);
        const double nrm = norm2(row);
        row[0] /= nrm;
        row[1] /= nrm;
        clamp_row_norm(row);
      }
      break;
    }
  }
  return lib;
}

Matrix relu_features(const UnitLibrary& lib, const Matrix& x) {
  if (x.cols() != lib.d) {
    throw std::invalid_argument("relu_features: dimension mismatch");
  }
  Matrix f(x.rows(), lib.size());
  for (Index t = 0; t < x.rows(); ++t) {
    const auto xt = x.row(t);
    auto ft = f.row(t);
    for (Index i = 0; i < lib.size(); ++i) {
      ft[i] = std::max(dot(lib.units.row(i), xt), 0.0);
    }
  }
  return f;
}

namespace {

double soft_threshold(double x, double tau) {
  if (x > tau) return x - tau;
  if (x < -tau) return x + tau;
  return 0.0;
}

double l1_norm(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += std::abs(x);
  return acc;
}

// max_i violation of the subgradient conditions at v, given the smooth-part
// gradient g.
double kkt_residual_at(std::span<const double> v, std::span<const double> g,
                       double lambda) {
  double worst = 0.0;
  for (Index i = 0; i < v.size(); ++i) {
    const double r = v[i] == 0.0
                         ? std::max(std::abs(g[i]) - lambda, 0.0)
                         : std::abs(g[i] + lambda * (v[i] > 0 ? 1.0 : -1.0));
    worst = std::max(worst, r);
  }
  return worst;
}

// Largest eigenvalue of features^T features, slightly inflated; falls back
// to the Frobenius bound when the iteration degenerates.
double lipschitz_estimate(const Matrix& features, const Matrix& features_t) {
  const Index m = features.cols();
  const double fro = frobenius_norm(features);
  const double fro_bound = fro * fro;
  if (fro_bound == 0.0) return 0.0;
  std::vector<double> w(m, 1.0 / std::sqrt(static_cast<double>(m)));
  double est = 0.0;
  for (Index it = 0; it < 200; ++it) {
    std::vector<double> bw = matvec(features_t, matvec(features, w));
    const double nrm = norm2(bw);
    if (nrm <= fro_bound * 1e-18) {
      // w sits in (numerically) the null space; perturb deterministically.
      for (Index i = 0; i < m; ++i) w[i] = 1.0 + static_cast<double>(i + 1);
      const double wn = norm2(w);
      for (double& x : w) x /= wn;
      est = 0.0;
      continue;
    }
    const double prev = est;
    est = nrm;
    for (Index i = 0; i < m; ++i) w[i] = bw[i] / nrm;
    if (it > 3 && std::abs(est - prev) <= 1e-10 * est) break;
  }
  if (est <= 0.0) return fro_bound;
  return std::min(est * 1.01, fro_bound);
}

}  // namespace

ConvexNNSolution solve_l1(const Matrix& features, std::span<const double> y,
                          double lambda, double tol, Index max_iter) {
  const Index n = features.rows();
  const Index m = features.cols();
  if (y.size() != n) {
    throw std::invalid_argument("solve_l1: target length != feature rows");
  }
  if (lambda < 0.0) {
    throw std::invalid_argument("solve_l1: lambda must be nonnegative");
  }
  if (tol <= 0.0) {
    throw std::invalid_argument("solve_l1: tol must be positive");
  }
  const Matrix features_t = transpose(features);

  auto smooth_at = [&](const std::vector<double>& v) {
    std::vector<double> r = matvec(features, v);
    for (Index t = 0; t < n; ++t) r[t] -= y[t];
    return r;  // residual vector
  };
  auto half_sq = [](const std::vector<double>& r) {
    double acc = 0.0;
    for (double x : r) acc += x * x;
    return 0.5 * acc;
  };

  ConvexNNSolution sol;
  sol.v.assign(m, 0.0);

  // v = 0 may already satisfy the certificate (always when
  // lambda >= ||features^T y||_inf); report it without iterating.
  {
    std::vector<double> r0 = smooth_at(sol.v);
    std::vector<double> g0 = matvec(features_t, r0);
    sol.kkt_residual = kkt_residual_at(sol.v, g0, lambda);
    sol.objective = half_sq(r0);
    if (sol.kkt_residual <= tol) {
      sol.converged = true;
      return sol;
    }
  }

  double lip = lipschitz_estimate(features, features_t);
  if (lip <= 0.0) lip = 1.0;

  std::vector<double> v = sol.v;
  std::vector<double> v_prev = v;
  double t_momentum = 1.0;
  double obj = sol.objective;  // objective at v (lambda term is 0 at start)

  std::vector<double> z(m), cand(m);

  // One backtracked proximal step from `base`; returns the candidate's
  // objective and leaves the candidate in `cand`. Doubles lip until the
  // quadratic upper bound holds, which keeps the objective monotone.
  auto prox_step = [&](const std::vector<double>& base) {
    std::vector<double> rb = smooth_at(base);
    std::vector<double> gb = matvec(features_t, rb);
    const double fb = half_sq(rb);
    for (;;) {
      const double inv = 1.0 / lip;
      for (Index i = 0; i < m; ++i) {
        cand[i] = soft_threshold(base[i] - inv * gb[i], lambda * inv);
      }
      std::vector<double> rc = smooth_at(cand);
      const double fc = half_sq(rc);
      double lin = 0.0, sq = 0.0;
      for (Index i = 0; i < m; ++i) {
        const double diff = cand[i] - base[i];
        lin += gb[i] * diff;
        sq += diff * diff;
      }
      if (fc <= fb + lin + 0.5 * lip * sq + 1e-15 * std::abs(fb) ||
          lip >= 1e300) {
        return fc + lambda * l1_norm(cand);
      }
      lip *= 2.0;
    }
  };

  for (Index iter = 1; iter <= max_iter; ++iter) {
    const double t_next =
        0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_momentum * t_momentum));
    const double beta = (t_momentum - 1.0) / t_next;
    for (Index i = 0; i < m; ++i) {
      z[i] = v[i] + beta * (v[i] - v_prev[i]);
    }
    double cand_obj = prox_step(z);
    if (cand_obj > obj) {
      // Acceleration overshot; restart the momentum from the last iterate.
      cand_obj = prox_step(v);
      t_momentum = 1.0;
      if (cand_obj > obj) {
        // Plain step cannot improve either: numerically at the floor.
        cand = v;
        cand_obj = obj;
      }
    } else {
      t_momentum = t_next;
    }
    v_prev = v;
    v = cand;
    obj = cand_obj;

    std::vector<double> r = smooth_at(v);
    std::vector<double> g = matvec(features_t, r);
    sol.kkt_residual = kkt_residual_at(v, g, lambda);
    sol.iterations = iter;
    if (sol.kkt_residual <= tol) {
      sol.converged = true;
      break;
    }
  }
  sol.v = v;
  sol.objective = obj;
  return sol;
}

ConvexNNSolution solve_l1(const UnitLibrary& lib, const Matrix& x,
                          std::span<const double> y, double lambda, double tol,
                          Index max_iter) {
  return solve_l1(relu_features(lib, x), y, lambda, tol, max_iter);
}

double squared_loss_sum(const NetParams& p, const Matrix& x,
                        std::span<const double> y) {
  if (p.k != 1) {
    throw std::invalid_argument("squared_loss_sum: single-output nets only");
  }
  if (x.rows() != y.size() || x.cols() != p.d) {
    throw std::invalid_argument("squared_loss_sum: shape mismatch");
  }
  double acc = 0.0;
  for (Index t = 0; t < x.rows(); ++t) {
    const double res = forward(p, x.row(t))[0] - y[t];
    acc += res * res;
  }
  return 0.5 * acc;
}

double weight_decay_objective(const NetParams& p, const Matrix& x,
                              std::span<const double> y, double lambda) {
  RegConfig reg;
  reg.lambda = lambda;
  reg.kind = RegKind::l2_weight_decay;
  return squared_loss_sum(p, x, y) + penalty(p, reg);
}

double l1_form_objective(const NetParams& p, const Matrix& x,
                         std::span<const double> y, double lambda) {
  RegConfig reg;
  reg.lambda = lambda;
  reg.kind = RegKind::l1_top;
  return squared_loss_sum(p, x, y) + penalty(p, reg);
}

double rescaling_gap(const NetParams& p, const Matrix& x,
                     std::span<const double> y, double lambda) {
  // Balance first: the half-sum penalty meets its lower bound Sum ||u||*|v|
  // only there, and that bound is what the l1 form reads off.
  const NetParams balanced = balance(p);
  const double a = weight_decay_objective(balanced, x, y, lambda);
  const double b =
      l1_form_objective(normalize_to_unit(balanced), x, y, lambda);
  const double scale = std::max({std::abs(a), std::abs(b), 1e-300});
  return std::abs(a - b) / scale;
}

LocalFitResult fit_weight_decay_regression(const Matrix& x,
                                           std::span<const double> y, Index h,
                                           double lambda, Rng& rng,
                                           Index restarts, Index max_iters) {
  if (restarts == 0) {
    throw std::invalid_argument("fit_weight_decay_regression: restarts >= 1");
  }
  RegConfig reg;
  reg.lambda = lambda;
  reg.kind = RegKind::l2_weight_decay;

  LocalFitResult best;
  best.objective = std::numeric_limits<double>::infinity();

  for (Index run = 0; run < restarts; ++run) {
    Rng init_rng = rng.fork(run);
    NetParams p = init_net(x.cols(), h, 1, 0.3, init_rng);
    double obj = weight_decay_objective(p, x, y, lambda);
    double step = 0.05;
    Gradients g = zero_gradients(p);
    std::vector<double> dy(1);
    Index iters = 0;

    for (Index iter = 0; iter < max_iters; ++iter) {
      zero_gradients(g);
      for (Index t = 0; t < x.rows(); ++t) {
        dy[0] = forward(p, x.row(t))[0] - y[t];
        backward_accumulate(p, x.row(t), dy, g);
      }
      add_penalty_gradient(p, reg, g);

      bool moved = false;
      while (step >= 1e-16) {
        NetParams cand = p;
        for (Index i = 0; i < cand.u.size(); ++i) {
          cand.u.data()[i] -= step * g.du.data()[i];
        }
        for (Index i = 0; i < cand.v.size(); ++i) {
          cand.v.data()[i] -= step * g.dv.data()[i];
        }
        const double cobj = weight_decay_objective(cand, x, y, lambda);
        if (cobj <= obj) {
          p = std::move(cand);
          obj = cobj;
          step = std::min(step * 1.25, 1.0);
          moved = true;
          break;
        }
        step *= 0.5;
      }
      iters = iter + 1;
      if (!moved) break;  // no descent direction at any representable step
    }
    if (obj < best.objective) {
      best.params = p;
      best.objective = obj;
      best.iterations = iters;
    }
  }
  return best;
}

EquivalenceReport equivalence_check(const Matrix& x, std::span<const double> y,
                                    Index h, double lambda,
                                    std::span<const Index> library_sizes,
                                    Rng& rng) {
  if (h <= x.rows()) {
    throw std::invalid_argument(
        "equivalence_check: needs more units than examples");
  }
  if (library_sizes.empty()) {
    throw std::invalid_argument("equivalence_check: no library sizes");
  }
  const Index d = x.cols();

  Rng fit_rng = rng.fork(0x66697472);
  LocalFitResult fit =
      fit_weight_decay_regression(x, y, h, lambda, fit_rng);

  EquivalenceReport report;
  report.identity_gap = rescaling_gap(fit.params, x, y, lambda);
  const NetParams converted = normalize_to_unit(balance(fit.params));
  report.j_local = l1_form_objective(converted, x, y, lambda);

  // Non-grid dictionaries are drawn once at the largest size and truncated,
  // so smaller libraries are prefixes and the optima are monotone.
  const Index max_m =
      *std::max_element(library_sizes.begin(), library_sizes.end());
  UnitLibrary master;
  if (d != 2) {
    Rng lib_rng = rng.fork(0x6c696272);
    master = sample_library(d, max_m, LibraryScheme::gaussian_normalized,
                            lib_rng);
  }

  for (const Index m : library_sizes) {
    UnitLibrary lib;
    if (d == 2) {
      Rng unused(0);
      lib = sample_library(2, m, LibraryScheme::grid_sphere_2d, unused);
    } else {
      lib.d = d;
      lib.units = Matrix(m, d);
      for (Index i = 0; i < m; ++i) {
        const auto src = master.units.row(i);
        std::copy(src.begin(), src.end(), lib.units.row(i).begin());
      }
    }
    const ConvexNNSolution sol = solve_l1(lib, x, y, lambda, 1e-10, 200000);
    report.library_sizes.push_back(m);
    report.j_m.push_back(sol.objective);
    report.gap.push_back(sol.objective - report.j_local);
  }
  return report;
}

double trace_norm(const Matrix& w) {
  const Svd dec = svd(w);
  double acc = 0.0;
  for (double s : dec.sigma) acc += s;
  return acc;
}

double factorization_penalty(const Matrix& u, const Matrix& v) {
  const double fu = frobenius_norm(u);
  const double fv = frobenius_norm(v);
  return 0.5 * (fu * fu + fv * fv);
}

}  // namespace relulab

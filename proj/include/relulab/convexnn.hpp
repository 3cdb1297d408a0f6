#pragma once

#include <span>
#include <string>
#include <vector>

#include "relulab/model.hpp"
#include "relulab/numerics.hpp"

namespace relulab {

/// Fixed dictionary of candidate hidden units, one unit-norm row each.
struct UnitLibrary {
  Index d = 0;
  Matrix units;  // m x d, every row unit-norm
  Index size() const { return units.rows(); }
};

enum class LibraryScheme { gaussian_normalized, grid_sphere_2d };

std::string library_scheme_name(LibraryScheme s);
LibraryScheme parse_library_scheme(const std::string& name);

/// m unit vectors. gaussian_normalized draws N(0, I) rows and normalizes;
/// grid_sphere_2d (d = 2 only) places angles 2*pi*i/m, i = 0..m-1, so the
/// m-point grid is a bitwise subset of the 2m-point grid.
UnitLibrary sample_library(Index d, Index m, LibraryScheme scheme, Rng& rng);

/// Feature matrix F[t,i] = max(<unit_i, x_t>, 0).
Matrix relu_features(const UnitLibrary& lib, const Matrix& x);

/// Minimizer report for
///   F(v) = (1/2) * sum_t (<f_t, v> - y_t)^2 + lambda * sum_i |v_i|.
/// kkt_residual is the largest coordinate-wise violation of the
/// subgradient conditions: |g_i| <= lambda where v_i = 0 and
/// g_i + lambda*sign(v_i) = 0 elsewhere, with g the smooth-part gradient.
struct ConvexNNSolution {
  std::vector<double> v;
  double objective = 0.0;
  double kkt_residual = 0.0;
  Index iterations = 0;
  bool converged = false;
};

/// Accelerated proximal gradient (soft-thresholding) with a function-value
/// safeguard: the objective sequence is non-increasing, acceleration
/// restarts whenever it would overshoot. Starts at v = 0 and returns
/// immediately when v = 0 is already optimal. A run that exhausts max_iter
/// with kkt_residual > tol comes back with converged = false.
ConvexNNSolution solve_l1(const Matrix& features, std::span<const double> y,
                          double lambda, double tol = 1e-8,
                          Index max_iter = 100000);

ConvexNNSolution solve_l1(const UnitLibrary& lib, const Matrix& x,
                          std::span<const double> y, double lambda,
                          double tol = 1e-8, Index max_iter = 100000);

// ---------------------------------------------------------------------------
// Objective forms for single-output networks under the squared loss.
// fit(p) = (1/2) * sum_t (forward(p, x_t) - y_t)^2

double squared_loss_sum(const NetParams& p, const Matrix& x,
                        std::span<const double> y);

/// fit(p) + (lambda/2) * sum_h (||u_h||^2 + v_h^2)
double weight_decay_objective(const NetParams& p, const Matrix& x,
                              std::span<const double> y, double lambda);

/// fit(p) + lambda * sum_h |v_h|. Meaningful when rows of u are unit-norm
/// (after normalize_to_unit); the value is computed as stated regardless.
double l1_form_objective(const NetParams& p, const Matrix& x,
                         std::span<const double> y, double lambda);

/// Relative gap between weight_decay_objective(balance(p)) and the l1-form
/// objective of normalize_to_unit(balance(p)). Zero in exact arithmetic for
/// every k = 1 network: balancing makes the half-sum penalty meet
/// Sum ||u_h||*|v_h|, and the forward map and that sum survive both
/// transforms unchanged.
double rescaling_gap(const NetParams& p, const Matrix& x,
                     std::span<const double> y, double lambda);

/// Local-search fit of a weight-decay regularized single-output network:
/// full-batch gradient descent on weight_decay_objective with backtracking
/// halving, best of `restarts` runs.
struct LocalFitResult {
  NetParams params;
  double objective = 0.0;
  Index iterations = 0;
};
LocalFitResult fit_weight_decay_regression(const Matrix& x,
                                           std::span<const double> y, Index h,
                                           double lambda, Rng& rng,
                                           Index restarts = 3,
                                           Index max_iters = 20000);

/// Compares the trained weight-decay network against the dictionary
/// solutions over a growing set of libraries (equiangular grids when d = 2,
/// normalized Gaussian dictionaries otherwise).
struct EquivalenceReport {
  double j_local = 0.0;      // l1-form objective of the trained network
  double identity_gap = 0.0; // rescaling_gap of the trained network
  std::vector<Index> library_sizes;
  std::vector<double> j_m;   // dictionary optimum per library
  std::vector<double> gap;   // j_m - j_local
};
EquivalenceReport equivalence_check(const Matrix& x, std::span<const double> y,
                                    Index h, double lambda,
                                    std::span<const Index> library_sizes,
                                    Rng& rng);

// ---------------------------------------------------------------------------
// Trace norm

/// Sum of singular values.
double trace_norm(const Matrix& w);

/// (1/2) * (||u||_F^2 + ||v||_F^2); at least trace_norm(v * u^T), with
/// equality at the balanced factorization u = q*sqrt(s), v = p*sqrt(s) from
/// the SVD w = p * diag(s) * q^T.
double factorization_penalty(const Matrix& u, const Matrix& v);

}  // namespace relulab

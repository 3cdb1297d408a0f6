#include "relulab/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace relulab {

Matrix::Matrix(Index rows, Index cols)
    : rows_(rows), cols_(cols), entries_(rows * cols, 0.0) {}

Matrix::Matrix(Index rows, Index cols, std::vector<double> entries)
    : rows_(rows), cols_(cols), entries_(std::move(entries)) {
  if (entries_.size() != rows * cols) {
    throw std::invalid_argument("Matrix: entries length " +
                                std::to_string(entries_.size()) +
                                " != rows*cols " + std::to_string(rows * cols));
  }
}

Matrix Matrix::identity(Index n) {
  Matrix m(n, n);
  for (Index i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

bool Matrix::all_finite() const {
  return std::all_of(entries_.begin(), entries_.end(),
                     [](double x) { return std::isfinite(x); });
}

std::vector<double> matvec(const Matrix& m, std::span<const double> v) {
  if (v.size() != m.cols()) {
    throw std::invalid_argument("matvec: vector length " +
                                std::to_string(v.size()) + " != cols " +
                                std::to_string(m.cols()));
  }
  std::vector<double> out(m.rows(), 0.0);
  for (Index r = 0; r < m.rows(); ++r) {
    out[r] = dot(m.row(r), v);
  }
  return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: inner dimensions disagree");
  }
  Matrix out(a.rows(), b.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (Index j = 0; j < b.cols(); ++j) {
        out(i, j) += aik * b(k, j);
      }
    }
  }
  return out;
}

Matrix transpose(const Matrix& m) {
  Matrix out(m.cols(), m.rows());
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) out(c, r) = m(r, c);
  }
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (Index i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

double frobenius_norm(const Matrix& m) {
  return norm2(std::span<const double>(m.data()));
}

namespace {

std::uint64_t splitmix64_next(std::uint64_t& x) {
  x += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t rotl64(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed) {
  std::uint64_t sm = seed;
  for (auto& s : state_) s = splitmix64_next(sm);
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl64(state_[0] + state_[3], 23) + state_[0];
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl64(state_[3], 45);
  return result;
}

double Rng::uniform01() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::uniform_below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("uniform_below: n must be positive");
  const std::uint64_t rem = std::numeric_limits<std::uint64_t>::max() % n;
  if (rem == n - 1) return next_u64() % n;  // n divides 2^64
  const std::uint64_t limit =
      std::numeric_limits<std::uint64_t>::max() - rem;  // last full block end
  std::uint64_t r;
  do {
    r = next_u64();
  } while (r >= limit);
  return r % n;
}

double Rng::gaussian(double sigma) {
  if (!(sigma > 0.0)) {
    throw std::invalid_argument("gaussian: sigma must be positive");
  }
  if (has_spare_) {
    has_spare_ = false;
    return spare_ * sigma;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform01() - 1.0;
    v = 2.0 * uniform01() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * f;
  has_spare_ = true;
  return u * f * sigma;
}

Rng Rng::fork(std::uint64_t stream) const {
  return Rng(mix_seed(seed_, stream));
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a ^ (0x9E3779B97F4A7C15ULL * (b + 1));
  return splitmix64_next(x);
}

std::vector<double> gaussian_vector(Rng& rng, Index n, double sigma) {
  if (!(sigma > 0.0)) {
    throw std::invalid_argument("gaussian_vector: sigma must be positive");
  }
  std::vector<double> out(n);
  for (auto& x : out) x = rng.gaussian(sigma);
  return out;
}

namespace {

// Orthogonalizes column pairs of b with Jacobi rotations, accumulating the
// rotations into v. Requires rows(b) >= cols(b).
void jacobi_onesided(Matrix& b, Matrix& v, Index max_sweeps) {
  const Index n = b.cols();
  const Index m = b.rows();
  const double tol = 1e-14;
  for (Index sweep = 0; sweep < max_sweeps; ++sweep) {
    bool rotated = false;
    for (Index i = 0; i + 1 < n; ++i) {
      for (Index j = i + 1; j < n; ++j) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (Index r = 0; r < m; ++r) {
          const double bi = b(r, i), bj = b(r, j);
          alpha += bi * bi;
          beta += bj * bj;
          gamma += bi * bj;
        }
        if (std::abs(gamma) <= tol * std::sqrt(alpha * beta) || gamma == 0.0) {
          continue;
        }
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (Index r = 0; r < m; ++r) {
          const double bi = b(r, i), bj = b(r, j);
          b(r, i) = c * bi - s * bj;
          b(r, j) = s * bi + c * bj;
        }
        for (Index r = 0; r < n; ++r) {
          const double vi = v(r, i), vj = v(r, j);
          v(r, i) = c * vi - s * vj;
          v(r, j) = s * vi + c * vj;
        }
      }
    }
    if (!rotated) return;
  }
  throw std::runtime_error("svd: Jacobi sweeps did not converge");
}

}  // namespace

Svd svd(const Matrix& a, Index max_sweeps) {
  const bool flip = a.rows() < a.cols();
  Matrix work = flip ? transpose(a) : a;
  const Index m = work.rows();
  const Index n = work.cols();

  Matrix v = Matrix::identity(n);
  jacobi_onesided(work, v, max_sweeps);

  std::vector<double> sigma(n, 0.0);
  Matrix u(m, n);
  for (Index j = 0; j < n; ++j) {
    double s = 0.0;
    for (Index r = 0; r < m; ++r) s += work(r, j) * work(r, j);
    s = std::sqrt(s);
    sigma[j] = s;
    if (s > 0.0) {
      for (Index r = 0; r < m; ++r) u(r, j) = work(r, j) / s;
    }
  }

  // Sort singular values descending, permuting u and v columns to match.
  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index x, Index y) { return sigma[x] > sigma[y]; });
  Svd out;
  out.sigma.resize(n);
  out.u = Matrix(m, n);
  out.v = Matrix(n, n);
  for (Index j = 0; j < n; ++j) {
    out.sigma[j] = sigma[order[j]];
    for (Index r = 0; r < m; ++r) out.u(r, j) = u(r, order[j]);
    for (Index r = 0; r < n; ++r) out.v(r, j) = v(r, order[j]);
  }
  if (flip) std::swap(out.u, out.v);
  return out;
}

}  // namespace relulab

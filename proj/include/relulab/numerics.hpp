#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace relulab {

using Index = std::size_t;

/// Dense row-major matrix of 64-bit floats. Treated as an immutable value
/// once handed to another component; mutation happens only on locally owned
/// copies (optimizer state, working buffers).
class Matrix {
 public:
  Matrix() = default;
  Matrix(Index rows, Index cols);
  Matrix(Index rows, Index cols, std::vector<double> entries);

  static Matrix identity(Index n);

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  Index size() const { return entries_.size(); }

  double& operator()(Index r, Index c) { return entries_[r * cols_ + c]; }
  double operator()(Index r, Index c) const { return entries_[r * cols_ + c]; }

  std::span<double> row(Index r) { return {entries_.data() + r * cols_, cols_}; }
  std::span<const double> row(Index r) const {
    return {entries_.data() + r * cols_, cols_};
  }

  std::vector<double>& data() { return entries_; }
  const std::vector<double>& data() const { return entries_; }

  bool all_finite() const;

 private:
  Index rows_ = 0;
  Index cols_ = 0;
  std::vector<double> entries_;
};

/// Throws std::invalid_argument on dimension mismatch.
std::vector<double> matvec(const Matrix& m, std::span<const double> v);
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> v);
double frobenius_norm(const Matrix& m);

/// Deterministic pseudo-random stream: xoshiro256++ seeded through splitmix64.
/// The integer and uniform streams are bit-exact for a fixed seed; Gaussians
/// come from the Marsaglia polar transform (one spare value cached), so they
/// are bit-exact per seed on a given libm.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64();

  /// Uniform in [0, 1), 53-bit resolution.
  double uniform01();

  /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
  std::uint64_t uniform_below(std::uint64_t n);

  /// One N(0, sigma^2) draw.
  double gaussian(double sigma);

  /// Child stream derived from this generator's seed (not its current
  /// state), so fork(i) is reproducible no matter how much of the parent
  /// stream was consumed. Distinct ids give independent-looking streams.
  Rng fork(std::uint64_t stream) const;

  /// In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (Index i = items.size(); i > 1; --i) {
      const Index j = static_cast<Index>(uniform_below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t state_[4] = {};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Combines seeds/ids into a derived seed (splitmix64 finalizer chain).
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

/// n i.i.d. N(0, sigma^2) samples. Requires sigma > 0.
std::vector<double> gaussian_vector(Rng& rng, Index n, double sigma);

/// Thin SVD a = u * diag(sigma) * v^T with sigma sorted descending.
/// u is rows(a) x r, v is cols(a) x r, r = min(rows, cols).
struct Svd {
  Matrix u;
  std::vector<double> sigma;
  Matrix v;
};

/// One-sided Jacobi. Throws std::runtime_error if the sweep cap is hit
/// before column pairs are orthogonal to working precision.
Svd svd(const Matrix& a, Index max_sweeps = 60);

}  // namespace relulab

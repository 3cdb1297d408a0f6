#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "relulab/numerics.hpp"

namespace relulab {

/// Two-layer rectified-linear network without bias terms:
///   y[j] = sum_h v(h,j) * max(<u_h, x>, 0)
/// u is hidden x d (row h = u_h), v is hidden x k. The missing biases keep
/// the map positively homogeneous in each unit's weights, which the balance
/// and normalize transforms below rely on.
struct NetParams {
  Index d = 0;
  Index hidden = 0;
  Index k = 0;
  Matrix u;  // hidden x d
  Matrix v;  // hidden x k
};

struct Gradients {
  Matrix du;  // hidden x d
  Matrix dv;  // hidden x k
};

Gradients zero_gradients(const NetParams& p);

/// Clears an accumulator in place, keeping its shape.
void zero_gradients(Gradients& g);

/// Output vector of length k. Throws on dimension mismatch.
std::vector<double> forward(const NetParams& p, std::span<const double> x);

/// Hidden pre-activations <u_h, x>.
std::vector<double> preactivations(const NetParams& p,
                                   std::span<const double> x);

/// Chain-rule gradients for one example; ReLU subgradient at the kink is 0.
Gradients backward(const NetParams& p, std::span<const double> x,
                   std::span<const double> dloss_dy);

/// Same, accumulating into an existing buffer (batch loops).
void backward_accumulate(const NetParams& p, std::span<const double> x,
                         std::span<const double> dloss_dy, Gradients& acc);

/// All entries i.i.d. N(0, sigma^2); u is filled row-major first, then v.
NetParams init_net(Index d, Index hidden, Index k, double sigma, Rng& rng);

/// Per-unit rescaling for k = 1 nets making ||u_h|| = |v_h| without changing
/// the forward map. Units with u_h = 0 or v_h = 0 are zeroed entirely. After
/// this, the summed L2 penalty (1/2)sum(||u||^2 + v^2) equals sum ||u||*|v|.
NetParams balance(const NetParams& p);

/// For k = 1 nets: u_h <- u_h/||u_h||, v_h <- v_h*||u_h||. Forward map is
/// unchanged and sum|v_h| afterwards equals sum ||u_h||*|v_h| before.
NetParams normalize_to_unit(const NetParams& p);

/// JSON checkpoint, schema "relulab-net-v1": dims plus flat row-major arrays.
void save_checkpoint(const NetParams& p, const std::filesystem::path& path);
NetParams load_checkpoint(const std::filesystem::path& path);

/// Max relative error between analytic gradients of the truncated soft-max
/// loss composed with the network and central finite differences (step h),
/// over `pairs` random (net, input) draws kept away from ReLU kinks and the
/// loss branch points. The finite-difference route never touches backward().
double gradcheck_max_rel_error(std::uint64_t seed, Index pairs = 50,
                               double h = 1e-6);

}  // namespace relulab

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "relulab/loss.hpp"
#include "relulab/model.hpp"
#include "relulab/numerics.hpp"

using namespace relulab;

namespace {

NetParams single_unit(std::vector<double> u, double v) {
  NetParams p;
  p.d = u.size();
  p.hidden = 1;
  p.k = 1;
  p.u = Matrix(1, p.d, std::move(u));
  p.v = Matrix(1, 1, {v});
  return p;
}

NetParams random_net(Rng& rng, Index d, Index hidden, Index k,
                     double sigma = 1.0) {
  return init_net(d, hidden, k, sigma, rng);
}

// Half the summed squared penalty and the norm-product lower bound, k = 1.
double half_square_penalty(const NetParams& p) {
  double s = 0.0;
  for (Index h = 0; h < p.hidden; ++h) {
    const double nu = norm2(p.u.row(h));
    s += 0.5 * (nu * nu + p.v(h, 0) * p.v(h, 0));
  }
  return s;
}

double norm_product_sum(const NetParams& p) {
  double s = 0.0;
  for (Index h = 0; h < p.hidden; ++h) {
    s += norm2(p.u.row(h)) * std::abs(p.v(h, 0));
  }
  return s;
}

bool nets_close(const NetParams& a, const NetParams& b, double tol) {
  if (a.d != b.d || a.hidden != b.hidden || a.k != b.k) return false;
  for (Index i = 0; i < a.u.size(); ++i) {
    const double x = a.u.data()[i];
    const double y = b.u.data()[i];
    if (std::abs(x - y) > tol * std::max({1.0, std::abs(x), std::abs(y)})) {
      return false;
    }
  }
  for (Index i = 0; i < a.v.size(); ++i) {
    const double x = a.v.data()[i];
    const double y = b.v.data()[i];
    if (std::abs(x - y) > tol * std::max({1.0, std::abs(x), std::abs(y)})) {
      return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("forward evaluates a single active unit") {
  const NetParams p = single_unit({1.0, -1.0}, 1.0);
  const std::vector<double> x{3.0, 1.0};
  CHECK(forward(p, x) == std::vector<double>{2.0});
}

TEST_CASE("forward zeroes a negative pre-activation") {
  const NetParams p = single_unit({1.0, -1.0}, 1.0);
  const std::vector<double> x{1.0, 3.0};
  CHECK(forward(p, x) == std::vector<double>{0.0});
}

TEST_CASE("forward equals the per-unit summation oracle exactly") {
  Rng rng(301);
  const NetParams p = random_net(rng, 5, 8, 3);
  const std::vector<double> x = gaussian_vector(rng, 5, 1.0);
  const auto got = forward(p, x);
  std::vector<double> want(3, 0.0);
  for (Index h = 0; h < p.hidden; ++h) {
    const double pre = std::max(dot(p.u.row(h), x), 0.0);
    if (pre == 0.0) continue;
    for (Index j = 0; j < p.k; ++j) want[j] += p.v(h, j) * pre;
  }
  CHECK(got == want);
}

TEST_CASE("forward rejects a dimension mismatch") {
  const NetParams p = single_unit({1.0, -1.0}, 1.0);
  const std::vector<double> x{1.0, 2.0, 3.0};
  CHECK_THROWS_AS((void)forward(p, x), std::invalid_argument);
}

TEST_CASE("backward returns zero gradients for zero upstream") {
  Rng rng(302);
  const NetParams p = random_net(rng, 4, 6, 2);
  const std::vector<double> x = gaussian_vector(rng, 4, 1.0);
  const Gradients g = backward(p, x, std::vector<double>{0.0, 0.0});
  for (double e : g.du.data()) CHECK(e == 0.0);
  for (double e : g.dv.data()) CHECK(e == 0.0);
}

TEST_CASE("backward zeroes the rows of inactive units") {
  Rng rng(303);
  NetParams p = random_net(rng, 3, 4, 2);
  std::vector<double> x = gaussian_vector(rng, 3, 1.0);
  const auto pre = preactivations(p, x);
  const Gradients g = backward(p, x, std::vector<double>{0.7, -0.4});
  for (Index h = 0; h < p.hidden; ++h) {
    if (pre[h] > 0.0) continue;
    for (Index c = 0; c < p.d; ++c) CHECK(g.du(h, c) == 0.0);
    for (Index j = 0; j < p.k; ++j) CHECK(g.dv(h, j) == 0.0);
  }
}

TEST_CASE("backward matches finite differences away from kinks") {
  // Error metric: whole-gradient norm ratio per instance. Kink avoidance
  // keeps every |<u_h, x>| above 1e-3 so no step crosses an activation.
  Rng rng(304);
  const double h = 1e-6;
  for (int trial = 0; trial < 20; ++trial) {
    NetParams p;
    std::vector<double> x;
    for (;;) {
      p = random_net(rng, 4, 5, 3, 0.7);
      x = gaussian_vector(rng, 4, 1.0);
      const auto pre = preactivations(p, x);
      if (std::all_of(pre.begin(), pre.end(),
                      [](double a) { return std::abs(a) > 1e-3; })) {
        break;
      }
    }
    const std::vector<double> up = gaussian_vector(rng, 3, 1.0);
    const Gradients analytic = backward(p, x, up);

    const auto phi = [&]() {
      const auto y = forward(p, x);
      return dot(y, up);
    };
    double diff_sq = 0.0;
    double a_sq = 0.0;
    double fd_sq = 0.0;
    const auto probe = [&](Matrix& param, const Matrix& grad, Index r,
                           Index c) {
      const double kept = param(r, c);
      param(r, c) = kept + h;
      const double upv = phi();
      param(r, c) = kept - h;
      const double dnv = phi();
      param(r, c) = kept;
      const double fd = (upv - dnv) / (2.0 * h);
      const double a = grad(r, c);
      diff_sq += (a - fd) * (a - fd);
      a_sq += a * a;
      fd_sq += fd * fd;
    };
    for (Index r = 0; r < p.hidden; ++r) {
      for (Index c = 0; c < p.d; ++c) probe(p.u, analytic.du, r, c);
      for (Index j = 0; j < p.k; ++j) probe(p.v, analytic.dv, r, j);
    }
    const double scale = std::sqrt(std::max(a_sq, fd_sq));
    REQUIRE(scale > 0.0);
    CHECK(std::sqrt(diff_sq) / scale < 1e-6);
  }
}

TEST_CASE("backward_accumulate sums per-example gradients") {
  Rng rng(305);
  const NetParams p = random_net(rng, 3, 4, 2);
  const std::vector<double> x1 = gaussian_vector(rng, 3, 1.0);
  const std::vector<double> x2 = gaussian_vector(rng, 3, 1.0);
  const std::vector<double> up1 = gaussian_vector(rng, 2, 1.0);
  const std::vector<double> up2 = gaussian_vector(rng, 2, 1.0);
  Gradients acc = zero_gradients(p);
  backward_accumulate(p, x1, up1, acc);
  backward_accumulate(p, x2, up2, acc);
  const Gradients g1 = backward(p, x1, up1);
  const Gradients g2 = backward(p, x2, up2);
  for (Index i = 0; i < acc.du.size(); ++i) {
    CHECK(acc.du.data()[i] == g1.du.data()[i] + g2.du.data()[i]);
  }
  for (Index i = 0; i < acc.dv.size(); ++i) {
    CHECK(acc.dv.data()[i] == g1.dv.data()[i] + g2.dv.data()[i]);
  }
}

TEST_CASE("init is deterministic per seed") {
  Rng a(55);
  Rng b(55);
  const NetParams pa = init_net(6, 5, 2, 0.1, a);
  const NetParams pb = init_net(6, 5, 2, 0.1, b);
  CHECK(pa.u.data() == pb.u.data());
  CHECK(pa.v.data() == pb.v.data());
}

TEST_CASE("init empirical standard deviation tracks sigma") {
  Rng rng(56);
  const NetParams p = init_net(100, 64, 1, 0.1, rng);
  double ss = 0.0;
  for (double e : p.u.data()) ss += e * e;
  const double std_dev =
      std::sqrt(ss / static_cast<double>(p.u.size()));
  CHECK(std_dev >= 0.095);
  CHECK(std_dev <= 0.105);
}

TEST_CASE("init rejects a non-positive sigma") {
  Rng rng(57);
  CHECK_THROWS_AS((void)init_net(2, 2, 1, 0.0, rng), std::invalid_argument);
}

TEST_CASE("balance equalizes norms on the worked single unit") {
  const NetParams p = single_unit({3.0, 0.0}, 4.0);
  const NetParams b = balance(p);
  const double target = 2.0 * std::sqrt(3.0);
  CHECK(norm2(b.u.row(0)) == doctest::Approx(target).epsilon(1e-14));
  CHECK(std::abs(b.v(0, 0)) == doctest::Approx(target).epsilon(1e-14));
  CHECK(half_square_penalty(b) == doctest::Approx(12.0).epsilon(1e-14));
  CHECK(norm_product_sum(p) == doctest::Approx(12.0).epsilon(1e-14));
}

TEST_CASE("balance leaves an already balanced unit unchanged") {
  const NetParams p = single_unit({2.0, 0.0}, 2.0);
  const NetParams b = balance(p);
  CHECK(b.u.data() == p.u.data());
  CHECK(b.v.data() == p.v.data());
  const NetParams q = single_unit({0.0, 2.0}, -2.0);
  const NetParams bq = balance(q);
  CHECK(bq.u.data() == q.u.data());
  CHECK(bq.v.data() == q.v.data());
}

TEST_CASE("balance zeroes units with a dead side") {
  NetParams p;
  p.d = 2;
  p.hidden = 2;
  p.k = 1;
  p.u = Matrix(2, 2, {1.0, 2.0, 0.0, 0.0});
  p.v = Matrix(2, 1, {0.0, 5.0});
  const NetParams b = balance(p);
  for (Index c = 0; c < 2; ++c) {
    CHECK(b.u(0, c) == 0.0);
    CHECK(b.u(1, c) == 0.0);
  }
  CHECK(b.v(0, 0) == 0.0);
  CHECK(b.v(1, 0) == 0.0);
}

TEST_CASE("balance preserves the forward map on random inputs") {
  Rng rng(58);
  const NetParams p = random_net(rng, 4, 7, 1);
  const NetParams b = balance(p);
  for (int i = 0; i < 100; ++i) {
    const std::vector<double> x = gaussian_vector(rng, 4, 1.0);
    const double ya = forward(p, x)[0];
    const double yb = forward(b, x)[0];
    CHECK(std::abs(ya - yb) <=
          1e-12 * std::max({1.0, std::abs(ya), std::abs(yb)}));
  }
}

TEST_CASE("AM-GM holds and balance attains equality") {
  Rng rng(59);
  for (int trial = 0; trial < 50; ++trial) {
    const NetParams p = random_net(rng, 3, 6, 1);
    const double half = half_square_penalty(p);
    const double prod = norm_product_sum(p);
    CHECK(half >= prod * (1.0 - 1e-12));
    const NetParams b = balance(p);
    const double half_b = half_square_penalty(b);
    const double prod_b = norm_product_sum(b);
    CHECK(std::abs(half_b - prod_b) <= 1e-12 * std::max(1.0, half_b));
    CHECK(std::abs(prod_b - prod) <= 1e-12 * std::max(1.0, prod));
  }
}

TEST_CASE("normalize_to_unit rescales the worked single unit") {
  const NetParams p = single_unit({3.0, 0.0}, 4.0);
  const NetParams n = normalize_to_unit(p);
  CHECK(n.u(0, 0) == 1.0);
  CHECK(n.u(0, 1) == 0.0);
  CHECK(n.v(0, 0) == 12.0);
}

TEST_CASE("normalize_to_unit fixes unit-norm nets") {
  const NetParams p = single_unit({0.0, 1.0}, -3.5);
  const NetParams n = normalize_to_unit(p);
  CHECK(n.u.data() == p.u.data());
  CHECK(n.v.data() == p.v.data());
}

TEST_CASE("normalize_to_unit preserves forward and the weighted v sum") {
  Rng rng(60);
  for (int trial = 0; trial < 20; ++trial) {
    const NetParams p = random_net(rng, 5, 6, 1);
    const NetParams n = normalize_to_unit(p);
    double abs_v = 0.0;
    for (Index h = 0; h < n.hidden; ++h) abs_v += std::abs(n.v(h, 0));
    const double want = norm_product_sum(p);
    CHECK(std::abs(abs_v - want) <= 1e-12 * std::max(1.0, want));
    for (int i = 0; i < 20; ++i) {
      const std::vector<double> x = gaussian_vector(rng, 5, 1.0);
      const double ya = forward(p, x)[0];
      const double yb = forward(n, x)[0];
      CHECK(std::abs(ya - yb) <=
            1e-12 * std::max({1.0, std::abs(ya), std::abs(yb)}));
    }
  }
}

TEST_CASE("balance and normalize_to_unit are idempotent") {
  Rng rng(61);
  const NetParams p = random_net(rng, 4, 5, 1);
  const NetParams b1 = balance(p);
  const NetParams b2 = balance(b1);
  CHECK(nets_close(b1, b2, 1e-12));
  const NetParams n1 = normalize_to_unit(p);
  const NetParams n2 = normalize_to_unit(n1);
  CHECK(nets_close(n1, n2, 1e-12));
}

TEST_CASE("balance and normalize_to_unit require k = 1") {
  Rng rng(62);
  const NetParams p = random_net(rng, 3, 4, 2);
  CHECK_THROWS_AS((void)balance(p), std::invalid_argument);
  CHECK_THROWS_AS((void)normalize_to_unit(p), std::invalid_argument);
}

TEST_CASE("dyadic weight rescaling leaves forward exactly unchanged") {
  Rng rng(63);
  const NetParams p = random_net(rng, 4, 6, 2);
  for (const double c : {2.0, 0.5, 8.0}) {
    NetParams q = p;
    for (Index h = 0; h < q.hidden; ++h) {
      for (Index col = 0; col < q.d; ++col) q.u(h, col) *= c;
      for (Index j = 0; j < q.k; ++j) q.v(h, j) /= c;
    }
    for (int i = 0; i < 20; ++i) {
      const std::vector<double> x = gaussian_vector(rng, 4, 1.0);
      CHECK(forward(p, x) == forward(q, x));
    }
  }
}

TEST_CASE("non-dyadic rescaling stays within roundoff") {
  Rng rng(64);
  const NetParams p = random_net(rng, 4, 6, 1);
  const double c = 1.7;
  NetParams q = p;
  for (Index h = 0; h < q.hidden; ++h) {
    for (Index col = 0; col < q.d; ++col) q.u(h, col) *= c;
    q.v(h, 0) /= c;
  }
  for (int i = 0; i < 20; ++i) {
    const std::vector<double> x = gaussian_vector(rng, 4, 1.0);
    const double ya = forward(p, x)[0];
    const double yb = forward(q, x)[0];
    CHECK(std::abs(ya - yb) <=
          1e-12 * std::max({1.0, std::abs(ya), std::abs(yb)}));
  }
}

TEST_CASE("checkpoint round-trip restores the exact parameters") {
  Rng rng(65);
  const NetParams p = random_net(rng, 5, 4, 3, 0.3);
  const std::filesystem::path path =
      std::filesystem::temp_directory_path() / "relulab_model_ck_test.json";
  save_checkpoint(p, path);
  const NetParams q = load_checkpoint(path);
  std::filesystem::remove(path);
  CHECK(q.d == p.d);
  CHECK(q.hidden == p.hidden);
  CHECK(q.k == p.k);
  CHECK(q.u.data() == p.u.data());
  CHECK(q.v.data() == p.v.data());
}

TEST_CASE("load_checkpoint rejects a missing file") {
  CHECK_THROWS((void)load_checkpoint("/nonexistent/relulab_ck.json"));
}

TEST_CASE("gradcheck stays under the gate on several seeds") {
  for (const std::uint64_t seed : {3ull, 7ull, 19ull}) {
    CHECK(gradcheck_max_rel_error(seed) < 1e-6);
  }
}

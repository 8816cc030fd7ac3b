#include <doctest.h>

#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "mate/errors.hpp"
#include "mate/synthgen.hpp"

using namespace mate;
using namespace mate::synthgen;

namespace {

GenerationSpec small_spec(std::uint64_t seed = 3) {
  GenerationSpec s;
  s.n_c = 2;
  s.n_s = 2;
  s.T = 20;
  s.N = 200;
  s.obs_dims = {6, 5};
  s.seed = seed;
  return s;
}

// Residual MSE of y ~ [x, 1], solved independently with normal equations.
double ls_mse(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  Eigen::MatrixXd d(x.rows(), x.cols() + 1);
  d << x, Eigen::VectorXd::Ones(x.rows());
  const Eigen::MatrixXd beta = (d.transpose() * d).ldlt().solve(d.transpose() * y);
  return (y - d * beta).squaredNorm() / static_cast<double>(y.size());
}

}  // namespace

TEST_CASE("identity linear transition without dependency is a random walk") {
  auto s = small_spec();
  s.transition = TransitionKind::kLinear;
  s.transition_init = TransitionInit::kIdentity;
  s.dependency_strength = 0.0;
  const auto z = sample_latent_process(s);
  for (std::size_t i = 0; i < z.z_c.n; ++i)
    for (std::size_t k = 0; k < z.z_c.c; ++k) {
      CHECK(z.z_c(i, 0, k) == doctest::Approx(z.eps_c(i, 0, k)));
      for (std::size_t t = 1; t < z.z_c.t; ++t)
        REQUIRE(std::abs(z.z_c(i, t, k) - (z.z_c(i, t - 1, k) + z.eps_c(i, t, k))) < 1e-12);
    }
}

TEST_CASE("latent process is bitwise deterministic under a fixed seed") {
  const auto a = sample_latent_process(small_spec(11));
  const auto b = sample_latent_process(small_spec(11));
  CHECK(a.z_c == b.z_c);
  CHECK(a.z_s[0] == b.z_s[0]);
  CHECK(a.z_s[1] == b.z_s[1]);
  CHECK(a.eps_s[1] == b.eps_s[1]);
  const auto c = sample_latent_process(small_spec(12));
  CHECK_FALSE(a.z_c == c.z_c);
}

TEST_CASE("specific transitions follow the stored dependency mechanism") {
  auto s = small_spec();
  const auto d = generate_dataset(s);
  const auto& z = d.truth;
  for (int m = 0; m < 2; ++m)
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t t = 1; t < z.z_c.t; ++t) {
        Eigen::VectorXd in(s.n_s + s.n_c);
        for (int k = 0; k < s.n_s; ++k) in(k) = z.z_s[m](i, t - 1, k);
        for (int k = 0; k < s.n_c; ++k) in(s.n_s + k) = s.dependency_strength * z.z_c(i, t, k);
        const auto mean = d.specific_transitions[m].mean(in);
        for (int k = 0; k < s.n_s; ++k)
          REQUIRE(z.z_s[m](i, t, k) == doctest::Approx(mean(k) + s.noise_scale * z.eps_s[m](i, t, k)).epsilon(1e-12));
      }
}

TEST_CASE("dependency strength 1 makes z_c informative about z_s") {
  auto s = small_spec();
  s.N = 400;
  const auto z = sample_latent_process(s);
  const auto& zs = z.z_s[0];
  const Eigen::Index rows = static_cast<Eigen::Index>(zs.n * (zs.t - 1));
  Eigen::MatrixXd prev(rows, s.n_s), both(rows, s.n_s + s.n_c), cur(rows, s.n_s);
  Eigen::Index r = 0;
  for (std::size_t i = 0; i < zs.n; ++i)
    for (std::size_t t = 1; t < zs.t; ++t, ++r) {
      for (int k = 0; k < s.n_s; ++k) {
        prev(r, k) = both(r, k) = zs(i, t - 1, k);
        cur(r, k) = zs(i, t, k);
      }
      for (int k = 0; k < s.n_c; ++k) both(r, s.n_s + k) = z.z_c(i, t, k);
    }
  const double oracle = ls_mse(prev, cur) - ls_mse(both, cur);
  CHECK(oracle > 0.0);
  CHECK(dependency_margin(z, 0) == doctest::Approx(oracle).epsilon(1e-6));
}

TEST_CASE("zero dependency strength gives a margin indistinguishable from the permutation null") {
  auto s = small_spec(5);
  s.dependency_strength = 0.0;
  s.N = 300;
  const auto z = sample_latent_process(s);
  for (int m = 0; m < 2; ++m) {
    const auto test = dependency_permutation_test(z, m, 50, 9);
    CHECK(std::abs(test.margin - test.null_mean) < 3.0 * test.null_sd);
  }
  s.dependency_strength = 1.0;
  const auto dep = sample_latent_process(s);
  const auto test = dependency_permutation_test(dep, 0, 50, 9);
  CHECK(test.margin - test.null_mean > 3.0 * test.null_sd);
}

TEST_CASE("generate_dataset output shapes") {
  GenerationSpec s;
  s.N = 100;
  s.T = 64;
  s.n_c = 2;
  s.n_s = 2;
  s.obs_dims = {8, 8};
  const auto d = generate_dataset(s);
  REQUIRE(d.observations.size() == 2);
  for (const auto& x : d.observations) {
    CHECK(x.n == 100);
    CHECK(x.t == 64);
    CHECK(x.c == 8);
  }
  CHECK(d.labels.size() == 100);
  for (int y : d.labels) CHECK((y >= 0 && y < s.num_classes));
}

TEST_CASE("identity mixing copies latents into the leading channels") {
  auto s = small_spec();
  s.mixing = MixingKind::kIdentity;
  const auto d = generate_dataset(s);
  for (int m = 0; m < 2; ++m) {
    const auto& x = d.observations[m];
    for (std::size_t i = 0; i < x.n; i += 17)
      for (std::size_t t = 0; t < x.t; ++t) {
        for (int k = 0; k < s.n_c; ++k) CHECK(x(i, t, k) == d.truth.z_c(i, t, k));
        for (int k = 0; k < s.n_s; ++k) CHECK(x(i, t, s.n_c + k) == d.truth.z_s[m](i, t, k));
        for (std::size_t k = s.n_c + s.n_s; k < x.c; ++k) CHECK(x(i, t, k) == 0.0);
      }
  }
}

TEST_CASE("observations equal the stored mixing applied to the latents") {
  const auto d = generate_dataset(small_spec());
  Eigen::VectorXd latent(4);
  for (std::size_t i = 0; i < 10; ++i) {
    for (int k = 0; k < 2; ++k) {
      latent(k) = d.truth.z_c(i, 3, k);
      latent(2 + k) = d.truth.z_s[1](i, 3, k);
    }
    const auto x = d.mixing[1].apply(latent);
    for (Eigen::Index c = 0; c < x.size(); ++c) CHECK(d.observations[1](i, 3, c) == doctest::Approx(x(c)));
  }
}

TEST_CASE("linear mixing inverse matches a least-squares solve") {
  auto s = small_spec();
  s.mixing = MixingKind::kLinear;
  const auto d = generate_dataset(s);
  const auto& g = d.mixing[0];
  // Oracle: recover the matrix column by column, then solve.
  Eigen::MatrixXd A(g.obs_dim(), g.latent_dim());
  for (int j = 0; j < g.latent_dim(); ++j) A.col(j) = g.apply(Eigen::VectorXd::Unit(g.latent_dim(), j));
  double worst = 0.0;
  for (std::size_t i = 0; i < d.observations[0].n; i += 7)
    for (std::size_t t = 0; t < d.observations[0].t; t += 5) {
      Eigen::VectorXd x(g.obs_dim()), z(g.latent_dim());
      for (int c = 0; c < g.obs_dim(); ++c) x(c) = d.observations[0](i, t, c);
      for (int k = 0; k < 2; ++k) {
        z(k) = d.truth.z_c(i, t, k);
        z(2 + k) = d.truth.z_s[0](i, t, k);
      }
      const Eigen::VectorXd solved = A.colPivHouseholderQr().solve(x);
      worst = std::max({worst, (solved - z).cwiseAbs().maxCoeff(), (g.invert(x) - z).cwiseAbs().maxCoeff()});
    }
  CHECK(worst < 1e-6);
}

TEST_CASE("mlp mixing round trips through its inverse") {
  const auto d = generate_dataset(small_spec());
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n01;
  for (int r = 0; r < 50; ++r) {
    Eigen::VectorXd z(4);
    for (int k = 0; k < 4; ++k) z(k) = 3.0 * n01(rng);
    CHECK((d.mixing[0].invert(d.mixing[0].apply(z)) - z).norm() < 1e-9);
  }
}

TEST_CASE("verify_assumptions on identity and scaled mixings") {
  auto s = small_spec();
  s.mixing = MixingKind::kIdentity;
  auto report = verify_assumptions(generate_dataset(s), 100, 1);
  CHECK(report.jacobian_points >= 100);
  for (double v : report.min_singular_value) CHECK(v == doctest::Approx(1.0).epsilon(1e-6));
  s.mixing_scale = 2.0;
  report = verify_assumptions(generate_dataset(s), 100, 1);
  for (double v : report.min_singular_value) CHECK(v == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("random mixing has a non-singular Jacobian and independent noise") {
  auto s = small_spec(21);
  s.N = 500;
  s.T = 40;
  const auto report = verify_assumptions(generate_dataset(s), 100, 2);
  for (double v : report.min_singular_value) CHECK(v > 1e-3);
  CHECK(report.noise_correlation_bound == doctest::Approx(4.0 / std::sqrt(500.0 * 40.0)));
  CHECK(report.max_noise_correlation < report.noise_correlation_bound);
  for (double v : report.dependency_margin) CHECK(v > 0.0);
}

TEST_CASE("mixing is injective on random latent pairs") {
  const auto d = generate_dataset(small_spec(8));
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n01;
  double min_dist = 1e300;
  for (int r = 0; r < 1000; ++r) {
    Eigen::VectorXd u(4), v(4);
    for (int k = 0; k < 4; ++k) {
      u(k) = 2.0 * n01(rng);
      v(k) = 2.0 * n01(rng);
    }
    if ((u - v).norm() == 0.0) continue;
    min_dist = std::min(min_dist, (d.mixing[1].apply(u) - d.mixing[1].apply(v)).norm());
  }
  CHECK(min_dist > 0.0);
}

TEST_CASE("invalid specs raise configuration errors") {
  auto s = small_spec();
  s.obs_dims = {3, 6};
  CHECK_THROWS_AS(generate_dataset(s), ConfigError);
  s = small_spec();
  s.num_modalities = 1;
  s.obs_dims = {6};
  CHECK_THROWS_AS(validate(s), ConfigError);
  s = small_spec();
  s.dependency_strength = -1;
  CHECK_THROWS_AS(sample_latent_process(s), ConfigError);
  s = small_spec();
  s.n_c = 0;
  CHECK_THROWS_AS(validate(s), ConfigError);
  CHECK_THROWS_AS(parse_transition_kind("cubic"), ConfigError);
}

TEST_CASE("uniform noise option has unit variance") {
  auto s = small_spec();
  s.noise = NoiseKind::kUniform;
  s.N = 1000;
  const auto z = sample_latent_process(s);
  double sum = 0, sq = 0;
  for (double v : z.eps_c.values) {
    sum += v;
    sq += v * v;
    CHECK(std::abs(v) <= std::sqrt(3.0));
  }
  const double n = static_cast<double>(z.eps_c.values.size());
  CHECK(sq / n - (sum / n) * (sum / n) == doctest::Approx(1.0).epsilon(0.05));
}

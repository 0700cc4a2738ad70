#include <cmath>

#include <doctest.h>

#include "tiltlab/mathutil.hpp"
#include "tiltlab/rng.hpp"

using namespace tiltlab;

TEST_SUITE_BEGIN("mathutil");

TEST_CASE("log_sigmoid matches naive evaluation in the safe range") {
  for (double z : {-30.0, -5.0, -1.0, -1e-3, 0.0, 1e-3, 1.0, 5.0, 30.0}) {
    const double naive = std::log(1.0 / (1.0 + std::exp(-z)));
    CHECK(log_sigmoid(z) == doctest::Approx(naive).epsilon(1e-12));
  }
}

TEST_CASE("log_sigmoid stays finite and linear deep in the tails") {
  CHECK(std::isfinite(log_sigmoid(-700.0)));
  CHECK(std::isfinite(log_sigmoid(700.0)));
  CHECK(log_sigmoid(-700.0) == doctest::Approx(-700.0).epsilon(1e-12));
  // At z = -30 the exact value is z - log1p(exp(z)).
  CHECK(log_sigmoid(-30.0) ==
        doctest::Approx(-30.0 - std::log1p(std::exp(-30.0))).epsilon(1e-15));
  CHECK(log_sigmoid(700.0) < 0.0);
}

TEST_CASE("logit and sigmoid are inverses") {
  for (double p : {1e-9, 0.01, 0.25, 0.5, 0.9, 0.999, 1.0 - 1e-9})
    CHECK(sigmoid(logit(p)) == doctest::Approx(p).epsilon(1e-12));
  CHECK(logit(0.5) == 0.0);
  CHECK_THROWS_AS(logit(0.0), std::domain_error);
  CHECK_THROWS_AS(logit(1.0), std::domain_error);
}

TEST_CASE("inverse_normal_cdf hits reference values") {
  CHECK(inverse_normal_cdf(0.5) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(inverse_normal_cdf(0.75) == doctest::Approx(0.6744897501960817).epsilon(1e-12));
  CHECK(inverse_normal_cdf(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
  CHECK(inverse_normal_cdf(0.0013498980316300945) == doctest::Approx(-3.0).epsilon(1e-10));
  // Symmetry.
  for (double p : {0.01, 0.1, 0.3})
    CHECK(inverse_normal_cdf(p) == doctest::Approx(-inverse_normal_cdf(1.0 - p)).epsilon(1e-10));
}

TEST_CASE("inverse_normal_cdf round-trips through erfc") {
  for (double p = 0.02; p < 1.0; p += 0.02) {
    const double x = inverse_normal_cdf(p);
    const double cdf = 0.5 * std::erfc(-x / std::sqrt(2.0));
    CHECK(cdf == doctest::Approx(p).epsilon(1e-13));
  }
}

TEST_CASE("sample_quantile interpolates order statistics") {
  std::vector<double> values = {3.0, 1.0, 2.0, 4.0};
  CHECK(sample_quantile(values, 0.0) == 1.0);
  CHECK(sample_quantile(values, 1.0) == 4.0);
  CHECK(sample_quantile(values, 0.5) == doctest::Approx(2.5));
  CHECK(sample_quantile({1.0, 2.0, 3.0}, 0.5) == 2.0);
}

TEST_CASE("weighted_quantile interpolates the CDF anchors") {
  std::vector<std::pair<double, double>> uniform4 = {
      {1.0, 0.25}, {2.0, 0.25}, {3.0, 0.25}, {4.0, 0.25}};
  // F hits 0.5 exactly at the second atom.
  CHECK(weighted_quantile(uniform4, 0.5) == doctest::Approx(2.0));
  // Between the 0.75 and 1.0 anchors.
  CHECK(weighted_quantile(uniform4, 0.85) == doctest::Approx(3.4));
  // Strictly below the maximum for any q < 1.
  CHECK(weighted_quantile(uniform4, 0.999) < 4.0);
  CHECK(weighted_quantile(uniform4, 1.0) == 4.0);
  CHECK(weighted_quantile(uniform4, 0.0) == 1.0);

  std::vector<std::pair<double, double>> skewed = {{0.0, 0.9}, {10.0, 0.1}};
  CHECK(weighted_quantile(skewed, 0.9) == doctest::Approx(0.0));
  CHECK(weighted_quantile(skewed, 0.95) == doctest::Approx(5.0));
}

TEST_CASE("rng is deterministic and distributions behave") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng rng(7);
  double sum = 0.0, sum_sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sum_sq += z * z;
  }
  const double mean = sum / n;
  const double var = sum_sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(var == doctest::Approx(1.0).epsilon(0.02));

  // Gamma mean is the shape parameter.
  double gamma_sum = 0.0;
  for (int i = 0; i < 50000; ++i) gamma_sum += rng.gamma(2.5);
  CHECK(gamma_sum / 50000 == doctest::Approx(2.5).epsilon(0.03));

  auto simplex = rng.dirichlet(1.0, 5);
  double total = 0.0;
  for (double x : simplex) {
    CHECK(x >= 0.0);
    total += x;
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("substream decorrelates seeds") {
  CHECK(substream(1, 0) != substream(1, 1));
  CHECK(substream(1, 0) != substream(2, 0));
}

TEST_SUITE_END();

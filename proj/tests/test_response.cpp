#include "doctest.h"

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "betadyn/response.hpp"

using namespace betadyn;

namespace {

// Brute-force enumeration of every word up to depth N: value and derivative
// coefficients computed from closed forms, points from plain map composition.
struct WordSums {
  std::vector<std::pair<double, double>> value_atoms, deriv_atoms;
  double deriv_mass = 0.0;
  std::vector<double> deriv_abs_mass;  // per depth, 1-indexed
};

WordSums enumerate_words(double b0, double b1, double q, int N) {
  WordSums out;
  out.deriv_abs_mass.assign(N + 1, 0.0);
  for (int n = 1; n <= N; ++n) {
    for (std::uint32_t w = 0; w < (1u << n); ++w) {
      std::vector<Beta<double>> path;
      int k = 0;
      for (int i = 0; i < n; ++i) {
        bool one = (w >> i) & 1u;
        path.push_back(Beta<double>(one ? b1 : b0));
        k += one ? 1 : 0;
      }
      double bw = 1.0;
      for (const auto& b : path) bw *= b.value;
      double P = std::pow(q, k) * std::pow(1.0 - q, n - k);
      double dP = k * std::pow(q, k - 1) * std::pow(1.0 - q, n - k) -
                  (n - k) * std::pow(q, k) * std::pow(1.0 - q, n - k - 1);
      out.deriv_abs_mass[n] += std::abs(dP) / bw;
      double point = word_apply(path, 1.0);
      if (point == 0.0) continue;
      out.value_atoms.push_back({point, P / bw});
      out.deriv_atoms.push_back({point, dP / bw});
      out.deriv_mass += dP / bw * point;
    }
  }
  return out;
}

}  // namespace

TEST_SUITE("response") {

TEST_CASE("critical weight closed forms") {
  CHECK(critical_p(0.5, 2.0) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(critical_p(1.0, 2.0) == 0.0);
  CHECK(critical_p(2.0, 3.0) == 0.0);
  CHECK(critical_p(0.8, 1.6) == doctest::Approx(0.4).epsilon(1e-14));
  CHECK_THROWS_AS(critical_p(0.5, 0.9), config_error);
  CHECK_THROWS_AS(critical_p(2.5, 1.5), config_error);
  CHECK_THROWS_AS(critical_p(-1.0, 2.0), config_error);
}

TEST_CASE("depth one derivative is parameter independent") {
  ResponseOptions o;
  o.depth_override = 1;
  double t0 = apply(Beta<double>(1.5), 1.0);
  double t1 = apply(Beta<double>(2.2), 1.0);
  auto expected = from_atoms(0.0, {{t1, 1.0 / 2.2}, {t0, -1.0 / 1.5}});
  for (double p : {0.3, 0.62}) {
    auto rb = response_build(1.5, 2.2, p, o);
    CHECK(l1_distance(rb.series_derivative, expected) <= 1e-15);
  }
  // coinciding depth-1 orbit points fold into one atom
  auto rb = response_build(1.5, 2.5, 0.4, o);
  REQUIRE(rb.series_derivative.cells() == 2);
  CHECK(eval(rb.series_derivative, 0.1) ==
        doctest::Approx(1.0 / 2.5 - 1.0 / 1.5).epsilon(1e-15));
}

TEST_CASE("channel propagation matches word enumeration") {
  struct Case { double b0, b1, p; } cases[] = {{1.5, 2.5, 0.5}, {1.7, 2.2, 0.35}};
  for (auto [b0, b1, p] : cases) {
    const int N = 10;
    ResponseOptions o;
    o.depth_override = N;
    o.fd_eps = 1e-3;
    auto rb = response_build(b0, b1, p, o);

    auto at_p = enumerate_words(b0, b1, p, N);
    auto dphi_oracle = from_atoms(0.0, std::move(at_p.deriv_atoms));
    CHECK(l1_distance(rb.series_derivative, dphi_oracle) <= 1e-13);
    CHECK(rb.mass_derivative == doctest::Approx(at_p.deriv_mass).epsilon(1e-12));

    auto value_atoms = at_p.value_atoms;
    value_atoms.push_back({1.0, 1.0});  // empty word
    auto phi_oracle = from_atoms(0.0, std::move(value_atoms));
    CHECK(l1_distance(rb.series, phi_oracle) <= 1e-13);

    const double shifts[4] = {p + 1e-3, p - 1e-3, p + 2e-3, p - 2e-3};
    for (int c = 0; c < 4; ++c) {
      auto at_s = enumerate_words(b0, b1, shifts[c], N);
      auto atoms = at_s.value_atoms;
      atoms.push_back({1.0, 1.0});
      auto oracle = from_atoms(0.0, std::move(atoms));
      CHECK(l1_distance(rb.shifted_series[c], oracle) <= 1e-13);
    }
  }
}

TEST_CASE("derivative layer mass obeys the product rule bound") {
  std::mt19937_64 rng(51);
  std::uniform_real_distribution<double> ub0(0.7, 2.0), ub1(1.6, 3.5), up(0.05, 0.95);
  int tested = 0;
  while (tested < 25) {
    double b0 = ub0(rng), b1 = ub1(rng), p = up(rng);
    double d = p / b1 + (1.0 - p) / b0;
    if (!(d < 0.97)) continue;
    ++tested;
    auto sums = enumerate_words(b0, b1, p, 12);
    double C = 1.0 / b0 + 1.0 / b1;
    for (int n = 1; n <= 12; ++n) {
      CHECK(sums.deriv_abs_mass[n] <= n * C * std::pow(d, n - 1) * (1.0 + 1e-9));
      if (C <= 4.0)
        CHECK(sums.deriv_abs_mass[n] <= 4.0 * n * std::pow(d, n - 1) * (1.0 + 1e-9));
    }
  }
}

TEST_CASE("integer bases have zero response") {
  auto rb = response_build(2.0, 3.0, 0.5, {.tol = 1e-10});
  CHECK(rb.depth == 1);
  CHECK(rb.tail_bound == 0.0);
  CHECK(rb.series_derivative == StepFunction<double>());
  CHECK(rb.mass_derivative == 0.0);
  CHECK(rb.density == StepFunction<double>::constant(1.0));
  CHECK(rb.density_derivative == StepFunction<double>());
}

TEST_CASE("mass derivative equals the integral of the series derivative") {
  auto rb = response_build(1.5, 2.5, 0.5, {.tol = 1e-6});
  CHECK(rb.mass_derivative == doctest::Approx(integral(rb.series_derivative)).epsilon(1e-12));
  CHECK(std::abs(integral(rb.density_derivative)) <= 1e-12);
}

TEST_CASE("letter relabeling flips the sign") {
  ResponseOptions o;
  o.depth_override = 20;
  auto a = response_build(1.5, 2.5, 0.3, o);
  auto b = response_build(2.5, 1.5, 0.7, o);
  CHECK(a.mass_derivative == doctest::Approx(-b.mass_derivative).epsilon(1e-12));
  auto neg = linear_combine<double>({{-1.0, &b.series_derivative}});
  CHECK(l1_distance(a.series_derivative, neg) <= 1e-12);
}

TEST_CASE("finite differences agree at matched truncation") {
  auto rep = fd_check(1.5, 2.5, 0.5, 1e-3, {.tol = 1e-6});
  CHECK(rep.mass_gap <= 1e-4);
  CHECK(rep.series_gap <= 1e-4);
  CHECK(rep.density_gap <= 1e-4);
  CHECK(std::abs(rep.density_derivative_mass) <= 1e-12);
  // quadratic error model: doubling the step should scale gaps by about 4
  if (rep.mass_gap > 1e-9)
    CHECK(rep.mass_gap_wide / rep.mass_gap == doctest::Approx(4.0).epsilon(0.35));
  if (rep.series_gap > 1e-9)
    CHECK(rep.series_gap_wide / rep.series_gap == doctest::Approx(4.0).epsilon(0.35));
  if (rep.density_gap > 1e-9)
    CHECK(rep.density_gap_wide / rep.density_gap == doctest::Approx(4.0).epsilon(0.35));
}

TEST_CASE("series channel is consistent with the density builder") {
  double b0 = 1.5, b1 = 2.5, p = 0.5;
  auto rb = response_build(b0, b1, p, {.tol = 1e-8});
  BetaSystem<double> sys({{Beta<double>(b0), 1.0 - p}, {Beta<double>(b1), p}});
  auto dens = build_density(sys, {.tol = 1e-8});
  double phi_tail = 2.0 * std::pow(rb.delta, rb.depth + 1) / (1.0 - rb.delta);
  CHECK(l1_distance(rb.series, dens.series) <=
        phi_tail + dens.tail_bound + rb.merge_slack + dens.merge_slack + 1e-12);
  CHECK(rb.mass == doctest::Approx(dens.mass).epsilon(1e-9));
}

TEST_CASE("deterministic rebuild") {
  auto a = response_build(1.6, 2.4, 0.45, {.tol = 1e-6});
  auto b = response_build(1.6, 2.4, 0.45, {.tol = 1e-6});
  CHECK(a.series_derivative == b.series_derivative);
  CHECK(a.mass_derivative == b.mass_derivative);
}

TEST_CASE("hypothesis rejections") {
  // mean expansion fails: 0.3/1.6 + 0.7/0.8 > 1
  CHECK_THROWS_AS(response_build(0.8, 1.6, 0.3, {}), hypothesis_error);
  // difference window leaves (0,1)
  CHECK_THROWS_AS(response_build(1.5, 2.5, 0.9995, {.tol = 1e-6, .fd_eps = 1e-3}),
                  hypothesis_error);
  CHECK_THROWS_AS(response_build(1.5, 2.5, 0.0005, {.tol = 1e-6, .fd_eps = 1e-3}),
                  hypothesis_error);
  // window crosses the critical weight even though p itself is fine
  double pc = critical_p(0.8, 1.6);  // 0.4
  CHECK_THROWS_AS(response_build(0.8, 1.6, pc + 1e-4, {.tol = 1e-6, .fd_eps = 1e-3}),
                  hypothesis_error);
  CHECK(response_build(0.8, 1.6, 0.7, {.tol = 1e-6}).p_c == doctest::Approx(0.4));
}

}  // TEST_SUITE

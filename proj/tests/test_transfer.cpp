#include "doctest.h"

#include <cmath>
#include <random>

#include "betadyn/transfer.hpp"

using namespace betadyn;

namespace {

// Direct integral of f over [lo, hi), bypassing the operator machinery.
template <typename S>
S integral_over(const StepFunction<S>& f, S lo, S hi) {
  if (!(lo < hi)) return S(0);
  const auto& b = f.breakpoints();
  const auto& v = f.values();
  S acc(0);
  for (std::size_t i = 0; i < v.size(); ++i) {
    S l = std::max(b[i], lo), r = std::min(b[i + 1], hi);
    if (l < r) acc += v[i] * (r - l);
  }
  return acc;
}

template <>
Rational integral_over<Rational>(const StepFunction<Rational>& f, Rational lo, Rational hi) {
  if (!(lo < hi)) return Rational(0);
  const auto& b = f.breakpoints();
  const auto& v = f.values();
  Rational acc(0);
  for (std::size_t i = 0; i < v.size(); ++i) {
    Rational l = b[i] < lo ? lo : b[i];
    Rational r = hi < b[i + 1] ? hi : b[i + 1];
    if (l < r) acc += v[i] * (r - l);
  }
  return acc;
}

// Independent evaluation of the duality pairing: integral of f over the
// preimage of [0,a) under a single beta-map, summed branch by branch.
template <typename S>
S pullback_integral(const Beta<S>& bm, const StepFunction<S>& f, S a) {
  const S& beta = bm.value;
  S acc(0);
  for (long long d = 0;; ++d) {
    S lo = S(d) / beta;
    if (!(lo < S(1))) break;
    S hi = (S(d) + a) / beta;
    if (S(1) < hi) hi = S(1);
    acc += integral_over(f, lo, hi);
  }
  return acc;
}

StepFunction<double> random_step(std::mt19937_64& rng, int max_cells = 6) {
  std::uniform_int_distribution<int> nc(1, max_cells);
  std::uniform_real_distribution<double> ub(0.0, 1.0), uv(-2.0, 2.0);
  int k = nc(rng);
  std::vector<double> breaks{0.0, 1.0};
  for (int i = 0; i < k - 1; ++i) {
    double b = ub(rng);
    if (b > 1e-6 && b < 1.0 - 1e-6) breaks.push_back(b);
  }
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
  std::vector<double> vals(breaks.size() - 1);
  for (auto& v : vals) v = uv(rng);
  return StepFunction<double>(breaks, vals);
}

}  // namespace

TEST_SUITE("transfer") {

TEST_CASE("indicator image worked example") {
  Beta<double> b(2.5);
  auto g = pf_indicator(b, 0.9);
  // floor(2.25)/2.5 = 0.8 everywhere plus 0.4 on [0, 0.25)
  REQUIRE(g.cells() == 2);
  CHECK(g.breakpoints()[1] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(eval(g, 0.1) == doctest::Approx(1.2).epsilon(1e-15));
  CHECK(eval(g, 0.5) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(integral(g) == doctest::Approx(0.9).epsilon(1e-14));
}

TEST_CASE("indicator image at full height") {
  const double beta = (1.0 + std::sqrt(5.0)) / 2.0;
  auto g = pf_indicator(Beta<double>(beta), 1.0);
  REQUIRE(g.cells() == 2);
  CHECK(g.breakpoints()[1] == doctest::Approx(beta - 1.0).epsilon(1e-15));
  CHECK(eval(g, 0.1) == doctest::Approx(2.0 / beta).epsilon(1e-14));
  CHECK(eval(g, 0.9) == doctest::Approx(1.0 / beta).epsilon(1e-14));
}

TEST_CASE("integer slope preserves the uniform density exactly") {
  BetaSystem<double> sys({{Beta<double>(2.0), 1.0}});
  auto one = StepFunction<double>::constant(1.0);
  CHECK(fixed_point_residual(sys, one) == 0.0);
}

TEST_CASE("golden ratio invariant density is an exact fixed point") {
  const double beta = (1.0 + std::sqrt(5.0)) / 2.0;
  auto phi = from_atoms(0.0, {{1.0, 1.0}, {beta - 1.0, 1.0 / beta}});
  BetaSystem<double> sys({{Beta<double>(beta), 1.0}});
  CHECK(fixed_point_residual(sys, phi) <= 1e-15);
  CHECK(fixed_point_residual(sys, normalize(phi)) <= 1e-15);
}

TEST_CASE("operator image of an indicator matches the step path") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> ua(0.0, 1.0), ubeta(1.05, 6.0);
  for (int rep = 0; rep < 400; ++rep) {
    Beta<double> b(ubeta(rng));
    double a = ua(rng);
    auto lhs = pf_indicator(b, a);
    auto rhs = pf_apply(b, indicator(a));
    CHECK(l1_distance(lhs, rhs) <= 1e-15);
  }
}

TEST_CASE("duality against indicators, floating point") {
  std::mt19937_64 rng(32);
  std::uniform_real_distribution<double> ua(0.0, 1.0), ubeta(1.05, 8.0);
  for (int rep = 0; rep < 400; ++rep) {
    Beta<double> b(ubeta(rng));
    auto f = random_step(rng);
    double a = ua(rng);
    auto lf = pf_apply(b, f);
    double lhs = integral_over(lf, 0.0, a);
    double rhs = pullback_integral(b, f, a);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
  }
}

TEST_CASE("duality against indicators, exact arithmetic") {
  using R = Rational;
  std::mt19937_64 rng(33);
  std::uniform_int_distribution<long long> num(1, 30), den(1, 12);
  for (int rep = 0; rep < 120; ++rep) {
    long long q = den(rng);
    long long p = q + 1 + num(rng) % (4 * q);  // beta in (1, 5]
    Beta<R> b(R(p, q));
    // step function with two random rational cells
    R cut(1 + num(rng) % 28, 30);
    R v0(num(rng), den(rng)), v1(num(rng) - 15, den(rng));
    StepFunction<R> f({R(0), cut, R(1)}, {v0, v1});
    R a(num(rng), 31);
    auto lf = pf_apply(b, f);
    R lhs = integral_over(lf, R(0), a);
    R rhs = pullback_integral(b, f, a);
    CHECK(lhs == rhs);
  }
}

TEST_CASE("image integral is preserved") {
  std::mt19937_64 rng(34);
  std::uniform_real_distribution<double> ubeta(1.05, 9.0);
  for (int rep = 0; rep < 400; ++rep) {
    Beta<double> b(ubeta(rng));
    auto f = random_step(rng);
    auto lf = pf_apply(b, f);
    CHECK(integral(lf) == doctest::Approx(integral(f)).epsilon(1e-10));
  }
}

TEST_CASE("image is positive and l1 non-expansive") {
  std::mt19937_64 rng(35);
  std::uniform_real_distribution<double> ubeta(1.05, 9.0);
  for (int rep = 0; rep < 300; ++rep) {
    Beta<double> b(ubeta(rng));
    auto f = random_step(rng);
    auto abs_f = StepFunction<double>(
        f.breakpoints(), [&] {
          auto v = f.values();
          for (auto& x : v) x = std::abs(x);
          return v;
        }());
    auto labs = pf_apply(b, abs_f);
    CHECK(ess_inf(labs) >= -1e-15);
    CHECK(l1_norm(pf_apply(b, f)) <= l1_norm(f) + 1e-12);
  }
}

TEST_CASE("annealed operator is the probability mixture") {
  std::mt19937_64 rng(36);
  std::uniform_real_distribution<double> ubeta(1.05, 5.0), up(0.05, 0.95);
  for (int rep = 0; rep < 200; ++rep) {
    double p = up(rng);
    Beta<double> b0(ubeta(rng)), b1(ubeta(rng));
    BetaSystem<double> sys({{b0, p}, {b1, 1.0 - p}});
    auto f = random_step(rng);
    auto mixed = annealed_apply(sys, f);
    auto lhs0 = pf_apply(b0, f);
    auto lhs1 = pf_apply(b1, f);
    auto manual = linear_combine<double>({{p, &lhs0}, {1.0 - p, &lhs1}});
    CHECK(l1_distance(mixed, manual) <= 1e-13);
  }
}

TEST_CASE("mean expanding diagnostics") {
  BetaSystem<double> good({{Beta<double>(2.0), 0.5}, {Beta<double>(3.0), 0.5}});
  auto g = mean_expanding_check(good);
  CHECK(g.contraction_ratio == doctest::Approx(5.0 / 12.0).epsilon(1e-16));
  CHECK(g.ratio_below_one);
  CHECK(g.log_mean_positive);

  BetaSystem<double> bad({{Beta<double>(1.2), 0.5}, {Beta<double>(0.8), 0.5}});
  auto r = mean_expanding_check(bad);
  CHECK(r.contraction_ratio == doctest::Approx(0.5 / 1.2 + 0.5 / 0.8).epsilon(1e-15));
  CHECK(r.log_mean == doctest::Approx(0.5 * std::log(1.2) + 0.5 * std::log(0.8)).epsilon(1e-12));
  CHECK_FALSE(r.ratio_below_one);
  CHECK_FALSE(r.log_mean_positive);

  BetaSystem<Rational> exact({{Beta<Rational>(Rational(2)), Rational(1, 2)},
                              {Beta<Rational>(Rational(3)), Rational(1, 2)}});
  CHECK(mean_expanding_check(exact).contraction_ratio == Rational(5, 12));
}

TEST_CASE("system validation") {
  CHECK_THROWS_AS(BetaSystem<double>({}), config_error);
  CHECK_THROWS_AS(BetaSystem<double>({{Beta<double>(2.0), 0.4}}), config_error);
  CHECK_THROWS_AS(BetaSystem<double>({{Beta<double>(2.0), -0.5},
                                      {Beta<double>(3.0), 1.5}}),
                  config_error);
  BetaSystem<double> ok({{Beta<double>(2.0), 0.25}, {Beta<double>(3.0), 0.75}});
  CHECK(ok.min_beta() == 2.0);
  CHECK(ok.max_beta() == 3.0);
}

}  // TEST_SUITE

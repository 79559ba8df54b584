#include "doctest.h"

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "betadyn/iid_density.hpp"
#include "betadyn/quenched.hpp"

using namespace betadyn;

namespace {

BetaSystem<double> two_maps(double b0, double p0, double b1, double p1) {
  return BetaSystem<double>({{Beta<double>{b0}, p0}, {Beta<double>{b1}, p1}});
}

// Digits of the orbit of 1 under a fixed slope, straight from the map.
std::vector<long long> orbit_digits(double beta, int n) {
  std::vector<long long> out;
  Beta<double> b{beta};
  double x = 1.0;
  for (int i = 0; i < n; ++i) {
    auto split = digit_and_apply(b, x);
    out.push_back(split.digit);
    x = split.frac;
  }
  return out;
}

}  // namespace

TEST_SUITE("quenched") {

TEST_CASE("driving path kinds shift consistently") {
  std::vector<NoiseModel> models;
  models.push_back(NoiseModel::periodic({2.5, 3.5, 1.7}));
  models.push_back(NoiseModel::rotation(0.6180339887498949, 2.6, 0.3));
  models.push_back(NoiseModel::iid(two_maps(2.5, 0.5, 3.5, 0.5), 2024, 7));
  models.push_back(NoiseModel::markov({2.5, 3.5},
                                      (Eigen::MatrixXd(2, 2) << 0.9, 0.1, 0.5, 0.5).finished(),
                                      99, 3));
  for (const auto& m : models) {
    for (long long k : {-5LL, -1LL, 0LL, 1LL, 9LL}) {
      auto s = m.shifted(k);
      for (long long j = -12; j <= 12; ++j)
        CHECK(s.beta_at(j) == m.beta_at(j + k));
    }
    CHECK(m.backward(3) == m.beta_at(-3));
    CHECK(m.forward(3) == m.beta_at(3));
    CHECK(m.beta_inf() <= m.beta_sup());
    for (long long j = -40; j <= 40; ++j) {
      CHECK(m.beta_at(j) >= m.beta_inf());
      CHECK(m.beta_at(j) <= m.beta_sup() + 1e-15);
    }
  }

  auto per = NoiseModel::periodic({2.5, 3.5});
  CHECK(per.period() == 2);
  CHECK(per.beta_at(0) == 2.5);
  CHECK(per.beta_at(-1) == 3.5);
  CHECK(per.beta_at(-2) == 2.5);
  CHECK(per.beta_at(3) == 3.5);
  CHECK(per.beta_inf() == 2.5);
  CHECK(per.beta_sup() == 3.5);

  auto rot = NoiseModel::rotation(0.25, 2.0, 0.4, 0.9);
  CHECK(rot.beta_at(0) == doctest::Approx(2.0 + 0.4 * 0.9).epsilon(1e-15));
  CHECK(rot.beta_at(1) == doctest::Approx(2.0 + 0.4 * 0.15).epsilon(1e-13));
  CHECK(rot.beta_at(-1) == doctest::Approx(2.0 + 0.4 * 0.65).epsilon(1e-13));
  CHECK(rot.beta_inf() == 2.0);
  CHECK(rot.beta_sup() == doctest::Approx(2.4));
}

TEST_CASE("seeded paths are reproducible and resample independently") {
  auto sys = two_maps(1.5, 0.3, 2.5, 0.7);
  auto a = NoiseModel::iid(sys, 42, 0);
  auto b = NoiseModel::iid(sys, 42, 0);
  bool equal = true, moved = false;
  auto c = a.resampled(1);
  for (long long j = -50; j <= 50; ++j) {
    equal = equal && (a.beta_at(j) == b.beta_at(j));
    moved = moved || (a.beta_at(j) != c.beta_at(j));
  }
  CHECK(equal);
  CHECK(moved);

  // Values must be {1.5, 2.5} with frequency near the mixing weights.
  int hits = 0;
  const int n = 20000;
  for (long long j = -n; j < n; ++j) {
    double v = a.beta_at(j);
    CHECK((v == 1.5 || v == 2.5));
    hits += (v == 2.5);
  }
  CHECK(std::abs(static_cast<double>(hits) / (2 * n) - 0.7) < 0.02);
}

TEST_CASE("markov paths follow the stationary law in both directions") {
  Eigen::MatrixXd P(2, 2);
  P << 0.9, 0.1, 0.5, 0.5;
  auto m = NoiseModel::markov({2.5, 3.5}, P, 7, 0);

  // pi solves pi P = pi: pi = (5/6, 1/6).
  int fwd_low = 0, bwd_low = 0;
  const int n = 60000;
  for (long long j = 0; j < n; ++j) fwd_low += (m.beta_at(j) == 2.5);
  for (long long j = 1; j <= n; ++j) bwd_low += (m.beta_at(-j) == 2.5);
  CHECK(std::abs(fwd_low / static_cast<double>(n) - 5.0 / 6.0) < 0.02);
  CHECK(std::abs(bwd_low / static_cast<double>(n) - 5.0 / 6.0) < 0.02);

  // Forward transition frequencies out of state 0 match the kernel row.
  int from0 = 0, stay0 = 0;
  for (long long j = 0; j + 1 < n; ++j) {
    if (m.beta_at(j) == 2.5) {
      ++from0;
      stay0 += (m.beta_at(j + 1) == 2.5);
    }
  }
  CHECK(std::abs(stay0 / static_cast<double>(from0) - 0.9) < 0.02);

  // Shifted views share one realization.
  auto s = m.shifted(-1234);
  for (long long j = -20; j <= 20; ++j) CHECK(s.beta_at(j) == m.beta_at(j - 1234));

  Eigen::MatrixXd bad(2, 2);
  bad << 0.9, 0.2, 0.5, 0.5;
  CHECK_THROWS_AS(NoiseModel::markov({2.5, 3.5}, bad, 1), config_error);
  CHECK_THROWS_AS(NoiseModel::markov({2.5}, P, 1), config_error);
  CHECK_THROWS_AS(NoiseModel::markov({2.5, -1.0}, P, 1), config_error);
  CHECK_THROWS_AS(NoiseModel::periodic({}), config_error);
  CHECK_THROWS_AS(NoiseModel::rotation(0.5, -2.0, 0.1), config_error);
}

TEST_CASE("backward weights match hand-computed blocks") {
  // Integer slope: the orbit of 1 dies immediately.
  auto bw2 = backward_weights(NoiseModel::periodic({2.0}), 5);
  CHECK(bw2.d[1] == 1.0);
  for (int m = 1; m <= 5; ++m) CHECK(bw2.w[m] == 0.0);
  for (int m = 2; m <= 5; ++m) CHECK(bw2.d[m] == 0.0);

  // Constant slope 1.5: orbit 0.5, 0.75, 0.125, ...
  auto bw = backward_weights(NoiseModel::periodic({1.5}), 4);
  CHECK(bw.w[0] == 1.0);
  CHECK(bw.w[1] == 0.5 / 1.5);
  CHECK(bw.w[2] == 0.75 / 2.25);
  CHECK(bw.w[3] == 0.125 / 3.375);
  CHECK(bw.d[1] == 1.0 / 1.5);
  CHECK(bw.d[2] == 0.0);
  CHECK(bw.d[3] == 1.0 / 3.375);

  // Period two, sampled so the slope one step back is 3.5.  Blocks:
  //   m=1: 3.5           -> endpoint 0.5,    digit 3
  //   m=2: 2.5, 3.5      -> endpoint 0.75,   digit 1
  //   m=3: 3.5, 2.5, 3.5 -> endpoint 0.875,  digit 0
  //   m=4: 2.5, ..., 3.5 -> endpoint 0.0625, digit 3
  auto bp = backward_weights(NoiseModel::periodic({2.5, 3.5}), 4);
  CHECK(bp.w[1] == 0.5 / 3.5);
  CHECK(bp.w[2] == 0.75 / 8.75);
  CHECK(bp.w[3] == 0.875 / 30.625);
  CHECK(bp.w[4] == 0.0625 / 76.5625);
  CHECK(bp.d[1] == 3.0 / 3.5);
  CHECK(bp.d[2] == 1.0 / 8.75);
  CHECK(bp.d[3] == 0.0);
  CHECK(bp.d[4] == 3.0 / 76.5625);

  // The other phase sees 2.5 one step back.
  auto bq = backward_weights(NoiseModel::periodic({2.5, 3.5}).shifted(1), 2);
  CHECK(bq.w[1] == 0.5 / 2.5);
  CHECK(bq.d[1] == 2.0 / 2.5);

  CHECK_THROWS_AS(backward_weights(NoiseModel::periodic({1.5}), -1), config_error);
}

TEST_CASE("backward blocks obey the digit expansion identities") {
  std::mt19937_64 rng(515);
  std::uniform_real_distribution<double> pick(1.3, 3.8);
  std::vector<NoiseModel> paths;
  paths.push_back(NoiseModel::rotation(0.6180339887498949, 2.6, 0.3));
  paths.push_back(NoiseModel::iid(two_maps(pick(rng), 0.4, pick(rng), 0.6), 11, 2));
  paths.push_back(NoiseModel::markov({2.5, 3.5},
                                     (Eigen::MatrixXd(2, 2) << 0.6, 0.4, 0.3, 0.7).finished(),
                                     5, 1));
  paths.push_back(NoiseModel::periodic({pick(rng), pick(rng), pick(rng)}));

  for (const auto& path : paths) {
    const int M = 40;
    auto bw = backward_weights(path, M);  // telescoping enforced internally
    const double gamma = path.beta_inf();
    for (int m = 1; m <= M; ++m) {
      CHECK(bw.w[m] >= 0.0);
      CHECK(bw.w[m] <= std::pow(gamma, -m) * (1.0 + 1e-12));
      CHECK(bw.d[m] >= 0.0);
    }

    // Along one fixed block the digit weights and the remainder tile 1.
    double x = 1.0, prod = 1.0, sum = 0.0;
    for (int j = 1; j <= M; ++j) {
      Beta<double> b{path.backward(M - j + 1)};
      auto split = digit_and_apply(b, x);
      prod *= b.value;
      sum += static_cast<double>(split.digit) / prod;
      x = split.frac;
    }
    CHECK(std::abs(sum + x / prod - 1.0) <= 1e-13);
  }
}

TEST_CASE("series and periodic normalizers agree") {
  // All weights vanish for an integer slope, so the series is exactly 1.
  auto c3 = normalizer_series(NoiseModel::periodic({3.0}), 20, 40);
  CHECK(c3.value == 1.0);
  auto cper3 = normalizer_periodic(NoiseModel::periodic({3.0}));
  CHECK(cper3.size() == 1);
  CHECK(cper3[0] == doctest::Approx(1.0).epsilon(1e-14));

  auto single = NoiseModel::periodic({2.5});
  auto cs = normalizer_series(single, 40, 60);
  auto cp = normalizer_periodic(single);
  CHECK(std::abs(cs.value - cp[0]) <= 1e-10);
  CHECK(std::abs(cs.value - cp[0]) <= cs.tail_bound + 1e-13);
  CHECK(cs.value > cs.tail_bound);  // certified positive

  auto pair = NoiseModel::periodic({2.5, 3.5});
  auto cpp = normalizer_periodic(pair);
  REQUIRE(cpp.size() == 2);
  for (int j = 0; j < 2; ++j) {
    auto csj = normalizer_series(pair.shifted(j), 40, 60);
    CHECK(std::abs(csj.value - cpp[j]) <= 1e-10);
    CHECK(csj.value > 0.0);
  }

  // The backward profile of the series normalizer is phase-periodic.
  auto prof = normalizer_series(pair, 40, 60, 8);
  for (int s = 0; s <= 8; ++s)
    CHECK(std::abs(prof.backward_values[s] - cpp[(2000 - s) % 2]) <= 1e-10);

  CHECK_THROWS_AS(normalizer_series(NoiseModel::periodic({1.5}), 10, 20), hypothesis_error);
  CHECK_THROWS_AS(normalizer_periodic(NoiseModel::rotation(0.3, 2.5, 0.1)), config_error);
  CHECK_THROWS_AS(normalizer_periodic(NoiseModel::periodic({0.9})), hypothesis_error);
}

TEST_CASE("periodic normalizer closed forms") {
  // Period one: scalar equation c (1 + sum w) = 1, and 1 + sum w is the
  // orbit series of the slope evaluated at 1.
  auto xi = orbit_series(1.5, 400);
  auto c15 = normalizer_periodic(NoiseModel::periodic({1.5}));
  REQUIRE(c15.size() == 1);
  CHECK(c15[0] == doctest::Approx(1.0 / xi.value_at_one).epsilon(1e-12));

  auto fr = functional_residual(NoiseModel::periodic({2.5}),
                                [&](long long) { return normalizer_periodic(
                                                     NoiseModel::periodic({2.5}))[0]; },
                                80);
  CHECK(fr.residual <= 1e-10);
  CHECK(fr.tail_bound <= 1e-10);

  // Digit equation residual at both phases of the period-two path.
  auto pair = NoiseModel::periodic({2.5, 3.5});
  auto cpp = normalizer_periodic(pair);
  for (int j = 0; j < 2; ++j) {
    auto c_at = [&](long long k) {
      long long r = (static_cast<long long>(j) + k) % 2;
      if (r < 0) r += 2;
      return cpp[static_cast<std::size_t>(r)];
    };
    auto res = functional_residual(pair.shifted(j), c_at, 60);
    CHECK(res.residual <= 1e-10);
  }
}

TEST_CASE("functional residual on aperiodic paths") {
  auto zero = functional_residual(NoiseModel::periodic({3.0}),
                                  [](long long) { return 1.0; }, 30);
  CHECK(zero.residual == 0.0);

  std::vector<NoiseModel> paths;
  paths.push_back(NoiseModel::rotation(0.6180339887498949, 2.6, 0.3));
  paths.push_back(NoiseModel::iid(two_maps(2.5, 0.5, 3.5, 0.5), 77, 4));
  paths.push_back(NoiseModel::markov({2.5, 3.2},
                                     (Eigen::MatrixXd(2, 2) << 0.7, 0.3, 0.4, 0.6).finished(),
                                     13, 0));
  for (const auto& path : paths) {
    const int M = 60;
    auto prof = normalizer_series(path, 40, 60, M);
    auto c_at = [&](long long k) {
      REQUIRE(k <= 0);
      return prof.backward_values[static_cast<std::size_t>(-k)];
    };
    auto res = functional_residual(path, c_at, M);
    CHECK(res.residual <= 3.0 * (prof.tail_bound + res.tail_bound) + 1e-12);
  }
}

TEST_CASE("fiber densities") {
  // Integer slope: the fiber sum is the flat density.
  auto flat = fiber_density(NoiseModel::periodic({3.0}), [](long long) { return 1.0; }, 40);
  CHECK(flat.density.cells() == 1);
  CHECK(flat.density.values()[0] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(flat.mass == doctest::Approx(1.0).epsilon(1e-14));

  // Constant slope: normalized fiber sum equals the one-map stationary density.
  auto single = NoiseModel::periodic({2.5});
  double c25 = normalizer_periodic(single)[0];
  auto fib = fiber_density(single, [&](long long) { return c25; }, 60);
  DensityOptions opt;
  opt.tol = 1e-12;
  auto det = build_density(BetaSystem<double>({{Beta<double>{2.5}, 1.0}}), opt);
  CHECK(l1_distance(fib.density, det.density) <= 1e-10);
  CHECK(std::abs(fib.mass - 1.0) <= 1e-10);  // normalizer makes unit mass

  // Period two: one density per phase, visibly different.
  auto pair = NoiseModel::periodic({2.5, 3.5});
  auto cpp = normalizer_periodic(pair);
  auto c_at = [&](long long phase, long long k) {
    long long r = (phase + k) % 2;
    if (r < 0) r += 2;
    return cpp[static_cast<std::size_t>(r)];
  };
  auto f0 = fiber_density(pair, [&](long long k) { return c_at(0, k); }, 60);
  auto f1 = fiber_density(pair.shifted(1), [&](long long k) { return c_at(1, k); }, 60);
  CHECK(l1_distance(f0.density, f1.density) > 1e-3);
  CHECK(std::abs(f0.mass - 1.0) <= 1e-10);
  CHECK(std::abs(f1.mass - 1.0) <= 1e-10);
  for (double v : f0.series.values()) CHECK(v >= 0.0);

  // Aperiodic path: mass is 1 up to the stated truncation tails.
  auto rot = NoiseModel::rotation(0.6180339887498949, 2.6, 0.3);
  auto prof = normalizer_series(rot, 40, 60, 61);
  auto rc = [&](long long k) { return prof.backward_values[static_cast<std::size_t>(-k)]; };
  auto frot = fiber_density(rot, rc, 60);
  CHECK(std::abs(frot.mass - 1.0) <= 3.0 * (prof.tail_bound + frot.tail_bound) + 1e-12);

  CHECK_THROWS_AS(fiber_density(NoiseModel::periodic({0.9}), [](long long) { return 1.0; }, 10),
                  hypothesis_error);
}

TEST_CASE("one-step equivariance of fiber sums") {
  auto triv = equivariance_residual(NoiseModel::periodic({3.0}),
                                    [](long long) { return 1.0; }, 40);
  CHECK(triv <= 1e-15);

  auto pair = NoiseModel::periodic({2.5, 3.5});
  auto cpp = normalizer_periodic(pair);
  for (int j = 0; j < 2; ++j) {
    auto c_at = [&](long long k) {
      long long r = (static_cast<long long>(j) + k) % 2;
      if (r < 0) r += 2;
      return cpp[static_cast<std::size_t>(r)];
    };
    CHECK(equivariance_residual(pair.shifted(j), c_at, 60) <= 1e-8);
  }

  auto rot = NoiseModel::rotation(0.6180339887498949, 2.6, 0.3);
  auto prof = normalizer_series(rot.shifted(1), 40, 60, 62);
  auto c_at = [&](long long k) {
    return prof.backward_values[static_cast<std::size_t>(1 - k)];
  };
  double res = equivariance_residual(rot, c_at, 55);
  CHECK(res <= 5.0 * prof.tail_bound + 1e-10);
}

TEST_CASE("orbit series") {
  auto xi = orbit_series(1.5, 200);
  REQUIRE(xi.coeffs.size() == 201);
  CHECK(xi.coeffs[0] == 1.0);
  CHECK(xi.coeffs[1] == 0.5 / 1.5);
  CHECK(xi.coeffs[2] == 0.75 / 2.25);
  CHECK(xi.coeffs[3] == 0.125 / 3.375);
  CHECK(xi.abs_sum == xi.value_at_one);

  // Truncation stability: geometric tail.
  auto xi2 = orbit_series(1.5, 400);
  CHECK(std::abs(xi.value_at_one - xi2.value_at_one) <= 1e-12);

  CHECK_THROWS_AS(orbit_series(2.0, 50), hypothesis_error);
  CHECK_THROWS_AS(orbit_series((1.0 + std::sqrt(5.0)) / 2.0, 50), hypothesis_error);
  CHECK_THROWS_AS(orbit_series(1.0, 50), config_error);
  CHECK_THROWS_AS(orbit_series(1.5, 0), config_error);

  // No-zero diagnostic on the unit circle clears the truncation tail.
  for (double b : {1.5, 2.5}) {
    auto s = orbit_series(b, 200);
    double tail = std::pow(b, -200) / (b - 1.0);
    CHECK(circle_min_modulus(s, 2048) > tail);
  }
}

TEST_CASE("reciprocal series") {
  auto xi = orbit_series(1.5, 150);
  auto chi = reciprocal_series(xi, 150);
  CHECK(chi.coeffs[0] == 1.0);
  CHECK(chi.coeffs[1] == doctest::Approx(-1.0 / 3.0).epsilon(1e-15));

  // Truncated product with the source series is the identity.
  for (int n = 0; n <= 150; ++n) {
    double conv = 0.0;
    for (int k = 0; k <= n; ++k)
      conv += xi.coeffs[static_cast<std::size_t>(k)] *
              chi.coeffs[static_cast<std::size_t>(n - k)];
    CHECK(std::abs(conv - (n == 0 ? 1.0 : 0.0)) <= 1e-13);
  }

  // Geometric sanity: reciprocal of 1 + a z has coefficients (-a)^n.
  PowerSeries geo;
  geo.coeffs = {1.0, 0.37};
  auto rec = reciprocal_series(geo, 40);
  for (int n = 0; n <= 40; ++n)
    CHECK(rec.coeffs[static_cast<std::size_t>(n)] ==
          doctest::Approx(std::pow(-0.37, n)).epsilon(1e-13));
  CHECK(rec.block_decay == doctest::Approx(std::pow(0.37, 10)).epsilon(1e-10));

  PowerSeries badlead;
  badlead.coeffs = {2.0, 1.0};
  CHECK_THROWS_AS(reciprocal_series(badlead, 40), config_error);
  CHECK_THROWS_AS(reciprocal_series(geo, 10), config_error);
}

TEST_CASE("perturbation window of a base") {
  auto win = perturbation_radius(1.5, 240);
  CHECK(win.frac_radius == 0.25);
  CHECK(win.norm_radius ==
        doctest::Approx(0.03125 / win.reciprocal_bound).epsilon(1e-15));
  CHECK(win.digit_radius > 0.0);
  CHECK(win.radius == std::min({win.digit_radius, win.frac_radius, win.norm_radius}));
  CHECK(win.radius > 0.0);
  CHECK(win.decay_geometric);

  // The reported digit depth is the least one for the reciprocal bound.
  const double B = win.reciprocal_bound;
  int n = 1;
  while (2.0 / (std::pow(1.5, n) * 0.5) >= 1.0 / (2.0 * B)) ++n;
  CHECK(win.digit_depth == n);

  // Inside the digit radius the leading digits of the orbit of 1 agree
  // with those of the base.
  auto ref = orbit_digits(1.5, win.digit_depth);
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> off(-0.999, 0.999);
  for (int t = 0; t < 25; ++t) {
    double beta = 1.5 + off(rng) * win.digit_radius;
    CHECK(orbit_digits(beta, win.digit_depth) == ref);
  }

  // The window shrinks when the reciprocal bound grows.
  auto w120 = perturbation_radius(1.5, 120);
  if (w120.reciprocal_bound >= win.reciprocal_bound)
    CHECK(w120.radius <= win.radius + 1e-15);
  else
    CHECK(win.radius <= w120.radius + 1e-15);

  CHECK_THROWS_AS(perturbation_radius(2.0, 100), hypothesis_error);
  CHECK_THROWS_AS(perturbation_radius(0.8, 100), hypothesis_error);
}

TEST_CASE("perturbative normalizer on a constant path") {
  auto path = NoiseModel::periodic({1.5});
  auto pn = normalizer_perturbative(path, 1.5, 8, 60);
  CHECK(pn.contraction < 1e-6);  // no perturbation at all

  // The k = 0 term alone: correction terms vanish on the constant path.
  auto head = normalizer_perturbative(path, 1.5, 0, 60);
  CHECK(pn.value == head.value);
  auto chi = reciprocal_series(orbit_series(1.5, 120), 120);
  double partial = 0.0;
  for (int k = 0; k <= 60; ++k) partial += chi.coeffs[static_cast<std::size_t>(k)];
  CHECK(head.value == doctest::Approx(partial).epsilon(1e-15));

  auto xi = orbit_series(1.5, 400);
  CHECK(std::abs(pn.value - 1.0 / xi.value_at_one) <= pn.tail_bound + 1e-13);
  double cper = normalizer_periodic(path)[0];
  CHECK(std::abs(pn.value - cper) <= pn.tail_bound + 1e-12);

  // Same agreement at a base where the series normalizer applies too.
  auto p25 = NoiseModel::periodic({2.5});
  auto pn25 = normalizer_perturbative(p25, 2.5, 8, 60);
  auto cs25 = normalizer_series(p25, 40, 60);
  CHECK(std::abs(pn25.value - cs25.value) <= pn25.tail_bound + cs25.tail_bound + 1e-12);

  CHECK_THROWS_AS(normalizer_perturbative(NoiseModel::periodic({2.5}), 1.5, 8, 40),
                  hypothesis_error);
}

TEST_CASE("perturbative normalizer inside a rotation window") {
  const double b0 = 1.5;
  auto win = perturbation_radius(b0, 240);
  const double amp = 0.5 * win.radius;
  auto rot = NoiseModel::rotation(0.6180339887498949, b0 - 0.5 * amp, amp, 0.2);

  const int prof_depth = 100;
  auto pn = normalizer_perturbative(rot, b0, 12, 40, prof_depth);
  CHECK(pn.contraction < 1.0);
  CHECK(pn.value > 0.0);

  auto c_at = [&](long long k) {
    REQUIRE(k <= 0);
    return pn.backward_values[static_cast<std::size_t>(-k)];
  };
  auto res = functional_residual(rot, c_at, 40);
  CHECK(res.residual <= 3.0 * (pn.tail_bound + res.tail_bound) + 1e-12);

  // Continuity: the fiber density stays near the fixed-base density.
  auto fib = fiber_density(rot, c_at, 60);
  DensityOptions opt;
  opt.tol = 1e-10;
  auto det = build_density(BetaSystem<double>({{Beta<double>{b0}, 1.0}}), opt);
  CHECK(l1_distance(fib.density, det.density) <= 10.0 * amp);
}

TEST_CASE("normalizer positivity across sampled paths") {
  auto sys = two_maps(2.5, 0.5, 3.5, 0.5);
  auto base = NoiseModel::iid(sys, 20240817, 0);
  for (std::uint64_t sample = 0; sample < 1000; ++sample) {
    auto cs = normalizer_series(base.resampled(sample), 12, 30);
    CHECK(cs.value > cs.tail_bound);
  }

  auto markov = NoiseModel::markov({2.6, 3.1},
                                   (Eigen::MatrixXd(2, 2) << 0.8, 0.2, 0.3, 0.7).finished(),
                                   55, 0);
  for (std::uint64_t sample = 0; sample < 50; ++sample) {
    auto cs = normalizer_series(markov.resampled(sample), 12, 30);
    CHECK(cs.value > cs.tail_bound);
  }
}

TEST_CASE("quenched determinism") {
  auto rot = NoiseModel::rotation(0.6180339887498949, 2.6, 0.3);
  auto a = normalizer_series(rot, 30, 50, 10);
  auto b = normalizer_series(rot, 30, 50, 10);
  CHECK(a.backward_values == b.backward_values);

  auto iid = NoiseModel::iid(two_maps(2.5, 0.5, 3.5, 0.5), 5, 9);
  CHECK(normalizer_series(iid, 20, 40).value == normalizer_series(iid, 20, 40).value);
  CHECK(normalizer_perturbative(NoiseModel::periodic({1.5}), 1.5, 6, 40).value ==
        normalizer_perturbative(NoiseModel::periodic({1.5}), 1.5, 6, 40).value);
}

}  // TEST_SUITE

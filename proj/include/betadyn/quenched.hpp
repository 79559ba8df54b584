#pragma once

// Fiberwise (path-dependent) invariant densities.  For a driving path the
// density on the fiber over omega is a sum of scaled indicators
//
//   phi_omega = sum_n  c(theta^{-n} omega) / B_n * 1_[0, x_n)
//
// where x_n and B_n are the endpoint and slope product of the length-n
// backward block ending at omega, and the normalizer c solves
// c + sum_m w_m c(theta^{-m}) = 1 with value weights w_m = x_m / B_m.
// Equivariance of phi is equivalent to the digit-weight equation
// c = sum_m d_m c(theta^{-m}); both weight families come out of
// backward_weights and the residual of the digit equation is the
// main a-posteriori check.
//
// Three constructions of c are provided: a Neumann series (any path with
// slopes bounded below by gamma > 2), an exact small linear solve for
// periodic paths (gamma > 1), and a perturbative expansion around a
// constant base valid inside a certified radius (perturbation_radius).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "betadyn/beta_map.hpp"
#include "betadyn/errors.hpp"
#include "betadyn/noise_model.hpp"
#include "betadyn/step_function.hpp"
#include "betadyn/transfer.hpp"

namespace betadyn {

// ---------------------------------------------------------------------------
// backward blocks

// Weights of the backward blocks of a path: for m >= 1, run the orbit of 1
// along the m slopes at indices -m..-1.  w[m] is endpoint / slope product,
// d[m] is last digit / slope product.  Index 0 holds the empty block
// (w[0] = 1, d[0] = 0) so sums can start at 1.
struct BackwardWeights {
  std::vector<double> w;
  std::vector<double> d;
  int depth = 0;
};

inline BackwardWeights backward_weights(const NoiseModel& path, int depth) {
  if (depth < 0) throw config_error("backward depth must be nonnegative");
  BackwardWeights out;
  out.depth = depth;
  out.w.assign(static_cast<std::size_t>(depth) + 1, 0.0);
  out.d.assign(static_cast<std::size_t>(depth) + 1, 0.0);
  out.w[0] = 1.0;
  const double guard = floor_guard().rel_tol;
  for (int m = 1; m <= depth; ++m) {
    double x = 1.0, prod = 1.0;
    double x_prev = 1.0, prod_prev = 1.0;
    long long last_digit = 0;
    for (int j = 1; j <= m; ++j) {
      x_prev = x;
      prod_prev = prod;
      Beta<double> b{path.backward(m - j + 1)};
      auto split = digit_and_apply(b, x);
      x = split.frac;
      last_digit = split.digit;
      prod *= b.value;
    }
    out.w[static_cast<std::size_t>(m)] = x / prod;
    out.d[static_cast<std::size_t>(m)] = static_cast<double>(last_digit) / prod;
    // One block step telescopes exactly: d_m = x_{m-1}/B_{m-1} - x_m/B_m.
    // A guard snap at the last step may displace the identity by up to the
    // guard's relative tolerance times the digit weight.
    double lhs = out.d[static_cast<std::size_t>(m)];
    double rhs = x_prev / prod_prev - x / prod;
    double allow = 1e-13 + 2.0 * guard * std::abs(lhs);
    if (std::abs(lhs - rhs) > allow)
      throw precision_error("backward block telescoping identity failed at depth " +
                            std::to_string(m));
  }
  return out;
}

// ---------------------------------------------------------------------------
// normalizer: Neumann series (slopes bounded below by gamma > 2)

struct SeriesNormalizer {
  double value = 0.0;              // c at the path's sample point
  std::vector<double> backward_values;  // c(theta^{-s}), s = 0..profile_depth
  double tail_bound = 0.0;
  double contraction = 0.0;        // 1 / (gamma - 1)
  int outer_terms = 0;
  int inner_depth = 0;
};

namespace detail {

// w_i(theta^{-s} omega) for s = 0..max_shift, i = 1..depth, filled one
// backward anchor at a time so each orbit of 1 serves a whole diagonal.
inline std::vector<std::vector<double>> backward_weight_table(const NoiseModel& path,
                                                              int max_shift, int depth) {
  std::vector<std::vector<double>> wtab(
      static_cast<std::size_t>(max_shift) + 1,
      std::vector<double>(static_cast<std::size_t>(depth) + 1, 0.0));
  for (auto& row : wtab) row[0] = 1.0;
  for (long long anchor = 1; anchor <= static_cast<long long>(max_shift) + depth; ++anchor) {
    double x = 1.0, prod = 1.0;
    const int steps = static_cast<int>(std::min<long long>(anchor, depth));
    for (int j = 1; j <= steps; ++j) {
      Beta<double> b{path.beta_at(-anchor + j - 1)};
      auto split = digit_and_apply(b, x);
      x = split.frac;
      prod *= b.value;
      long long s = anchor - j;
      if (s <= max_shift)
        wtab[static_cast<std::size_t>(s)][static_cast<std::size_t>(j)] = x / prod;
      if (x == 0.0) break;
    }
  }
  return wtab;
}

}  // namespace detail

inline SeriesNormalizer normalizer_series(const NoiseModel& path, int outer_terms = 40,
                                          int inner_depth = 60, int profile_depth = 0) {
  if (outer_terms < 0 || inner_depth < 1 || profile_depth < 0)
    throw config_error("normalizer_series needs outer_terms >= 0, inner_depth >= 1");
  const double gamma = path.beta_inf();
  if (!(gamma > 2.0))
    throw hypothesis_error("Neumann normalizer needs slopes bounded below by 2");
  const double rho = 1.0 / (gamma - 1.0);

  const int max_shift = profile_depth + outer_terms * inner_depth;
  auto wtab = detail::backward_weight_table(path, max_shift, inner_depth);

  std::vector<double> g(static_cast<std::size_t>(max_shift) + 1, 1.0);
  std::vector<double> acc(static_cast<std::size_t>(profile_depth) + 1, 1.0);
  std::vector<double> next(g.size(), 0.0);
  double sign = -1.0;
  for (int n = 1; n <= outer_terms; ++n) {
    const long long valid = static_cast<long long>(max_shift) -
                            static_cast<long long>(n) * inner_depth;
    for (long long s = 0; s <= valid; ++s) {
      double sum = 0.0;
      const auto& row = wtab[static_cast<std::size_t>(s)];
      for (int i = 1; i <= inner_depth; ++i)
        sum += row[static_cast<std::size_t>(i)] * g[static_cast<std::size_t>(s + i)];
      next[static_cast<std::size_t>(s)] = sum;
    }
    std::swap(g, next);
    for (int s = 0; s <= profile_depth; ++s)
      acc[static_cast<std::size_t>(s)] += sign * g[static_cast<std::size_t>(s)];
    sign = -sign;
  }

  SeriesNormalizer out;
  out.backward_values = std::move(acc);
  out.value = out.backward_values[0];
  out.contraction = rho;
  out.outer_terms = outer_terms;
  out.inner_depth = inner_depth;
  out.tail_bound = std::pow(rho, outer_terms + 1) / (1.0 - rho) +
                   static_cast<double>(outer_terms) *
                       std::pow(gamma, -inner_depth) / (gamma - 1.0);
  return out;
}

// ---------------------------------------------------------------------------
// normalizer: periodic paths (exact linear solve, slopes > 1 suffice)

// c over the phases of a periodic path: result[j] = c at theta^j (sample).
inline std::vector<double> normalizer_periodic(const NoiseModel& path, double tol = 1e-14) {
  if (path.kind() != NoiseModel::Kind::periodic)
    throw config_error("normalizer_periodic needs a periodic path");
  const auto q = static_cast<Eigen::Index>(path.period());
  const double gamma = path.beta_inf();
  if (!(gamma > 1.0))
    throw hypothesis_error("periodic normalizer needs slopes above 1");

  int depth = 1;
  while (std::pow(gamma, -depth) / (gamma - 1.0) > tol) {
    if (++depth > 20000)
      throw precision_error("periodic normalizer depth exceeds the supported range");
  }

  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(q, q);
  for (Eigen::Index j = 0; j < q; ++j) {
    auto bw = backward_weights(path.shifted(j), depth);
    for (int m = 1; m <= depth; ++m) {
      Eigen::Index r = (j - static_cast<Eigen::Index>(m)) % q;
      if (r < 0) r += q;
      A(j, r) += bw.w[static_cast<std::size_t>(m)];
    }
  }
  Eigen::VectorXd rhs = Eigen::VectorXd::Ones(q);
  Eigen::VectorXd c = A.partialPivLu().solve(rhs);
  if ((A * c - rhs).lpNorm<Eigen::Infinity>() > 1e-10)
    throw precision_error("periodic normalizer solve did not converge");
  return std::vector<double>(c.data(), c.data() + q);
}

// ---------------------------------------------------------------------------
// residual diagnostics and fiber densities

// c_at(k) must return the normalizer at theta^k (sample); only k <= 0 is used
// by the functions below except equivariance_residual, which needs k = 1 too.
using NormalizerAt = std::function<double(long long)>;

struct FunctionalResidual {
  double residual = 0.0;    // digit-weight equation defect at the sample point
  double tail_bound = 0.0;  // dropped digit weights times the largest |c| seen
};

inline FunctionalResidual functional_residual(const NoiseModel& path,
                                              const NormalizerAt& c_at, int depth) {
  const double gamma = path.beta_inf();
  if (!(gamma > 1.0)) throw hypothesis_error("digit-weight tails need slopes above 1");
  auto bw = backward_weights(path, depth);
  detail::Accum<double> sum;
  double cmax = std::abs(c_at(0));
  for (int m = 1; m <= depth; ++m) {
    double cm = c_at(-m);
    cmax = std::max(cmax, std::abs(cm));
    sum.add(bw.d[static_cast<std::size_t>(m)] * cm);
  }
  FunctionalResidual out;
  out.residual = std::abs(c_at(0) - sum.get());
  out.tail_bound = cmax * path.beta_sup() * std::pow(gamma, -depth) / (gamma - 1.0);
  return out;
}

struct FiberDensity {
  StepFunction<double> series;   // truncated fiber sum, unnormalized
  StepFunction<double> density;  // series scaled to unit mass
  double mass = 0.0;
  double tail_bound = 0.0;       // max |c| used * gamma^-depth / (gamma - 1)
  int depth = 0;
};

inline FiberDensity fiber_density(const NoiseModel& path, const NormalizerAt& c_at,
                                  int depth) {
  if (depth < 0) throw config_error("fiber depth must be nonnegative");
  const double gamma = path.beta_inf();
  if (!(gamma > 1.0)) throw hypothesis_error("fiber tails need slopes above 1");
  std::vector<std::pair<double, double>> atoms;
  double cmax = 0.0;
  for (int n = 0; n <= depth; ++n) {
    double x = 1.0, prod = 1.0;
    for (int j = 1; j <= n; ++j) {
      Beta<double> b{path.backward(n - j + 1)};
      auto split = digit_and_apply(b, x);
      x = split.frac;
      prod *= b.value;
      if (x == 0.0) break;
    }
    double cn = c_at(-n);
    cmax = std::max(cmax, std::abs(cn));
    if (x > 0.0) atoms.emplace_back(x, cn / prod);
  }
  FiberDensity out;
  out.series = from_atoms(0.0, atoms);
  out.mass = integral(out.series);
  if (!(out.mass > 0.0)) throw precision_error("fiber sum has nonpositive mass");
  out.density = normalize(out.series);
  out.tail_bound = cmax * std::pow(gamma, -depth) / (gamma - 1.0);
  out.depth = depth;
  return out;
}

// L1 defect of one equivariance step: push the fiber sum at the sample point
// through the transfer operator of the slope at index 0 and compare with the
// fiber sum of the shifted path.
inline double equivariance_residual(const NoiseModel& path, const NormalizerAt& c_at,
                                    int depth) {
  auto phi = fiber_density(path, c_at, depth).series;
  auto shifted_c = [&c_at](long long k) { return c_at(k + 1); };
  auto phi_next = fiber_density(path.shifted(1), shifted_c, depth).series;
  return l1_distance(pf_apply(Beta<double>{path.forward(0)}, phi), phi_next);
}

// ---------------------------------------------------------------------------
// scalar power series of a fixed base

// coeffs[n] = x_n / beta0^n along the orbit of 1 under the base map
// (orbit_series), or the reciprocal coefficients (reciprocal_series).
struct PowerSeries {
  std::vector<double> coeffs;
  double value_at_one = 0.0;
  double abs_sum = 0.0;
  double block_decay = 0.0;  // trailing 10-term block ratio, reciprocal only
};

inline PowerSeries orbit_series(double beta0, int depth) {
  if (!(beta0 > 1.0)) throw config_error("base must exceed 1");
  if (depth < 1) throw config_error("series depth must be positive");
  PowerSeries out;
  out.coeffs.reserve(static_cast<std::size_t>(depth) + 1);
  out.coeffs.push_back(1.0);
  Beta<double> b{beta0};
  double x = 1.0, prod = 1.0;
  for (int n = 1; n <= depth; ++n) {
    x = apply(b, x);
    prod *= beta0;
    if (x == 0.0)
      throw hypothesis_error("base is a simple number: the orbit of 1 terminates");
    out.coeffs.push_back(x / prod);
  }
  detail::Accum<double> s;
  for (double v : out.coeffs) s.add(v);
  out.value_at_one = s.get();
  out.abs_sum = out.value_at_one;
  return out;
}

inline PowerSeries reciprocal_series(const PowerSeries& xi, int depth) {
  if (xi.coeffs.empty() || xi.coeffs[0] != 1.0)
    throw config_error("reciprocal needs a series with leading coefficient 1");
  if (depth < 20) throw config_error("reciprocal depth must be at least 20");
  PowerSeries out;
  out.coeffs.assign(static_cast<std::size_t>(depth) + 1, 0.0);
  out.coeffs[0] = 1.0;
  for (int n = 1; n <= depth; ++n) {
    double sum = 0.0;
    const int kmax = std::min<int>(n, static_cast<int>(xi.coeffs.size()) - 1);
    for (int k = 1; k <= kmax; ++k)
      sum += xi.coeffs[static_cast<std::size_t>(k)] *
             out.coeffs[static_cast<std::size_t>(n - k)];
    out.coeffs[static_cast<std::size_t>(n)] = -sum;
  }
  detail::Accum<double> val, mag;
  for (double v : out.coeffs) {
    val.add(v);
    mag.add(std::abs(v));
  }
  out.value_at_one = val.get();
  out.abs_sum = mag.get();
  double last = 0.0, prev = 0.0;
  for (int n = depth - 9; n <= depth; ++n)
    last += std::abs(out.coeffs[static_cast<std::size_t>(n)]);
  for (int n = depth - 19; n <= depth - 10; ++n)
    prev += std::abs(out.coeffs[static_cast<std::size_t>(n)]);
  out.block_decay = (prev > 0.0) ? last / prev : 0.0;
  return out;
}

// Minimum modulus of the series on a uniform grid of the unit circle; a
// diagnostic for the no-zero hypothesis of the perturbative construction.
inline double circle_min_modulus(const PowerSeries& s, int grid = 2048) {
  double best = std::numeric_limits<double>::infinity();
  for (int k = 0; k < grid; ++k) {
    double t = 2.0 * std::numbers::pi * static_cast<double>(k) / grid;
    std::complex<double> z(std::cos(t), std::sin(t)), acc(0.0, 0.0);
    for (auto it = s.coeffs.rbegin(); it != s.coeffs.rend(); ++it) acc = acc * z + *it;
    best = std::min(best, std::abs(acc));
  }
  return best;
}

// ---------------------------------------------------------------------------
// perturbation window of a fixed base

namespace detail {

struct Interval {
  double lo, hi;
};

inline Interval iv_widen(double lo, double hi) {
  return {std::nextafter(lo, -std::numeric_limits<double>::infinity()),
          std::nextafter(hi, std::numeric_limits<double>::infinity())};
}

inline Interval iv_mul(const Interval& a, const Interval& b) {
  double p1 = a.lo * b.lo, p2 = a.lo * b.hi, p3 = a.hi * b.lo, p4 = a.hi * b.hi;
  return iv_widen(std::min(std::min(p1, p2), std::min(p3, p4)),
                  std::max(std::max(p1, p2), std::max(p3, p4)));
}

inline Interval iv_sub_scalar(const Interval& a, double s) {
  return iv_widen(a.lo - s, a.hi - s);
}

}  // namespace detail

struct PerturbationWindow {
  double radius = 0.0;            // certified window half-width
  double digit_radius = 0.0;      // keeps the leading digits of the base orbit
  double frac_radius = 0.0;       // keeps the fractional part away from 0 and 1
  double norm_radius = 0.0;       // keeps the perturbative contraction small
  int digit_depth = 0;            // orbit prefix length the certificate covers
  double reciprocal_bound = 0.0;  // bound on the reciprocal series mass
  bool decay_geometric = false;   // reciprocal tail extrapolation trustworthy
};

// Certified radius around a non-simple base inside which the perturbative
// normalizer applies.  The digit radius comes from interval bisection on the
// condition that the first digit_depth orbit digits stay constant.
inline PerturbationWindow perturbation_radius(double beta0, int depth = 240) {
  if (!(beta0 > 1.0)) throw hypothesis_error("perturbation window needs a base above 1");
  auto xi = orbit_series(beta0, depth);
  auto chi = reciprocal_series(xi, depth);

  PerturbationWindow out;
  double decay = chi.block_decay;
  double last_block = 0.0;
  for (int n = depth - 9; n <= depth; ++n)
    last_block += std::abs(chi.coeffs[static_cast<std::size_t>(n)]);
  if (decay > 0.0 && decay < 1.0) {
    out.reciprocal_bound = chi.abs_sum + last_block * decay / (1.0 - decay);
    out.decay_geometric = decay <= 0.9;
  } else {
    out.reciprocal_bound = chi.abs_sum;
    out.decay_geometric = (decay == 0.0);
  }
  const double B = out.reciprocal_bound;

  const double frac = beta0 - std::floor(beta0);
  out.frac_radius = 0.5 * std::min(frac, 1.0 - frac);
  out.norm_radius = 0.25 * (beta0 - 1.0) * (std::floor(beta0) - 1.0 + frac / 2.0) / B;

  int nn = 1;
  while (2.0 / (std::pow(beta0, nn) * (beta0 - 1.0)) >= 1.0 / (2.0 * B) && nn < 4096)
    ++nn;
  out.digit_depth = nn;

  std::vector<long long> digits;
  digits.reserve(static_cast<std::size_t>(nn));
  {
    Beta<double> b{beta0};
    double x = 1.0;
    for (int i = 1; i <= nn; ++i) {
      auto split = digit_and_apply(b, x);
      digits.push_back(split.digit);
      x = split.frac;
    }
  }
  auto digits_stable = [&](double delta) {
    detail::Interval X = detail::iv_widen(beta0 - delta, beta0 + delta);
    detail::Interval P{1.0, 1.0};
    for (int i = 0; i < nn; ++i) {
      detail::Interval Y = detail::iv_mul(X, P);
      double d = static_cast<double>(digits[static_cast<std::size_t>(i)]);
      if (!(Y.lo > d && Y.hi < d + 1.0)) return false;
      P = detail::iv_sub_scalar(Y, d);
    }
    return true;
  };
  if (!digits_stable(std::ldexp(beta0, -52)))
    throw precision_error("working precision cannot separate the base orbit from digit boundaries");
  double lo = std::ldexp(beta0, -52), hi = out.frac_radius;
  if (digits_stable(hi)) {
    lo = hi;
  } else {
    for (int it = 0; it < 80; ++it) {
      double mid = 0.5 * (lo + hi);
      if (digits_stable(mid))
        lo = mid;
      else
        hi = mid;
    }
  }
  out.digit_radius = lo;
  out.radius = std::min({out.digit_radius, out.frac_radius, out.norm_radius});
  return out;
}

// ---------------------------------------------------------------------------
// normalizer: perturbative expansion around a fixed base

struct PerturbativeNormalizer {
  double value = 0.0;
  std::vector<double> backward_values;  // c(theta^{-s}), s = 0..profile_depth
  double contraction = 0.0;             // q, must be < 1
  double tail_bound = 0.0;
  double base = 0.0;
  PerturbationWindow window;
  int outer_terms = 0;
  int inner_depth = 0;
};

// Expands (I + S)^{-1} 1 around the constant-base operator V with the orbit
// series coefficients: c = sum_k (V^{-1} E)^k V^{-1} 1 where E = V - (I + S)
// has small coefficient sums inside the certified window.
inline PerturbativeNormalizer normalizer_perturbative(const NoiseModel& path, double beta0,
                                                      int outer_terms = 20,
                                                      int inner_depth = 60,
                                                      int profile_depth = 0,
                                                      int series_depth = 240) {
  if (outer_terms < 0 || inner_depth < 1 || profile_depth < 0)
    throw config_error("normalizer_perturbative needs outer_terms >= 0, inner_depth >= 1");
  PerturbativeNormalizer out;
  out.base = beta0;
  out.outer_terms = outer_terms;
  out.inner_depth = inner_depth;
  out.window = perturbation_radius(beta0, std::max(series_depth, 2 * inner_depth));

  const double lo = beta0 - out.window.radius, hi = beta0 + out.window.radius;
  if (!(path.beta_inf() > lo) || !(path.beta_sup() < hi))
    throw hypothesis_error("path slopes leave the certified perturbation window");
  const double gamma = path.beta_inf();

  auto xi = orbit_series(beta0, std::max(series_depth, 2 * inner_depth));
  auto chi = reciprocal_series(xi, std::max(series_depth, 2 * inner_depth));
  const double B = out.window.reciprocal_bound;

  double t_tail = 0.0;
  for (std::size_t n = static_cast<std::size_t>(inner_depth) + 1; n < chi.coeffs.size(); ++n)
    t_tail += std::abs(chi.coeffs[n]);
  if (chi.block_decay > 0.0 && chi.block_decay < 1.0) {
    double last_block = 0.0;
    for (std::size_t n = chi.coeffs.size() - 10; n < chi.coeffs.size(); ++n)
      last_block += std::abs(chi.coeffs[n]);
    t_tail += last_block * chi.block_decay / (1.0 - chi.block_decay);
  }
  const double tail_e = std::pow(beta0, -inner_depth) / (beta0 - 1.0) +
                        std::pow(gamma, -inner_depth) / (gamma - 1.0);

  const int max_shift = profile_depth + outer_terms * 2 * inner_depth;
  auto wtab = detail::backward_weight_table(path, max_shift, inner_depth);

  double sup_e = 0.0;
  for (const auto& row : wtab) {
    double s = 0.0;
    for (int m = 1; m <= inner_depth; ++m)
      s += std::abs(xi.coeffs[static_cast<std::size_t>(m)] - row[static_cast<std::size_t>(m)]);
    sup_e = std::max(sup_e, s);
  }
  out.contraction = (sup_e + tail_e) * B;
  if (!(out.contraction < 1.0))
    throw hypothesis_error("perturbative expansion is not contracting on this path");

  // h_0 = V^{-1} 1 is constant; each further term applies E then V^{-1},
  // consuming 2 * inner_depth shifts of validity.
  double head = 0.0;
  for (int n = 0; n <= inner_depth; ++n) head += chi.coeffs[static_cast<std::size_t>(n)];
  std::vector<double> h(static_cast<std::size_t>(max_shift) + 1, head);
  std::vector<double> acc(static_cast<std::size_t>(profile_depth) + 1, head);
  std::vector<double> tmp(h.size(), 0.0), hn(h.size(), 0.0);
  long long valid = max_shift;
  for (int k = 1; k <= outer_terms; ++k) {
    for (long long s = 0; s + inner_depth <= valid; ++s) {
      double sum = 0.0;
      const auto& row = wtab[static_cast<std::size_t>(s)];
      for (int m = 1; m <= inner_depth; ++m)
        sum += (xi.coeffs[static_cast<std::size_t>(m)] - row[static_cast<std::size_t>(m)]) *
               h[static_cast<std::size_t>(s + m)];
      tmp[static_cast<std::size_t>(s)] = sum;
    }
    valid -= inner_depth;
    for (long long s = 0; s + inner_depth <= valid; ++s) {
      double sum = 0.0;
      for (int n = 0; n <= inner_depth; ++n)
        sum += chi.coeffs[static_cast<std::size_t>(n)] * tmp[static_cast<std::size_t>(s + n)];
      hn[static_cast<std::size_t>(s)] = sum;
    }
    valid -= inner_depth;
    std::swap(h, hn);
    for (int s = 0; s <= profile_depth; ++s)
      acc[static_cast<std::size_t>(s)] += h[static_cast<std::size_t>(s)];
  }

  const double q = out.contraction;
  out.backward_values = std::move(acc);
  out.value = out.backward_values[0];
  out.tail_bound = B * std::pow(q, outer_terms + 1) / (1.0 - q) +
                   (t_tail + B * tail_e) / ((1.0 - q) * (1.0 - q));
  return out;
}

}  // namespace betadyn

#pragma once

// Parameter derivative of the stationary density for a two-map Bernoulli
// system: d/dp of the series, of its mass, and of the normalized density,
// together with matched-truncation finite-difference cross checks.
//
// The derivative weight of a word factors through the product rule, so it
// propagates alongside the value weight as one extra channel of the layer
// engine; four more channels carry the series at p +- eps and p +- 2 eps on
// the same atom set, which makes finite differences share the truncation
// error of the analytic value exactly.

#include <array>
#include <cmath>
#include <cstddef>

#include "betadyn/errors.hpp"
#include "betadyn/iid_density.hpp"
#include "betadyn/layer_dp.hpp"
#include "betadyn/step_function.hpp"

namespace betadyn {

// Smallest selection weight of the steeper map for which the mean expansion
// condition p/b1 + (1-p)/b0 < 1 can hold; 0 when the flatter map already
// expands.
inline double critical_p(double beta0, double beta1) {
  if (!(beta1 > 1.0)) throw config_error("steeper slope must exceed 1");
  if (!(beta0 > 0.0) || !(beta0 <= beta1))
    throw config_error("slopes must satisfy 0 < beta0 <= beta1");
  if (beta0 >= 1.0) return 0.0;
  return (1.0 / beta0 - 1.0) / (1.0 / beta0 - 1.0 / beta1);
}

struct ResponseOptions {
  double tol = 1e-8;
  double fd_eps = 1e-3;
  int depth_override = 0;  // 0 derives the depth from tol
  std::size_t exact_limit = 200000;
  int grid_log2 = 19;
  int max_depth = 4096;
};

struct ResponseBuild {
  double beta0 = 0.0, beta1 = 0.0, p = 0.0, p_c = 0.0;
  double delta = 0.0;       // contraction ratio at p
  double delta_max = 0.0;   // worst ratio over the finite-difference window
  double eps = 0.0;
  int depth = 0;
  double tail_bound = 0.0;  // certified L1 tail of the derivative series
  double merge_slack = 0.0; // max over channels
  bool orbit_hit_zero = false;
  double mass = 0.0;             // integral of the series at p
  double mass_derivative = 0.0;  // accumulated independently of the series
  StepFunction<double> series, series_derivative;
  StepFunction<double> density, density_derivative;
  std::array<double, 4> shifted_mass{};              // +e, -e, +2e, -2e
  std::array<StepFunction<double>, 4> shifted_series;
};

namespace detail {

inline double response_ratio(double b0, double b1, double p) {
  return p / b1 + (1.0 - p) / b0;
}

// Sum over n > N of C n d^{n-1}; the (N+1-Nd) factor comes from
// differentiating the geometric series and must not be dropped.
inline double response_tail(double C, double d, int N) {
  return C * std::pow(d, N) * (N + 1 - N * d) / ((1.0 - d) * (1.0 - d));
}

}  // namespace detail

inline ResponseBuild response_build(double beta0, double beta1, double p,
                                    const ResponseOptions& opt = {}) {
  if (!(beta0 > 0.0) || !(beta1 > 0.0)) throw config_error("slopes must be positive");
  if (!(opt.tol > 0.0)) throw config_error("tolerance must be positive");
  if (!(opt.fd_eps > 0.0)) throw config_error("difference step must be positive");
  const double e = opt.fd_eps;
  if (!(p - 2.0 * e > 0.0) || !(p + 2.0 * e < 1.0))
    throw hypothesis_error("selection weight with its difference window must lie inside (0,1)");
  const double dmax = std::max(detail::response_ratio(beta0, beta1, p - 2.0 * e),
                               detail::response_ratio(beta0, beta1, p + 2.0 * e));
  if (!(dmax < 1.0))
    throw hypothesis_error("mean expansion fails on the difference window: p/b1 + (1-p)/b0 must stay below 1");

  ResponseBuild out;
  out.beta0 = beta0;
  out.beta1 = beta1;
  out.p = p;
  out.p_c = (beta0 <= beta1 && beta1 > 1.0) ? critical_p(beta0, beta1) : 0.0;
  out.delta = detail::response_ratio(beta0, beta1, p);
  out.delta_max = dmax;
  out.eps = e;

  const double C = std::max(8.0, 2.0 * (1.0 / beta0 + 1.0 / beta1));
  int N = 1;
  if (opt.depth_override > 0) {
    N = opt.depth_override;
  } else {
    while (detail::response_tail(C, dmax, N) > opt.tol && N < opt.max_depth) ++N;
    if (detail::response_tail(C, dmax, N) > opt.tol)
      throw precision_error("truncation depth exceeds the configured maximum");
  }
  out.depth = N;
  out.tail_bound = detail::response_tail(C, dmax, N);

  constexpr int NC = 6;  // value, derivative, +e, -e, +2e, -2e
  using Engine = LayerEngine<NC>;
  using Mat = Eigen::Matrix<double, NC, NC>;
  const std::array<double, 5> ps{p, p + e, p - e, p + 2.0 * e, p - 2.0 * e};

  Mat f1 = Mat::Zero(), f0 = Mat::Zero();
  f1(0, 0) = ps[0] / beta1;
  f1(1, 0) = 1.0 / beta1;
  f1(1, 1) = ps[0] / beta1;
  f0(0, 0) = (1.0 - ps[0]) / beta0;
  f0(1, 0) = -1.0 / beta0;
  f0(1, 1) = (1.0 - ps[0]) / beta0;
  for (int c = 0; c < 4; ++c) {
    f1(2 + c, 2 + c) = ps[1 + c] / beta1;
    f0(2 + c, 2 + c) = (1.0 - ps[1 + c]) / beta0;
  }

  LayerOptions lopt{opt.exact_limit, opt.grid_log2, 0.0};
  Engine::Vec seed;
  seed << 1.0, 0.0, 1.0, 1.0, 1.0, 1.0;
  Engine engine({{Beta<double>(beta0), f0}, {Beta<double>(beta1), f1}}, seed, lopt);

  std::vector<Engine::Atom> exact_acc;
  std::vector<Engine::Vec> grid_acc;
  engine.accumulate(exact_acc, grid_acc);
  double dmass = 0.0;
  for (int n = 1; n <= N; ++n) {
    engine.step();
    if (engine.abs_mass().maxCoeff() == 0.0) {
      out.depth = n;
      out.tail_bound = 0.0;
      break;
    }
    dmass += engine.layer_integral()(1);
    engine.accumulate(exact_acc, grid_acc);
  }
  out.orbit_hit_zero = engine.hit_zero();
  out.merge_slack = engine.slack().maxCoeff();
  out.mass_derivative = dmass;

  const double g = engine.grid_cell();
  auto channel_fn = [&](int c) {
    std::vector<std::pair<double, double>> atoms;
    atoms.reserve(exact_acc.size() + 64);
    for (const auto& [x, w] : exact_acc)
      if (w(c) != 0.0) atoms.push_back({x, w(c)});
    for (std::size_t j = 0; j < grid_acc.size(); ++j)
      if (grid_acc[j](c) != 0.0) atoms.push_back({(j + 0.5) * g, grid_acc[j](c)});
    return from_atoms(0.0, std::move(atoms));
  };

  out.series = channel_fn(0);
  out.series_derivative = channel_fn(1);
  for (int c = 0; c < 4; ++c) {
    out.shifted_series[c] = channel_fn(2 + c);
    out.shifted_mass[c] = integral(out.shifted_series[c]);
  }
  out.mass = integral(out.series);
  out.density = normalize(out.series);
  out.density_derivative = linear_combine<double>(
      {{1.0 / out.mass, &out.series_derivative},
       {-out.mass_derivative / (out.mass * out.mass), &out.series}});
  return out;
}

inline StepFunction<double> series_derivative(double beta0, double beta1, double p,
                                              const ResponseOptions& opt = {}) {
  return response_build(beta0, beta1, p, opt).series_derivative;
}

inline double mass_derivative(double beta0, double beta1, double p,
                              const ResponseOptions& opt = {}) {
  return response_build(beta0, beta1, p, opt).mass_derivative;
}

inline StepFunction<double> density_derivative(double beta0, double beta1, double p,
                                               const ResponseOptions& opt = {}) {
  return response_build(beta0, beta1, p, opt).density_derivative;
}

struct FdReport {
  double eps = 0.0;
  double tail_bound = 0.0;
  double mass_derivative = 0.0, mass_fd = 0.0, mass_fd_wide = 0.0;
  double mass_gap = 0.0, mass_gap_wide = 0.0;
  double series_gap = 0.0, series_gap_wide = 0.0;    // L1
  double density_gap = 0.0, density_gap_wide = 0.0;  // L1
  double density_derivative_mass = 0.0;              // should vanish
};

// Central differences against the analytic derivative on the shared atom set;
// the wide variants use step 2*eps so a quadratic error model can be checked.
inline FdReport fd_check(const ResponseBuild& rb) {
  const double eps = rb.eps;
  FdReport rep;
  rep.eps = eps;
  rep.tail_bound = rb.tail_bound;
  rep.mass_derivative = rb.mass_derivative;
  rep.mass_fd = (rb.shifted_mass[0] - rb.shifted_mass[1]) / (2.0 * eps);
  rep.mass_fd_wide = (rb.shifted_mass[2] - rb.shifted_mass[3]) / (4.0 * eps);
  rep.mass_gap = std::abs(rep.mass_fd - rb.mass_derivative);
  rep.mass_gap_wide = std::abs(rep.mass_fd_wide - rb.mass_derivative);

  auto fd_series = linear_combine<double>({{0.5 / eps, &rb.shifted_series[0]},
                                           {-0.5 / eps, &rb.shifted_series[1]}});
  auto fd_series_wide = linear_combine<double>(
      {{0.25 / eps, &rb.shifted_series[2]}, {-0.25 / eps, &rb.shifted_series[3]}});
  rep.series_gap = l1_distance(fd_series, rb.series_derivative);
  rep.series_gap_wide = l1_distance(fd_series_wide, rb.series_derivative);

  auto h_plus = normalize(rb.shifted_series[0]);
  auto h_minus = normalize(rb.shifted_series[1]);
  auto h_plus2 = normalize(rb.shifted_series[2]);
  auto h_minus2 = normalize(rb.shifted_series[3]);
  auto fd_h = linear_combine<double>({{0.5 / eps, &h_plus}, {-0.5 / eps, &h_minus}});
  auto fd_h_wide =
      linear_combine<double>({{0.25 / eps, &h_plus2}, {-0.25 / eps, &h_minus2}});
  rep.density_gap = l1_distance(fd_h, rb.density_derivative);
  rep.density_gap_wide = l1_distance(fd_h_wide, rb.density_derivative);
  rep.density_derivative_mass = integral(rb.density_derivative);
  return rep;
}

inline FdReport fd_check(double beta0, double beta1, double p, double eps,
                         ResponseOptions opt = {}) {
  opt.fd_eps = eps;
  return fd_check(response_build(beta0, beta1, p, opt));
}

}  // namespace betadyn

#pragma once

// Stationary density of an i.i.d. random beta-system as an explicit series of
// indicator layers, with a certified truncation tail, normalization, and
// closed-form extreme values for cross-checking.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "betadyn/errors.hpp"
#include "betadyn/layer_dp.hpp"
#include "betadyn/step_function.hpp"
#include "betadyn/transfer.hpp"

namespace betadyn {

// One word layer: orbit points with positive weights, sorted and merged.
template <typename S = double>
struct AtomMeasure {
  std::vector<std::pair<S, S>> atoms;
};

// Advances a layer one depth: every atom (v, w) spawns (T_i(v), w p_i / b_i)
// for each branch map; children landing exactly on 0 carry no mass and are
// dropped, equal points are merged.
template <typename S>
AtomMeasure<S> propagate(const BetaSystem<S>& sys, const AtomMeasure<S>& layer) {
  std::vector<std::pair<S, S>> next;
  next.reserve(layer.atoms.size() * sys.size());
  for (const auto& [v, w] : layer.atoms) {
    for (const auto& m : sys.maps()) {
      auto split = digit_and_apply(m.map, v);
      if (split.frac == S(0)) continue;
      next.push_back({split.frac, w * m.prob / m.map.value});
    }
  }
  std::sort(next.begin(), next.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  AtomMeasure<S> out;
  for (auto& a : next) {
    if (!out.atoms.empty() && out.atoms.back().first == a.first) {
      out.atoms.back().second += a.second;
    } else {
      out.atoms.push_back(std::move(a));
    }
  }
  return out;
}

struct DensityOptions {
  double tol = 1e-8;
  std::size_t exact_limit = 200000;
  int grid_log2 = 21;
  double weight_floor = 0.0;
  int max_depth = 4096;
};

struct DensityReport {
  StepFunction<double> series;   // truncated unnormalized density
  StepFunction<double> density;  // normalized
  double mass = 0.0;             // integral of the series
  int depth = 0;
  double contraction_ratio = 0.0;
  double tail_bound = 0.0;       // L1/BV certificate for the dropped tail
  double merge_slack = 0.0;      // grid quantization allowance
  double dropped_mass = 0.0;     // weight-floor losses, 0 unless enabled
  bool orbit_hit_zero = false;
  bool finite_series = false;    // a layer emptied out; the series is exact
  double ess_sup_h = 0.0, ess_inf_h = 0.0;
  double formula_sup = 0.0, formula_inf = 0.0;
  double weighted_point_sum = 0.0;  // sum over depth >= 1 of weight * point
  bool discretized_noise = false;   // set when the system came from quadrature
};

namespace detail {

// Minimal N with 2 r^{N+1} / (1 - r) <= tol, walked multiplicatively.
inline std::pair<int, double> truncation_depth(double r, double tol, int max_depth) {
  double t = 2.0 * r / (1.0 - r);
  int n = 0;
  while (t > tol && n < max_depth) {
    ++n;
    t *= r;
  }
  if (t > tol)
    throw precision_error("truncation depth exceeds the configured maximum");
  return {n, t};
}

}  // namespace detail

inline DensityReport build_density(const BetaSystem<double>& sys,
                                   const DensityOptions& opt = {}) {
  const double r = to_double(sys.contraction_ratio());
  if (!(r < 1.0))
    throw hypothesis_error("mean expansion fails: sum of prob/beta must be below 1");
  if (!(opt.tol > 0.0)) throw config_error("tolerance must be positive");

  auto [N, tail] = detail::truncation_depth(r, opt.tol, opt.max_depth);

  using Engine = LayerEngine<1>;
  std::vector<ChannelMap<1>> cmaps;
  cmaps.reserve(sys.size());
  for (const auto& m : sys.maps()) {
    Eigen::Matrix<double, 1, 1> f;
    f(0, 0) = m.prob / m.map.value;
    cmaps.push_back({m.map, f});
  }
  LayerOptions lopt{opt.exact_limit, opt.grid_log2, opt.weight_floor};
  Engine engine(std::move(cmaps), Engine::Vec::Ones(), lopt);

  std::vector<Engine::Atom> exact_acc;
  std::vector<Engine::Vec> grid_acc;
  engine.accumulate(exact_acc, grid_acc);

  DensityReport rep;
  rep.contraction_ratio = r;
  rep.depth = N;
  rep.tail_bound = tail;
  for (int n = 1; n <= N; ++n) {
    engine.step();
    if (engine.abs_mass()(0) == 0.0) {
      rep.finite_series = true;
      rep.depth = n;
      rep.tail_bound = 0.0;
      break;
    }
    engine.accumulate(exact_acc, grid_acc);
  }
  rep.orbit_hit_zero = engine.hit_zero();
  rep.merge_slack = engine.slack()(0);
  rep.dropped_mass = engine.dropped()(0);

  std::vector<std::pair<double, double>> atoms;
  atoms.reserve(exact_acc.size() + grid_acc.size() / 8);
  for (const auto& [x, w] : exact_acc) atoms.push_back({x, w(0)});
  const double g = engine.grid_cell();
  for (std::size_t j = 0; j < grid_acc.size(); ++j)
    if (grid_acc[j](0) != 0.0) atoms.push_back({(j + 0.5) * g, grid_acc[j](0)});

  rep.series = from_atoms(0.0, std::move(atoms));
  rep.mass = integral(rep.series);
  rep.weighted_point_sum = rep.mass - 1.0;
  rep.density = normalize(rep.series);
  rep.ess_sup_h = ess_sup(rep.density);
  rep.ess_inf_h = ess_inf(rep.density);
  rep.formula_inf = 1.0 / rep.mass;
  rep.formula_sup = 1.0 / ((1.0 - r) * rep.mass);
  return rep;
}

struct BoundsReport {
  double sup = 0.0, inf = 0.0;
  double formula_sup = 0.0, formula_inf = 0.0;
  bool orbit_hit_zero = false;
};

inline BoundsReport density_bounds(const BetaSystem<double>& sys,
                                   const DensityOptions& opt = {}) {
  DensityReport rep = build_density(sys, opt);
  return {rep.ess_sup_h, rep.ess_inf_h, rep.formula_sup, rep.formula_inf,
          rep.orbit_hit_zero};
}

// Discretization of a continuous slope distribution into a finite system.
struct SlopeDistribution {
  enum class Kind { uniform, tabulated } kind = Kind::uniform;
  double a = 0.0, b = 0.0;                       // uniform support
  std::vector<std::pair<double, double>> atoms;  // tabulated (beta, weight)
};

// Gauss-Legendre nodes and probability weights on (a, b) via the symmetric
// tridiagonal Jacobi matrix.
inline std::vector<std::pair<double, double>> gauss_legendre(double a, double b,
                                                             int nodes) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(nodes, nodes);
  for (int k = 1; k < nodes; ++k) {
    double off = k / std::sqrt(4.0 * k * k - 1.0);
    J(k, k - 1) = J(k - 1, k) = off;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  std::vector<std::pair<double, double>> out(nodes);
  for (int i = 0; i < nodes; ++i) {
    double x = es.eigenvalues()(i);
    double w = es.eigenvectors()(0, i);
    out[i] = {a + (b - a) * (x + 1.0) / 2.0, w * w};
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline BetaSystem<double> quadrature_system(const SlopeDistribution& dist,
                                            int nodes) {
  std::vector<WeightedMap<double>> maps;
  if (dist.kind == SlopeDistribution::Kind::uniform) {
    if (!(dist.a > 0.0))
      throw config_error("slope distribution support must stay above 0");
    if (!(dist.b > dist.a)) throw config_error("empty slope support");
    if (nodes < 1) throw config_error("need at least one quadrature node");
    for (auto [x, w] : gauss_legendre(dist.a, dist.b, nodes))
      maps.push_back({Beta<double>(x), w});
  } else {
    double total = 0.0;
    for (auto [x, w] : dist.atoms) {
      if (!(x > 0.0))
        throw config_error("slope distribution support must stay above 0");
      if (!(w > 0.0)) throw config_error("tabulated weights must be positive");
      total += w;
    }
    if (dist.atoms.empty()) throw config_error("empty slope table");
    for (auto [x, w] : dist.atoms) maps.push_back({Beta<double>(x), w / total});
  }
  return BetaSystem<double>(std::move(maps));
}

}  // namespace betadyn

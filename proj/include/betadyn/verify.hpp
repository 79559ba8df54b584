#pragma once

// Independent cross-checks of the constructed densities: an exact Ulam
// discretization of the averaged transfer operator and a seeded Monte Carlo
// orbit simulation.  Neither shares code with the series constructions, so
// agreement is meaningful.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "betadyn/beta_map.hpp"
#include "betadyn/errors.hpp"
#include "betadyn/noise_model.hpp"
#include "betadyn/step_function.hpp"
#include "betadyn/transfer.hpp"

namespace betadyn {

// ---------------------------------------------------------------------------
// Ulam discretization

struct UlamOperator {
  Eigen::Index bins = 0;
  Eigen::SparseMatrix<double, Eigen::RowMajor> matrix;  // row-stochastic
};

// Row i holds the transition probabilities of a uniform point of cell i under
// one averaged map application.  Every entry is an exact interval-intersection
// length of the piecewise-linear branches; no sampling is involved.
inline UlamOperator ulam_matrix(const BetaSystem<double>& sys, Eigen::Index bins) {
  if (bins < 2) throw config_error("ulam discretization needs at least 2 bins");
  const double m = static_cast<double>(bins);
  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(static_cast<std::size_t>(bins) * 4);
  for (Eigen::Index i = 0; i < bins; ++i) {
    const double xlo = static_cast<double>(i) / m;
    const double xhi = static_cast<double>(i + 1) / m;
    for (const auto& wm : sys.maps()) {
      const double beta = wm.map.value;
      const auto dlo = static_cast<long long>(std::floor(beta * xlo));
      const auto dhi = static_cast<long long>(std::ceil(beta * xhi));
      for (long long d = dlo; d < dhi; ++d) {
        const double plo = std::max(xlo, static_cast<double>(d) / beta);
        const double phi = std::min({xhi, static_cast<double>(d + 1) / beta, 1.0});
        if (!(phi > plo)) continue;
        double ylo = std::max(0.0, beta * plo - static_cast<double>(d));
        double yhi = std::min(1.0, beta * phi - static_cast<double>(d));
        auto j = static_cast<Eigen::Index>(std::floor(ylo * m));
        for (; j < bins && static_cast<double>(j) / m < yhi; ++j) {
          const double cell_lo = static_cast<double>(j) / m;
          const double cell_hi = static_cast<double>(j + 1) / m;
          const double overlap = std::min(yhi, cell_hi) - std::max(ylo, cell_lo);
          if (overlap > 0.0)
            entries.emplace_back(i, j, wm.prob * overlap * m / beta);
        }
      }
    }
  }
  UlamOperator op;
  op.bins = bins;
  op.matrix.resize(bins, bins);
  op.matrix.setFromTriplets(entries.begin(), entries.end());
  for (Eigen::Index i = 0; i < bins; ++i) {
    double row = 0.0;
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(op.matrix, i); it;
         ++it)
      row += it.value();
    if (std::abs(row - 1.0) > 1e-12)
      throw precision_error("ulam row " + std::to_string(i) + " sums to " +
                            std::to_string(row));
  }
  return op;
}

struct UlamStationary {
  StepFunction<double> density;
  double residual = 0.0;  // final L1 change of the fixed-vector iteration
  int iterations = 0;
};

inline UlamStationary stationary_vector(const UlamOperator& op, double tol = 1e-12,
                                        int max_iterations = 200000) {
  const auto bins = op.bins;
  Eigen::VectorXd v = Eigen::VectorXd::Constant(bins, 1.0 / static_cast<double>(bins));
  Eigen::VectorXd next(bins);
  double residual = 0.0;
  int used = 0;
  for (int it = 1; it <= max_iterations; ++it) {
    next.setZero();
    for (Eigen::Index i = 0; i < bins; ++i) {
      const double vi = v(i);
      if (vi == 0.0) continue;
      for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator e(op.matrix, i); e;
           ++e)
        next(e.col()) += vi * e.value();
    }
    next /= next.sum();
    residual = (next - v).lpNorm<1>();
    v.swap(next);
    used = it;
    if (residual <= tol) break;
  }
  if (residual > tol)
    throw precision_error("ulam fixed vector did not converge: residual " +
                          std::to_string(residual));
  std::vector<double> breaks(static_cast<std::size_t>(bins) + 1);
  std::vector<double> vals(static_cast<std::size_t>(bins));
  for (Eigen::Index j = 0; j <= bins; ++j)
    breaks[static_cast<std::size_t>(j)] = static_cast<double>(j) / static_cast<double>(bins);
  for (Eigen::Index j = 0; j < bins; ++j)
    vals[static_cast<std::size_t>(j)] = v(j) * static_cast<double>(bins);
  UlamStationary out;
  out.density = StepFunction<double>(std::move(breaks), std::move(vals));
  out.residual = residual;
  out.iterations = used;
  return out;
}

// ---------------------------------------------------------------------------
// Monte Carlo orbit simulation

struct SimulateOptions {
  long long orbits = 1000;
  long long steps = 1000;    // recorded per orbit, after burn-in
  long long burn_in = 1000;
  int bins = 256;
  std::uint64_t seed = 1;
};

struct SimulateReport {
  StepFunction<double> histogram;  // normalized to a density
  long long samples = 0;
  bool mean_expanding = true;
};

namespace detail {

inline StepFunction<double> counts_to_density(const std::vector<std::uint64_t>& counts,
                                              long long total) {
  const auto bins = counts.size();
  std::vector<double> breaks(bins + 1), vals(bins);
  for (std::size_t j = 0; j <= bins; ++j)
    breaks[j] = static_cast<double>(j) / static_cast<double>(bins);
  for (std::size_t j = 0; j < bins; ++j)
    vals[j] = static_cast<double>(counts[j]) * static_cast<double>(bins) /
              static_cast<double>(total);
  return StepFunction<double>(std::move(breaks), std::move(vals));
}

inline std::size_t histogram_bin(double x, int bins) {
  auto b = static_cast<long long>(std::floor(x * bins));
  if (b < 0) b = 0;
  if (b >= bins) b = bins - 1;
  return static_cast<std::size_t>(b);
}

}  // namespace detail

// I.i.d. letter simulation.  Each orbit runs an independent counter-seeded
// stream, so the result is reproducible and order-independent.  Dyadic slopes
// lose one significand bit per step in double arithmetic, so histograms for
// integer power-of-two slopes should use short burn-ins.
inline SimulateReport simulate(const BetaSystem<double>& sys, const SimulateOptions& opt) {
  if (opt.orbits < 1 || opt.steps < 1 || opt.burn_in < 0 || opt.bins < 2)
    throw config_error("simulation needs orbits >= 1, steps >= 1, bins >= 2");
  const auto& maps = sys.maps();
  std::vector<double> cum(maps.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < maps.size(); ++k) {
    acc += maps[k].prob;
    cum[k] = acc;
  }
  std::vector<std::uint64_t> counts(static_cast<std::size_t>(opt.bins), 0);
  for (long long orbit = 0; orbit < opt.orbits; ++orbit) {
    double x = detail::index_uniform(opt.seed, static_cast<std::uint64_t>(orbit), -1);
    for (long long t = 0; t < opt.burn_in + opt.steps; ++t) {
      const double u = detail::index_uniform(opt.seed, static_cast<std::uint64_t>(orbit), t);
      std::size_t k = 0;
      while (k + 1 < cum.size() && u >= cum[k]) ++k;
      x = apply(maps[k].map, x);
      if (t >= opt.burn_in) ++counts[detail::histogram_bin(x, opt.bins)];
    }
  }
  SimulateReport out;
  out.samples = opt.orbits * opt.steps;
  out.histogram = detail::counts_to_density(counts, out.samples);
  out.mean_expanding = mean_expanding_check(sys).log_mean_positive;
  return out;
}

// Quenched simulation: orbit o follows fiber o of the driving path (seeded
// kinds are resampled per orbit, deterministic kinds are index-shifted), and
// the histogram aggregates over fibers.
inline SimulateReport simulate(const NoiseModel& model, const SimulateOptions& opt) {
  if (opt.orbits < 1 || opt.steps < 1 || opt.burn_in < 0 || opt.bins < 2)
    throw config_error("simulation needs orbits >= 1, steps >= 1, bins >= 2");
  const bool seeded = model.kind() == NoiseModel::Kind::two_sided_iid ||
                      model.kind() == NoiseModel::Kind::two_sided_markov;
  std::vector<std::uint64_t> counts(static_cast<std::size_t>(opt.bins), 0);
  double log_sum = 0.0;
  long long log_terms = 0;
  for (long long orbit = 0; orbit < opt.orbits; ++orbit) {
    NoiseModel fiber = seeded ? model.resampled(static_cast<std::uint64_t>(orbit))
                              : model.shifted(orbit);
    double x = detail::index_uniform(opt.seed, static_cast<std::uint64_t>(orbit), -1);
    for (long long t = 0; t < opt.burn_in + opt.steps; ++t) {
      Beta<double> b{fiber.forward(t)};
      x = apply(b, x);
      if (t >= opt.burn_in) {
        ++counts[detail::histogram_bin(x, opt.bins)];
        log_sum += std::log(b.value);
        ++log_terms;
      }
    }
  }
  SimulateReport out;
  out.samples = opt.orbits * opt.steps;
  out.histogram = detail::counts_to_density(counts, out.samples);
  out.mean_expanding = log_terms == 0 || log_sum > 0.0;
  return out;
}

}  // namespace betadyn
